use proptest::prelude::*;

use splatplane::geometry::{
    contract, morton_decode, morton_key, morton_order, quantize_positions, MortonKey, Point3, QuantizedPosition,
};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1.0f64..1.0, -1e6f64..1e6, -1e12f64..1e12]
}

proptest! {
    #[test]
    fn contraction_is_bounded_and_finite(x in finite(), y in finite(), z in finite()) {
        let q = contract(Point3::new(x, y, z)).unwrap().point();
        prop_assert!(q.is_finite());
        prop_assert!(q.sup_norm() <= 2.0);
    }

    #[test]
    fn contraction_is_identity_in_the_unit_cube(x in -1.0f64..=1.0, y in -1.0f64..=1.0, z in -1.0f64..=1.0) {
        let p = Point3::new(x, y, z);
        prop_assert_eq!(contract(p).unwrap().point(), p);
    }

    #[test]
    fn contraction_preserves_octant(x in finite(), y in finite(), z in finite()) {
        let q = contract(Point3::new(x, y, z)).unwrap().point();
        for (a, b) in [(x, q.x), (y, q.y), (z, q.z)] {
            prop_assert!(a * b >= 0.0);
        }
    }

    #[test]
    fn morton_keys_round_trip(qx in any::<u16>(), qy in any::<u16>(), qz in any::<u16>()) {
        let q = QuantizedPosition::new(qx, qy, qz);
        let k = morton_key(q);
        prop_assert!(k.0 < 1 << 48);
        prop_assert_eq!(morton_decode(k), q);
    }

    #[test]
    fn quantization_stays_on_the_lattice(pts in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3), 1..200)) {
        let pts: Vec<Point3> = pts.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect();
        let (q, bbox) = quantize_positions(&pts).unwrap();
        let err = bbox.max_error();
        for (p, q) in pts.iter().zip(&q) {
            let back = bbox.dequantize(*q).to_array();
            for ((a, b), e) in p.to_array().iter().zip(back).zip(err) {
                prop_assert!((a - b).abs() <= e * (1.0 + 1e-9) + 1e-12);
            }
        }
    }

    #[test]
    fn morton_order_is_a_sorting_permutation(pts in prop::collection::vec(any::<(u16, u16, u16)>(), 0..300)) {
        let pts: Vec<QuantizedPosition> = pts.into_iter().map(|(x, y, z)| QuantizedPosition::new(x, y, z)).collect();
        let order = morton_order(&pts);
        let mut seen = order.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..pts.len()).collect::<Vec<_>>());
        let keys: Vec<MortonKey> = order.iter().map(|&i| morton_key(pts[i])).collect();
        prop_assert!(keys.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn hand_examples() {
    let c = contract(Point3::new(4.0, 1.0, 1.0)).unwrap().point();
    assert_eq!(c, Point3::new(1.75, 0.25, 0.25));
    let (q, _) = quantize_positions(&[Point3::new(0.0, 0.0, 0.0), Point3::new(2.0, 2.0, 2.0), Point3::new(1.0, 1.0, 1.0)]).unwrap();
    assert_eq!(q[2], QuantizedPosition::new(32_768, 32_768, 32_768));
    assert_eq!(morton_key(QuantizedPosition::new(1, 0, 0)).0, 1);
    assert_eq!(morton_key(QuantizedPosition::new(0, 1, 0)).0, 2);
    assert_eq!(morton_key(QuantizedPosition::new(0, 0, 1)).0, 4);
    assert_eq!(morton_key(QuantizedPosition::new(3, 3, 3)).0, 63);
}

#[test]
fn non_finite_input_is_rejected() {
    assert!(contract(Point3::new(f64::NAN, 0.0, 0.0)).is_err());
    assert!(quantize_positions(&[Point3::new(0.0, f64::INFINITY, 0.0)]).is_err());
    assert!(quantize_positions(&[]).is_err());
}
