use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splatplane::geometry::Point3;
use splatplane::planefield::ply::{read_ply, write_ply};
use splatplane::planefield::{map_outputs, predict_cloud, Attribute, Decoders, MlpDecoder, TriPlaneField};
use splatplane::trainer::synthetic_scene;

fn model(seed: u64, sh: usize) -> (TriPlaneField, Decoders) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field = TriPlaneField::random(8, 3, sh, &mut rng).unwrap();
    let decoders = Attribute::ALL.map(|a| MlpDecoder::random(3, 16, a.width(sh), &mut rng));
    (field, decoders)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn predictions_satisfy_attribute_invariants(seed in any::<u64>(), sh in 0usize..3) {
        let (field, decoders) = model(seed, sh);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let pts: Vec<Point3> = (0..50)
            .map(|_| Point3::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)))
            .collect();
        let cloud = predict_cloud(&field, &decoders, &pts).unwrap();
        cloud.validate().unwrap();
        for i in 0..cloud.len() {
            let o = cloud.opacity(i);
            prop_assert!((0.0..=1.0).contains(&o));
            prop_assert!(cloud.scale(i).iter().all(|&s| s > 0.0));
            let q = cloud.rotation(i);
            let n: f64 = q.iter().map(|v| v * v).sum();
            prop_assert!((n - 1.0).abs() < 1e-9);
            prop_assert_eq!(cloud.color(i).len(), 3 * (sh + 1) * (sh + 1));
        }
    }
}

#[test]
fn predictions_are_deterministic() {
    let (field, decoders) = model(4, 1);
    let pts: Vec<Point3> = synthetic_scene(100, 0, 2).unwrap().positions;
    assert_eq!(
        predict_cloud(&field, &decoders, &pts).unwrap(),
        predict_cloud(&field, &decoders, &pts).unwrap()
    );
}

#[test]
fn zero_scale_preactivation() {
    let mut out = [0.0; 3];
    map_outputs(Attribute::Scale, &[0.0; 3], &mut out);
    for v in out {
        assert!((v - (-5.05f64).exp()).abs() < 1e-15);
    }
}

#[test]
fn ply_round_trip_of_synthetic_scene() {
    let cloud = synthetic_scene(64, 2, 5).unwrap();
    let mut buf = Vec::new();
    write_ply(&cloud, &mut buf).unwrap();
    let back = read_ply(std::io::Cursor::new(buf)).unwrap();
    assert_eq!(back.len(), cloud.len());
    assert_eq!(back.sh_degree, 2);
    for attr in Attribute::ALL {
        for (a, b) in cloud.attribute(attr).iter().zip(back.attribute(attr)) {
            assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()), "{attr:?}: {a} vs {b}");
        }
    }
}

#[test]
fn mismatched_shapes_are_rejected() {
    let (field, mut decoders) = model(1, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    decoders[3] = MlpDecoder::random(3, 16, 2, &mut rng);
    assert!(predict_cloud(&field, &decoders, &[Point3::new(0.0, 0.0, 0.0)]).is_err());
    assert!(TriPlaneField::random(1, 2, 0, &mut rng).is_err());
}
