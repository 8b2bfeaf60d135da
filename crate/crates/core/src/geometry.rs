//! Scene-space geometry: piecewise-projective contraction, 16-bit position
//! quantization and Morton (z-order) keys.

use crate::error::{Error, Result};

/// Largest 16-bit lattice coordinate.
pub const LATTICE_MAX: u16 = u16::MAX;

/// A point in world units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn sup_norm(&self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }
}

/// A point inside the contracted domain `[-2, 2]^3`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContractedPoint(Point3);

impl ContractedPoint {
    /// Wraps coordinates that are already known to be in `[-2, 2]^3`.
    pub fn new_unchecked(p: Point3) -> Self {
        debug_assert!(p.sup_norm() <= 2.0);
        Self(p)
    }

    pub fn point(&self) -> Point3 {
        self.0
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    pub fn z(&self) -> f64 {
        self.0.z
    }
}

/// Piecewise-projective contraction of an unbounded point into the sup-norm
/// ball of radius 2.
///
/// Inside the unit cube the map is the identity. Outside, every axis whose
/// magnitude attains the sup-norm is mapped to `(2 - 1/|x_j|) sign(x_j)` and
/// all remaining axes are divided by the sup-norm.
pub fn contract(p: Point3) -> Result<ContractedPoint> {
    if !p.is_finite() {
        return Err(Error::invalid(format!("non-finite point {p:?}")));
    }
    let norm = p.sup_norm();
    if norm <= 1.0 {
        return Ok(ContractedPoint(p));
    }
    let map = |v: f64| {
        if v.abs() == norm {
            (2.0 - 1.0 / v.abs()) * v.signum()
        } else {
            v / norm
        }
    };
    Ok(ContractedPoint(Point3::new(map(p.x), map(p.y), map(p.z))))
}

/// A position on the 16-bit lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct QuantizedPosition {
    pub qx: u16,
    pub qy: u16,
    pub qz: u16,
}

impl QuantizedPosition {
    pub const fn new(qx: u16, qy: u16, qz: u16) -> Self {
        Self { qx, qy, qz }
    }
}

/// Axis-aligned bounding box shared by a set of quantized positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: [f64; 3],
    /// Per-axis extent; zero marks a degenerate axis mapped to constant 0.
    pub extent: [f64; 3],
}

impl BoundingBox {
    /// Tight box around `points`.
    pub fn fit(points: &[Point3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("cannot fit a bounding box to zero points"));
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            if !p.is_finite() {
                return Err(Error::invalid(format!("non-finite position {p:?}")));
            }
            for (axis, v) in p.to_array().into_iter().enumerate() {
                lo[axis] = lo[axis].min(v);
                hi[axis] = hi[axis].max(v);
            }
        }
        let extent = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        Ok(Self { min: lo, extent })
    }

    pub fn zero_extent(&self) -> [bool; 3] {
        self.extent.map(|e| e == 0.0)
    }

    /// Worst-case dequantization error per axis.
    pub fn max_error(&self) -> [f64; 3] {
        self.extent.map(|e| e / (2.0 * f64::from(LATTICE_MAX)))
    }

    pub fn quantize(&self, p: Point3) -> QuantizedPosition {
        let q = |axis: usize, v: f64| -> u16 {
            let extent = self.extent[axis];
            if extent == 0.0 {
                return 0;
            }
            let t = ((v - self.min[axis]) / extent).clamp(0.0, 1.0);
            // round half up
            (t * f64::from(LATTICE_MAX) + 0.5).floor() as u16
        };
        QuantizedPosition::new(q(0, p.x), q(1, p.y), q(2, p.z))
    }

    pub fn dequantize(&self, q: QuantizedPosition) -> Point3 {
        let d = |axis: usize, v: u16| {
            self.min[axis] + f64::from(v) / f64::from(LATTICE_MAX) * self.extent[axis]
        };
        Point3::new(d(0, q.qx), d(1, q.qy), d(2, q.qz))
    }
}

/// Quantizes positions onto the 16-bit lattice of their tight bounding box.
pub fn quantize_positions(points: &[Point3]) -> Result<(Vec<QuantizedPosition>, BoundingBox)> {
    let bbox = BoundingBox::fit(points)?;
    let q = points.iter().map(|&p| bbox.quantize(p)).collect();
    Ok((q, bbox))
}

/// 48-bit z-order key: bit `3i` holds bit `i` of `qx`, `3i+1` of `qy`,
/// `3i+2` of `qz`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MortonKey(pub u64);

fn spread_bits(v: u16) -> u64 {
    let mut x = u64::from(v);
    x = (x | (x << 16)) & 0x0000_ff00_00ff;
    x = (x | (x << 8)) & 0x00f0_0f00_f00f;
    x = (x | (x << 4)) & 0x0c30_c30c_30c3;
    x = (x | (x << 2)) & 0x2492_4924_9249;
    x
}

fn compact_bits(key: u64) -> u16 {
    let mut x = key & 0x2492_4924_9249;
    x = (x | (x >> 2)) & 0x0c30_c30c_30c3;
    x = (x | (x >> 4)) & 0x00f0_0f00_f00f;
    x = (x | (x >> 8)) & 0x0000_ff00_00ff;
    x = (x | (x >> 16)) & 0xffff;
    x as u16
}

pub fn morton_key(q: QuantizedPosition) -> MortonKey {
    MortonKey(spread_bits(q.qx) | (spread_bits(q.qy) << 1) | (spread_bits(q.qz) << 2))
}

pub fn morton_decode(key: MortonKey) -> QuantizedPosition {
    QuantizedPosition::new(
        compact_bits(key.0),
        compact_bits(key.0 >> 1),
        compact_bits(key.0 >> 2),
    )
}

/// Stable permutation that orders positions by Morton key. Entry `i` of the
/// result is the source index of the `i`-th sorted element.
pub fn morton_order(positions: &[QuantizedPosition]) -> Vec<usize> {
    let keys: Vec<MortonKey> = positions.iter().map(|&q| morton_key(q)).collect();
    let mut perm: Vec<usize> = (0..positions.len()).collect();
    perm.sort_by_key(|&i| keys[i]);
    perm
}

/// Gathers `values` by `perm` (`out[i] = values[perm[i]]`).
pub fn apply_permutation<T: Clone>(values: &[T], perm: &[usize]) -> Vec<T> {
    perm.iter().map(|&i| values[i].clone()).collect()
}
