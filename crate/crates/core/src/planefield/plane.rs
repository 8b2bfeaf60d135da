use rand::Rng;

use super::Attribute;
use crate::error::{Error, Result};
use crate::geometry::ContractedPoint;

/// Half-width of the uniform initialization interval for plane texels.
pub const INIT_RANGE: f64 = 0.1;

/// Which pair of contracted coordinates indexes a plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaneAxis {
    Xy,
    Xz,
    Yz,
}

impl PlaneAxis {
    pub const ALL: [PlaneAxis; 3] = [PlaneAxis::Xy, PlaneAxis::Xz, PlaneAxis::Yz];

    /// `(column coordinate, row coordinate)` of `p` on this plane.
    pub fn project(self, p: &ContractedPoint) -> (f64, f64) {
        match self {
            PlaneAxis::Xy => (p.x(), p.y()),
            PlaneAxis::Xz => (p.x(), p.z()),
            PlaneAxis::Yz => (p.y(), p.z()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PlaneAxis::Xy => "xy",
            PlaneAxis::Xz => "xz",
            PlaneAxis::Yz => "yz",
        }
    }
}

/// `channels` x `resolution` x `resolution` texels, channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePlane {
    resolution: usize,
    channels: usize,
    values: Vec<f64>,
}

impl FeaturePlane {
    pub fn zeros(resolution: usize, channels: usize) -> Result<Self> {
        Self::from_values(resolution, channels, vec![0.0; channels * resolution * resolution])
    }

    pub fn constant(resolution: usize, channels: usize, value: f64) -> Result<Self> {
        Self::from_values(resolution, channels, vec![value; channels * resolution * resolution])
    }

    pub fn random<R: Rng>(resolution: usize, channels: usize, rng: &mut R) -> Result<Self> {
        let n = channels * resolution * resolution;
        let values = (0..n).map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE)).collect();
        Self::from_values(resolution, channels, values)
    }

    pub fn from_values(resolution: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::invalid(format!("plane resolution {resolution} < 2")));
        }
        if channels < 1 {
            return Err(Error::invalid("plane needs at least one channel"));
        }
        if values.len() != channels * resolution * resolution {
            return Err(Error::invalid(format!(
                "plane value count {} != {channels}x{resolution}x{resolution}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite plane value"));
        }
        Ok(Self {
            resolution,
            channels,
            values,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn texels(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.texels();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.texels();
        &mut self.values[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.values[c * self.texels() + row * self.resolution + col]
    }

    pub fn set(&mut self, c: usize, row: usize, col: usize, v: f64) {
        let n = self.texels();
        self.values[c * n + row * self.resolution + col] = v;
    }
}

/// Bilinear footprint of one sample on one plane: four texel offsets within a
/// channel and their weights (summing to one).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bilinear {
    pub index: [usize; 4],
    pub weight: [f64; 4],
}

impl Bilinear {
    /// Maps `(u, v)` in `[-2, 2]` affinely onto texel centers `[0, R-1]` and
    /// clamps to the edge texels.
    pub fn new(u: f64, v: f64, resolution: usize) -> Self {
        let last = (resolution - 1) as f64;
        let to_texel = |t: f64| ((t + 2.0) * 0.25 * last).clamp(0.0, last);
        let (fx, fy) = (to_texel(u), to_texel(v));
        let x0 = (fx.floor() as usize).min(resolution - 2);
        let y0 = (fy.floor() as usize).min(resolution - 2);
        let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
        let i00 = y0 * resolution + x0;
        Self {
            index: [i00, i00 + 1, i00 + resolution, i00 + resolution + 1],
            weight: [
                (1.0 - tx) * (1.0 - ty),
                tx * (1.0 - ty),
                (1.0 - tx) * ty,
                tx * ty,
            ],
        }
    }

    pub fn sample(&self, channel: &[f64]) -> f64 {
        (0..4).map(|k| self.weight[k] * channel[self.index[k]]).sum()
    }
}

/// Bilinear footprints of one point on the three planes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointStencil(pub [Bilinear; 3]);

impl PointStencil {
    pub fn new(p: &ContractedPoint, resolution: usize) -> Self {
        Self(PlaneAxis::ALL.map(|axis| {
            let (u, v) = axis.project(p);
            Bilinear::new(u, v, resolution)
        }))
    }
}

/// Three planes sharing resolution and channel count, decoded into one
/// attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct TriPlaneGroup {
    pub attribute: Attribute,
    pub planes: [FeaturePlane; 3],
}

impl TriPlaneGroup {
    pub fn new(attribute: Attribute, planes: [FeaturePlane; 3]) -> Result<Self> {
        let (r, c) = (planes[0].resolution, planes[0].channels);
        if planes.iter().any(|p| p.resolution != r || p.channels != c) {
            return Err(Error::invalid("tri-plane group planes differ in shape"));
        }
        Ok(Self { attribute, planes })
    }

    pub fn random<R: Rng>(attribute: Attribute, resolution: usize, channels: usize, rng: &mut R) -> Result<Self> {
        let planes = [
            FeaturePlane::random(resolution, channels, rng)?,
            FeaturePlane::random(resolution, channels, rng)?,
            FeaturePlane::random(resolution, channels, rng)?,
        ];
        Self::new(attribute, planes)
    }

    pub fn resolution(&self) -> usize {
        self.planes[0].resolution
    }

    pub fn channels(&self) -> usize {
        self.planes[0].channels
    }

    /// Hadamard product of the three bilinear samples, per channel.
    pub fn features_at(&self, stencil: &PointStencil, out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate().take(self.channels()) {
            *o = (0..3)
                .map(|k| stencil.0[k].sample(self.planes[k].channel(c)))
                .product();
        }
    }
}

pub fn sample_features(group: &TriPlaneGroup, p: &ContractedPoint) -> Vec<f64> {
    let stencil = PointStencil::new(p, group.resolution());
    let mut out = vec![0.0; group.channels()];
    group.features_at(&stencil, &mut out);
    out
}

/// One tri-plane group per attribute, in [`Attribute::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct TriPlaneField {
    pub groups: [TriPlaneGroup; 4],
    pub sh_degree: usize,
}

impl TriPlaneField {
    pub fn new(groups: [TriPlaneGroup; 4], sh_degree: usize) -> Result<Self> {
        let (r, c) = (groups[0].resolution(), groups[0].channels());
        for (g, attr) in groups.iter().zip(Attribute::ALL) {
            if g.attribute != attr {
                return Err(Error::invalid(format!(
                    "group for {} found where {} expected",
                    g.attribute.name(),
                    attr.name()
                )));
            }
            if g.resolution() != r || g.channels() != c {
                return Err(Error::invalid("tri-plane groups differ in shape"));
            }
        }
        Ok(Self { groups, sh_degree })
    }

    pub fn random<R: Rng>(resolution: usize, channels: usize, sh_degree: usize, rng: &mut R) -> Result<Self> {
        let groups = [
            TriPlaneGroup::random(Attribute::Color, resolution, channels, rng)?,
            TriPlaneGroup::random(Attribute::Scale, resolution, channels, rng)?,
            TriPlaneGroup::random(Attribute::Rotation, resolution, channels, rng)?,
            TriPlaneGroup::random(Attribute::Opacity, resolution, channels, rng)?,
        ];
        Self::new(groups, sh_degree)
    }

    pub fn constant(resolution: usize, channels: usize, sh_degree: usize, value: f64) -> Result<Self> {
        let group = |a| -> Result<TriPlaneGroup> {
            let p = FeaturePlane::constant(resolution, channels, value)?;
            TriPlaneGroup::new(a, [p.clone(), p.clone(), p])
        };
        Self::new(
            [
                group(Attribute::Color)?,
                group(Attribute::Scale)?,
                group(Attribute::Rotation)?,
                group(Attribute::Opacity)?,
            ],
            sh_degree,
        )
    }

    pub fn resolution(&self) -> usize {
        self.groups[0].resolution()
    }

    pub fn channels(&self) -> usize {
        self.groups[0].channels()
    }

    pub fn group(&self, attribute: Attribute) -> &TriPlaneGroup {
        &self.groups[attribute.index()]
    }

    pub fn planes(&self) -> impl Iterator<Item = &FeaturePlane> {
        self.groups.iter().flat_map(|g| g.planes.iter())
    }

    pub fn planes_mut(&mut self) -> impl Iterator<Item = &mut FeaturePlane> {
        self.groups.iter_mut().flat_map(|g| g.planes.iter_mut())
    }

    pub fn parameter_count(&self) -> usize {
        self.planes().map(|p| p.values.len()).sum()
    }

    /// Smallest and largest texel value over every plane.
    pub fn value_range(&self) -> (f64, f64) {
        self.planes()
            .flat_map(|p| p.values.iter().copied())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{contract, Point3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cp(x: f64, y: f64, z: f64) -> ContractedPoint {
        contract(Point3::new(x, y, z)).unwrap()
    }

    #[test]
    fn constant_planes_multiply() {
        let p = FeaturePlane::constant(8, 2, 2.0).unwrap();
        let g = TriPlaneGroup::new(Attribute::Color, [p.clone(), p.clone(), p]).unwrap();
        let f = sample_features(&g, &cp(0.3, -0.7, 0.1));
        assert!(f.iter().all(|v| (v - 8.0).abs() < 1e-12));
    }

    #[test]
    fn zero_plane_absorbs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = FeaturePlane::random(8, 3, &mut rng).unwrap();
        let b = FeaturePlane::random(8, 3, &mut rng).unwrap();
        let z = FeaturePlane::zeros(8, 3).unwrap();
        let g = TriPlaneGroup::new(Attribute::Scale, [a, z, b]).unwrap();
        assert!(sample_features(&g, &cp(0.2, 0.4, -0.9)).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn texel_center_reads_exact_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = 9; // texel spacing 0.5 in contracted units
        let g = TriPlaneGroup::random(Attribute::Opacity, r, 2, &mut rng).unwrap();
        // x = -1.0 -> texel 2, y = 0.5 -> texel 5, z = 1.5 -> texel 7
        let p = ContractedPoint::new_unchecked(Point3::new(-1.0, 0.5, 1.5));
        let f = sample_features(&g, &p);
        for (c, &fc) in f.iter().enumerate() {
            let expect = g.planes[0].get(c, 5, 2) * g.planes[1].get(c, 7, 2) * g.planes[2].get(c, 7, 5);
            assert!((fc - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn edge_samples_clamp() {
        let b = Bilinear::new(2.0, -2.0, 4);
        let mut channel = vec![0.0; 16];
        channel[3] = 5.0; // row 0, col 3
        assert!((b.sample(&channel) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn multilinear_in_one_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = TriPlaneGroup::random(Attribute::Color, 8, 4, &mut rng).unwrap();
        let p = cp(0.33, -0.12, 0.71);
        let base = sample_features(&g, &p);
        let mut scaled = g.clone();
        scaled.planes[1].values_mut().iter_mut().for_each(|v| *v *= -2.5);
        let f = sample_features(&scaled, &p);
        for (a, b) in base.iter().zip(&f) {
            assert!((b - (-2.5) * a).abs() < 1e-15);
        }
    }

    #[test]
    fn interpolation_is_bounded_by_local_texels() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let plane = FeaturePlane::random(16, 1, &mut rng).unwrap();
        for _ in 0..500 {
            let (u, v) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let b = Bilinear::new(u, v, 16);
            let vals = b.index.map(|i| plane.channel(0)[i]);
            let s = b.sample(plane.channel(0));
            let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
            assert!(s >= lo - 1e-15 && s <= hi + 1e-15);
            assert!((b.weight.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(FeaturePlane::zeros(1, 2).is_err());
        assert!(FeaturePlane::zeros(4, 0).is_err());
        assert!(FeaturePlane::from_values(2, 1, vec![0.0, 1.0, f64::NAN, 0.0]).is_err());
        let a = FeaturePlane::zeros(4, 2).unwrap();
        let b = FeaturePlane::zeros(8, 2).unwrap();
        assert!(TriPlaneGroup::new(Attribute::Color, [a.clone(), a, b]).is_err());
    }
}
