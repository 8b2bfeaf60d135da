use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{contract, Point3};
use crate::planefield::{Attribute, GaussianCloud};

/// Smooth scalar field on contracted space: a few Gaussian bumps plus one
/// low-frequency plane wave, bounded by 1 in magnitude.
#[derive(Debug, Clone)]
struct SmoothField {
    bumps: Vec<([f64; 3], f64, f64)>,
    wave: ([f64; 3], f64, f64),
}

impl SmoothField {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let bumps = (0..3)
            .map(|_| {
                let center = [0; 3].map(|_| rng.gen_range(-1.5..1.5));
                (center, rng.gen_range(-0.25..0.25), rng.gen_range(0.4..0.9))
            })
            .collect();
        let wave = (
            [0; 3].map(|_| rng.gen_range(-1.5..1.5)),
            rng.gen_range(0.0..std::f64::consts::TAU),
            rng.gen_range(0.1..0.25),
        );
        Self { bumps, wave }
    }

    fn eval(&self, p: [f64; 3]) -> f64 {
        let bumps: f64 = self
            .bumps
            .iter()
            .map(|(c, a, s)| {
                let d2: f64 = (0..3).map(|j| (p[j] - c[j]).powi(2)).sum();
                a * (-d2 / (2.0 * s * s)).exp()
            })
            .sum();
        let (k, phase, amp) = &self.wave;
        bumps + amp * (k[0] * p[0] + k[1] * p[1] + k[2] * p[2] + phase).sin()
    }
}

/// Deterministic synthetic scene: `points` Gaussians, roughly 80% inside the
/// unit cube and the rest out to a radius of 6, with attributes drawn from
/// smooth fields of the contracted position.
pub fn synthetic_scene(points: usize, sh_degree: usize, seed: u64) -> Result<GaussianCloud> {
    if points == 0 {
        return Err(Error::invalid("synthetic scene needs at least one point"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths = Attribute::ALL.map(|a| a.width(sh_degree));
    let fields: Vec<Vec<SmoothField>> = widths
        .iter()
        .map(|&w| (0..w).map(|_| SmoothField::random(&mut rng)).collect())
        .collect();

    let mut positions = Vec::with_capacity(points);
    let mut attrs: [Vec<f64>; 4] = Default::default();
    let dc = 3;
    for _ in 0..points {
        let p = if rng.gen_bool(0.8) {
            Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        } else {
            let r = 6.0;
            Point3::new(rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r..r))
        };
        let c = contract(p)?;
        let q = [c.x(), c.y(), c.z()];
        let f = |a: Attribute, j: usize| fields[a.index()][j].eval(q);

        for j in 0..widths[0] {
            let v = f(Attribute::Color, j);
            attrs[0].push(if j < dc { 0.5 * v } else { 0.1 * v });
        }
        for j in 0..3 {
            attrs[1].push((-4.5 + 1.5 * f(Attribute::Scale, j)).exp());
        }
        let raw = [
            1.0 + 0.5 * f(Attribute::Rotation, 0),
            0.5 * f(Attribute::Rotation, 1),
            0.5 * f(Attribute::Rotation, 2),
            0.5 * f(Attribute::Rotation, 3),
        ];
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        attrs[2].extend(raw.iter().map(|v| v / norm));
        attrs[3].push(1.0 / (1.0 + (-2.0 * f(Attribute::Opacity, 0)).exp()));
        positions.push(p);
    }
    GaussianCloud::new(positions, sh_degree, attrs)
}
