//! Rate terms: entropy of block-DCT coefficients under a factorized Laplacian
//! model, channel-importance weights, and the L1 sparsity term.

use rand::Rng;

use crate::error::{Error, Result};
use crate::planefield::TriPlaneField;
use crate::transform::{transform_plane_adjoint, transform_plane_with, BlockDct, BlockSpec, CoefficientPlane};

/// Default quantization step of the entropy surrogate.
pub const DEFAULT_Q_STEP: f64 = 256.0;

/// Probability mass floor; a coefficient never costs more than 32 bits.
pub const MIN_MASS_LOG2: f64 = -32.0;

/// Lower bound on fitted Laplacian scales.
pub const MIN_SCALE: f64 = 1e-9;

/// Default cap on channel weights when a channel has zero importance.
pub const DEFAULT_MAX_WEIGHT: f64 = 1e3;

/// Adds i.i.d. uniform noise on `(-1/q_step, 1/q_step)` to every coefficient.
pub fn perturb<R: Rng>(coeffs: &mut [f64], q_step: f64, rng: &mut R) {
    let half = 1.0 / q_step;
    for c in coeffs {
        *c += rng.gen_range(-half..half);
    }
}

/// `-log2` of the zero-mean Laplacian mass on the bin `[v - 1/q, v + 1/q]`,
/// floored at a mass of `2^-32`.
pub fn coefficient_bits(value: f64, scale: f64, q_step: f64) -> f64 {
    coefficient_bits_grad(value, scale, q_step).0
}

/// Bits and their derivative with respect to `value`.
pub fn coefficient_bits_grad(value: f64, scale: f64, q_step: f64) -> (f64, f64) {
    let h = 1.0 / q_step;
    let a = value.abs();
    let (ln_mass, dbits) = if a >= h {
        let ln_mass = 0.5f64.ln() - (a - h) / scale + (-(-2.0 * h / scale).exp_m1()).ln();
        (ln_mass, value.signum() / (scale * std::f64::consts::LN_2))
    } else {
        let lo = -(h - value) / scale;
        let hi = -(h + value) / scale;
        let mass = -0.5 * (lo.exp_m1() + hi.exp_m1());
        let dmass = (-0.5 * lo.exp() + 0.5 * hi.exp()) / scale;
        (mass.ln(), -dmass / (mass * std::f64::consts::LN_2))
    };
    let bits = -ln_mass / std::f64::consts::LN_2;
    if bits >= -MIN_MASS_LOG2 {
        (-MIN_MASS_LOG2, 0.0)
    } else {
        (bits, dbits)
    }
}

/// Quantization step plus one Laplacian scale per (plane slice, DCT band).
///
/// A plane slice is one channel of one plane of one group, indexed
/// `(group * 3 + plane) * channels + channel`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyModel {
    pub q_step: f64,
    pub spec: BlockSpec,
    slices: usize,
    scales: Vec<f64>,
}

impl EntropyModel {
    pub fn new(q_step: f64, spec: BlockSpec, slices: usize) -> Result<Self> {
        Self::from_scales(q_step, spec, slices, vec![1.0; slices * spec.len()])
    }

    pub fn for_field(q_step: f64, spec: BlockSpec, field: &TriPlaneField) -> Result<Self> {
        Self::new(q_step, spec, 12 * field.channels())
    }

    pub fn from_scales(q_step: f64, spec: BlockSpec, slices: usize, scales: Vec<f64>) -> Result<Self> {
        if !(q_step > 0.0 && q_step.is_finite()) {
            return Err(Error::invalid(format!("q_step {q_step} must be positive")));
        }
        if scales.len() != slices * spec.len() {
            return Err(Error::invalid("entropy scale count does not match slices x bands"));
        }
        if scales.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::invalid("entropy scales must be positive"));
        }
        Ok(Self {
            q_step,
            spec,
            slices,
            scales,
        })
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn slice_scales(&self, slice: usize) -> &[f64] {
        let n = self.spec.len();
        &self.scales[slice * n..(slice + 1) * n]
    }

    /// Maximum-likelihood refit: each band's scale becomes the mean absolute
    /// coefficient of that band over the slice.
    pub fn fit_slice(&mut self, slice: usize, coeffs: &CoefficientPlane) {
        let n = self.spec.len();
        let blocks = coeffs.block_count() as f64;
        let mut sums = vec![0.0; n];
        for blk in coeffs.coeffs.chunks(n) {
            for (s, c) in sums.iter_mut().zip(blk) {
                *s += c.abs();
            }
        }
        for (b, s) in self.scales[slice * n..(slice + 1) * n].iter_mut().zip(sums) {
            *b = (s / blocks).max(MIN_SCALE);
        }
    }

    pub fn fit(&mut self, field: &TriPlaneField) {
        let dct = BlockDct::new(self.spec);
        let r = field.resolution();
        let channels = field.channels();
        for (g, group) in field.groups.iter().enumerate() {
            for (p, plane) in group.planes.iter().enumerate() {
                for c in 0..channels {
                    let coeffs = transform_plane_with(&dct, plane.channel(c), r, r);
                    self.fit_slice((g * 3 + p) * channels + c, &coeffs);
                }
            }
        }
    }
}

/// Entropy in bits of one plane channel's DCT coefficients. When `noise` is
/// given the coefficients are perturbed first (training mode). When `grad`
/// is given, `weight * d bits / d texel` is accumulated into it.
#[allow(clippy::too_many_arguments)]
pub fn entropy_of_channel<R: Rng>(
    dct: &BlockDct,
    channel: &[f64],
    resolution: usize,
    scales: &[f64],
    q_step: f64,
    noise: Option<&mut R>,
    weight: f64,
    grad: Option<&mut [f64]>,
) -> f64 {
    let mut coeffs = transform_plane_with(dct, channel, resolution, resolution);
    if let Some(rng) = noise {
        perturb(&mut coeffs.coeffs, q_step, rng);
    }
    let n = dct.spec().len();
    let mut bits = 0.0;
    match grad {
        None => {
            for blk in coeffs.coeffs.chunks(n) {
                for (v, &b) in blk.iter().zip(scales) {
                    bits += coefficient_bits(*v, b, q_step);
                }
            }
        }
        Some(out) => {
            for blk in coeffs.coeffs.chunks_mut(n) {
                for (v, &b) in blk.iter_mut().zip(scales) {
                    let (cost, d) = coefficient_bits_grad(*v, b, q_step);
                    bits += cost;
                    *v = weight * d;
                }
            }
            for (o, g) in out.iter_mut().zip(transform_plane_adjoint(dct, &coeffs)) {
                *o += g;
            }
        }
    }
    bits
}

/// Per-(group, channel) importance scores and the derived entropy weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelImportance {
    /// `scores[group][channel]`
    pub scores: Vec<Vec<f64>>,
    /// `weights[group][channel]`, with `weights[g][0] == 1`.
    pub weights: Vec<Vec<f64>>,
}

impl ChannelImportance {
    /// All-ones weights, used before importance is measured.
    pub fn uniform(groups: usize, channels: usize) -> Self {
        Self {
            scores: vec![vec![1.0; channels]; groups],
            weights: vec![vec![1.0; channels]; groups],
        }
    }

    pub fn from_scores(scores: Vec<Vec<f64>>, max_weight: f64) -> Self {
        let weights = scores.iter().map(|s| channel_weights(s, max_weight)).collect();
        Self { scores, weights }
    }

    pub fn weight(&self, group: usize, channel: usize) -> f64 {
        self.weights[group][channel]
    }
}

/// `w_c = CI_1 / CI_c`, capped to `[1/max_weight, max_weight]`. Zero scores
/// take the cap and log a warning.
pub fn channel_weights(scores: &[f64], max_weight: f64) -> Vec<f64> {
    let Some(&first) = scores.first() else {
        return Vec::new();
    };
    scores
        .iter()
        .enumerate()
        .map(|(c, &ci)| {
            if c == 0 {
                return 1.0;
            }
            if ci <= 0.0 {
                log::warn!("channel {c} has zero importance; weight capped at {max_weight}");
                return max_weight;
            }
            (first / ci).clamp(1.0 / max_weight, max_weight)
        })
        .collect()
}

/// Importance from accumulated energy gradients: `grads[group][plane]` holds
/// `dE/dP` for every texel of that plane (channel-major). The score of a
/// channel is the summed absolute gradient over its three planes divided by
/// `samples`.
pub fn importance_from_gradients(grads: &[[Vec<f64>; 3]], channels: usize, samples: usize, max_weight: f64) -> ChannelImportance {
    let scores = grads
        .iter()
        .map(|planes| {
            (0..channels)
                .map(|c| {
                    planes
                        .iter()
                        .map(|g| {
                            let n = g.len() / channels;
                            g[c * n..(c + 1) * n].iter().map(|v| v.abs()).sum::<f64>()
                        })
                        .sum::<f64>()
                        / samples.max(1) as f64
                })
                .collect()
        })
        .collect();
    ChannelImportance::from_scores(scores, max_weight)
}

/// Weighted entropy of every plane channel in the field (no noise).
pub fn entropy_loss(field: &TriPlaneField, model: &EntropyModel, importance: &ChannelImportance) -> f64 {
    let dct = BlockDct::new(model.spec);
    let r = field.resolution();
    let channels = field.channels();
    let mut total = 0.0;
    for (g, group) in field.groups.iter().enumerate() {
        for (p, plane) in group.planes.iter().enumerate() {
            for c in 0..channels {
                let bits = entropy_of_channel::<rand_chacha::ChaCha8Rng>(
                    &dct,
                    plane.channel(c),
                    r,
                    model.slice_scales((g * 3 + p) * channels + c),
                    model.q_step,
                    None,
                    1.0,
                    None,
                );
                total += importance.weight(g, c) * bits;
            }
        }
    }
    total
}

/// Sum of absolute values of every plane parameter.
pub fn l1_loss(field: &TriPlaneField) -> f64 {
    field.planes().flat_map(|p| p.values().iter()).map(|v| v.abs()).sum()
}
