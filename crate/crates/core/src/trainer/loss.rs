use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::planefield::{
    check_decoders, map_outputs, map_outputs_backward, stencils, Attribute, Decoders, GaussianCloud,
    MlpDecoder, MlpGrad, PointStencil, TriPlaneField, TriPlaneGroup,
};
use crate::rdloss::{entropy_of_channel, l1_loss, ChannelImportance, EntropyModel};
use crate::transform::BlockDct;

/// Reference cloud the field is regressed onto.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateTarget {
    cloud: GaussianCloud,
}

impl SurrogateTarget {
    pub fn new(cloud: GaussianCloud) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::invalid("target cloud has no points"));
        }
        cloud.validate()?;
        for attr in Attribute::ALL {
            if cloud.attribute(attr).iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("target {} has non-finite values", attr.name())));
            }
        }
        Ok(Self { cloud })
    }

    pub fn cloud(&self) -> &GaussianCloud {
        &self.cloud
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }
}

/// Coefficients of the regularizers in the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossWeights {
    pub lambda_ent: f64,
    pub lambda_l1: f64,
}

/// Components of one loss evaluation. `entropy_bits` is the importance-weighted
/// bit estimate, zero when the entropy term is off.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub energy: f64,
    pub entropy_bits: f64,
    pub l1: f64,
    pub total: f64,
}

impl LossParts {
    pub fn is_finite(&self) -> bool {
        self.energy.is_finite() && self.entropy_bits.is_finite() && self.l1.is_finite() && self.total.is_finite()
    }
}

/// Gradient of one group: plane texels (channel-major, like the planes) and
/// decoder parameters.
#[derive(Debug, Clone)]
pub struct GroupGradient {
    pub planes: [Vec<f64>; 3],
    pub decoder: MlpGrad,
}

/// Gradient of the loss with respect to every trainable parameter, indexed by
/// [`Attribute::index`].
#[derive(Debug, Clone)]
pub struct FieldGradient {
    pub groups: Vec<GroupGradient>,
}

/// Attribute regression error of one group: mean over points and components
/// of the squared residual between activated predictions and the target.
/// With `want_grad` the energy gradient is returned too.
pub(crate) fn group_energy(
    group: &TriPlaneGroup,
    decoder: &MlpDecoder,
    stencils: &[PointStencil],
    target: &[f64],
    want_grad: bool,
) -> (f64, Option<GroupGradient>) {
    let attr = group.attribute;
    let n = stencils.len();
    let channels = group.channels();
    let width = decoder.outputs();

    // samples[(point * 3 + plane) * C + c]
    let mut samples = vec![0.0; n * 3 * channels];
    let mut x = Array2::zeros((n, channels));
    for (i, st) in stencils.iter().enumerate() {
        for k in 0..3 {
            for c in 0..channels {
                samples[(i * 3 + k) * channels + c] = st.0[k].sample(group.planes[k].channel(c));
            }
        }
        for c in 0..channels {
            x[[i, c]] = (0..3).map(|k| samples[(i * 3 + k) * channels + c]).product();
        }
    }

    let trace = decoder.forward_trace(x);
    let norm = (n * width) as f64;
    let mut mapped = vec![0.0; width];
    let mut grad_raw = Array2::zeros((n, width));
    let mut energy = 0.0;
    let mut grad_mapped = vec![0.0; width];
    for (i, raw) in trace.output.rows().into_iter().enumerate() {
        let raw = raw.as_slice().expect("contiguous");
        map_outputs(attr, raw, &mut mapped);
        let t = &target[i * width..(i + 1) * width];
        for j in 0..width {
            let r = mapped[j] - t[j];
            energy += r * r;
            grad_mapped[j] = 2.0 * r / norm;
        }
        if want_grad {
            let mut row = grad_raw.row_mut(i);
            map_outputs_backward(attr, raw, &mapped, &grad_mapped, row.as_slice_mut().expect("contiguous"));
        }
    }
    energy /= norm;
    if !want_grad {
        return (energy, None);
    }

    let (decoder_grad, dx) = decoder.backward(&trace, &grad_raw);
    let texels = group.planes[0].texels();
    let mut planes: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; channels * texels]);
    for (i, st) in stencils.iter().enumerate() {
        for c in 0..channels {
            let d = dx[[i, c]];
            if d == 0.0 {
                continue;
            }
            let s = |k: usize| samples[(i * 3 + k) * channels + c];
            let partial = [d * s(1) * s(2), d * s(0) * s(2), d * s(0) * s(1)];
            for k in 0..3 {
                let bl = &st.0[k];
                let out = &mut planes[k][c * texels..(c + 1) * texels];
                for tap in 0..4 {
                    out[bl.index[tap]] += bl.weight[tap] * partial[k];
                }
            }
        }
    }
    (
        energy,
        Some(GroupGradient {
            planes,
            decoder: decoder_grad,
        }),
    )
}

/// Sum over groups of the per-group attribute regression error at the
/// target positions.
pub fn surrogate_energy(field: &TriPlaneField, decoders: &Decoders, target: &SurrogateTarget) -> Result<f64> {
    check_decoders(field, decoders)?;
    let st = stencils(field, &target.cloud.positions)?;
    Ok(Attribute::ALL
        .iter()
        .map(|&attr| {
            group_energy(
                field.group(attr),
                &decoders[attr.index()],
                &st,
                target.cloud.attribute(attr),
                false,
            )
            .0
        })
        .sum())
}

/// Everything needed to evaluate the total loss besides parameters.
pub(crate) struct LossContext<'a> {
    pub stencils: &'a [PointStencil],
    pub target: &'a SurrogateTarget,
    pub weights: LossWeights,
    pub model: &'a EntropyModel,
    pub importance: &'a ChannelImportance,
    pub entropy_on: bool,
}

/// Evaluates the total loss of one group. `noise` selects training mode for
/// the entropy term. The returned energy-only plane gradient (before
/// regularizers) feeds channel importance.
pub(crate) fn group_loss(
    ctx: &LossContext<'_>,
    dct: &BlockDct,
    g: usize,
    group: &TriPlaneGroup,
    decoder: &MlpDecoder,
    mut noise: Option<&mut ChaCha8Rng>,
    want_grad: bool,
) -> (LossParts, Option<GroupGradient>, Option<[Vec<f64>; 3]>) {
    let attr = group.attribute;
    let (energy, grad) = group_energy(group, decoder, ctx.stencils, ctx.target.cloud.attribute(attr), want_grad);
    let l1: f64 = group.planes.iter().flat_map(|p| p.values()).map(|v| v.abs()).sum();
    let mut energy_grad = None;
    let mut grad = grad;
    if let Some(gr) = grad.as_mut() {
        energy_grad = Some(gr.planes.clone());
        if ctx.weights.lambda_l1 != 0.0 {
            for (gp, p) in gr.planes.iter_mut().zip(&group.planes) {
                for (gv, &v) in gp.iter_mut().zip(p.values()) {
                    *gv += ctx.weights.lambda_l1 * sign(v);
                }
            }
        }
    }

    let mut bits = 0.0;
    if ctx.entropy_on {
        let r = group.resolution();
        let channels = group.channels();
        let texels = r * r;
        for (p, plane) in group.planes.iter().enumerate() {
            for c in 0..channels {
                let w = ctx.importance.weight(g, c);
                let slice = (g * 3 + p) * channels + c;
                let out = grad
                    .as_mut()
                    .map(|gr| &mut gr.planes[p][c * texels..(c + 1) * texels]);
                bits += w * entropy_of_channel(
                    dct,
                    plane.channel(c),
                    r,
                    ctx.model.slice_scales(slice),
                    ctx.model.q_step,
                    noise.as_deref_mut(),
                    ctx.weights.lambda_ent * w,
                    out,
                );
            }
        }
    }

    let mut total = energy + ctx.weights.lambda_l1 * l1;
    if ctx.entropy_on {
        total += ctx.weights.lambda_ent * bits;
    }
    (
        LossParts {
            energy,
            entropy_bits: bits,
            l1,
            total,
        },
        grad,
        energy_grad,
    )
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn add_parts(a: LossParts, b: LossParts) -> LossParts {
    LossParts {
        energy: a.energy + b.energy,
        entropy_bits: a.entropy_bits + b.entropy_bits,
        l1: a.l1 + b.l1,
        total: a.total + b.total,
    }
}

/// Deterministic total loss: surrogate energy, plus `lambda_l1` times the L1
/// norm of the planes, plus `lambda_ent` times the weighted entropy once
/// `iteration >= entropy_start`.
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    field: &TriPlaneField,
    decoders: &Decoders,
    target: &SurrogateTarget,
    weights: LossWeights,
    model: &EntropyModel,
    importance: &ChannelImportance,
    iteration: u64,
    entropy_start: u64,
) -> Result<LossParts> {
    Ok(loss_and_gradient(field, decoders, target, weights, model, importance, iteration >= entropy_start, false)?.0)
}

/// Total loss (without entropy noise) and, with `want_grad`, its analytic
/// gradient.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_gradient(
    field: &TriPlaneField,
    decoders: &Decoders,
    target: &SurrogateTarget,
    weights: LossWeights,
    model: &EntropyModel,
    importance: &ChannelImportance,
    entropy_on: bool,
    want_grad: bool,
) -> Result<(LossParts, Option<FieldGradient>)> {
    check_decoders(field, decoders)?;
    if entropy_on && model.slices() != 12 * field.channels() {
        return Err(Error::invalid("entropy model does not match the field's channel count"));
    }
    let st = stencils(field, &target.cloud.positions)?;
    let ctx = LossContext {
        stencils: &st,
        target,
        weights,
        model,
        importance,
        entropy_on,
    };
    let dct = BlockDct::new(model.spec);
    let mut parts = LossParts::default();
    let mut groups = Vec::new();
    for (g, group) in field.groups.iter().enumerate() {
        let (p, grad, _) = group_loss(&ctx, &dct, g, group, &decoders[g], None, want_grad);
        parts = add_parts(parts, p);
        groups.extend(grad);
    }
    debug_assert!((parts.l1 - l1_loss(field)).abs() <= 1e-9 * (1.0 + parts.l1));
    Ok((parts, want_grad.then_some(FieldGradient { groups })))
}
