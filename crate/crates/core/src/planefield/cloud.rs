use ndarray::Array2;

use super::{Attribute, Decoders, PointStencil, TriPlaneField};
use crate::error::{Error, Result};
use crate::geometry::{apply_permutation, contract, ContractedPoint, Point3};

/// Log-scale interval targeted by the scale activation.
pub const LOG_SCALE_MIN: f64 = -10.0;
pub const LOG_SCALE_MAX: f64 = -0.1;

/// Gaussian splats: positions plus per-point attributes, each stored flat
/// (`N x width`) in [`Attribute::ALL`] order.
///
/// Colors hold `(D+1)^2` SH coefficients per point, coefficient-major
/// (`[k * 3 + rgb]`). Scales are positive, rotations are `(w, x, y, z)`
/// quaternions, opacities lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCloud {
    pub positions: Vec<Point3>,
    pub sh_degree: usize,
    attrs: [Vec<f64>; 4],
}

impl GaussianCloud {
    pub fn empty(sh_degree: usize) -> Self {
        Self {
            positions: Vec::new(),
            sh_degree,
            attrs: Default::default(),
        }
    }

    pub fn new(positions: Vec<Point3>, sh_degree: usize, attrs: [Vec<f64>; 4]) -> Result<Self> {
        let n = positions.len();
        for attr in Attribute::ALL {
            let expect = n * attr.width(sh_degree);
            if attrs[attr.index()].len() != expect {
                return Err(Error::invalid(format!(
                    "{} has {} values, expected {expect}",
                    attr.name(),
                    attrs[attr.index()].len()
                )));
            }
        }
        let cloud = Self {
            positions,
            sh_degree,
            attrs,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn attribute(&self, attr: Attribute) -> &[f64] {
        &self.attrs[attr.index()]
    }

    pub fn attribute_of(&self, attr: Attribute, i: usize) -> &[f64] {
        let w = attr.width(self.sh_degree);
        &self.attrs[attr.index()][i * w..(i + 1) * w]
    }

    pub fn color(&self, i: usize) -> &[f64] {
        self.attribute_of(Attribute::Color, i)
    }

    pub fn scale(&self, i: usize) -> [f64; 3] {
        let s = self.attribute_of(Attribute::Scale, i);
        [s[0], s[1], s[2]]
    }

    pub fn rotation(&self, i: usize) -> [f64; 4] {
        let q = self.attribute_of(Attribute::Rotation, i);
        [q[0], q[1], q[2], q[3]]
    }

    pub fn opacity(&self, i: usize) -> f64 {
        self.attrs[Attribute::Opacity.index()][i]
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.positions.iter().find(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("non-finite position {p:?}")));
        }
        if self.attrs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite attribute value"));
        }
        if self.attribute(Attribute::Scale).iter().any(|&s| s <= 0.0) {
            return Err(Error::invalid("scales must be strictly positive"));
        }
        if self
            .attribute(Attribute::Opacity)
            .iter()
            .any(|o| !(0.0..=1.0).contains(o))
        {
            return Err(Error::invalid("opacities must lie in [0, 1]"));
        }
        if self
            .attribute(Attribute::Rotation)
            .chunks(4)
            .any(|q| q.iter().all(|&v| v == 0.0))
        {
            return Err(Error::invalid("zero quaternion"));
        }
        Ok(())
    }

    /// Reorders every per-point array so that entry `i` becomes entry `perm[i]`
    /// of the original.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let attrs = Attribute::ALL.map(|attr| {
            let w = attr.width(self.sh_degree);
            let src = self.attribute(attr);
            perm.iter()
                .flat_map(|&i| src[i * w..(i + 1) * w].iter().copied())
                .collect()
        });
        Self {
            positions: apply_permutation(&self.positions, perm),
            sh_degree: self.sh_degree,
            attrs,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Applies the attribute-specific output activation to one raw decoder row.
pub fn map_outputs(attr: Attribute, raw: &[f64], out: &mut [f64]) {
    match attr {
        Attribute::Color => out.copy_from_slice(raw),
        Attribute::Opacity => out[0] = sigmoid(raw[0]),
        Attribute::Scale => {
            for (o, &z) in out.iter_mut().zip(raw) {
                *o = (LOG_SCALE_MIN + (LOG_SCALE_MAX - LOG_SCALE_MIN) * sigmoid(z)).exp();
            }
        }
        Attribute::Rotation => {
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (o, &r) in out.iter_mut().zip(raw) {
                    *o = r / norm;
                }
            } else {
                out.copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
            }
        }
    }
}

/// Chain rule through [`map_outputs`]: writes `d loss / d raw`.
pub fn map_outputs_backward(attr: Attribute, raw: &[f64], mapped: &[f64], grad_mapped: &[f64], grad_raw: &mut [f64]) {
    match attr {
        Attribute::Color => grad_raw.copy_from_slice(grad_mapped),
        Attribute::Opacity => {
            let s = mapped[0];
            grad_raw[0] = grad_mapped[0] * s * (1.0 - s);
        }
        Attribute::Scale => {
            for k in 0..raw.len() {
                let s = sigmoid(raw[k]);
                grad_raw[k] = grad_mapped[k] * mapped[k] * (LOG_SCALE_MAX - LOG_SCALE_MIN) * s * (1.0 - s);
            }
        }
        Attribute::Rotation => {
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                let dot: f64 = mapped.iter().zip(grad_mapped).map(|(q, g)| q * g).sum();
                for k in 0..raw.len() {
                    grad_raw[k] = (grad_mapped[k] - mapped[k] * dot) / norm;
                }
            } else {
                grad_raw.iter_mut().for_each(|g| *g = 0.0);
            }
        }
    }
}

/// Decoded attributes of one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Attributes {
    pub color: Vec<f64>,
    pub scale: [f64; 3],
    pub rotation: [f64; 4],
    pub opacity: f64,
}

pub fn decode_attributes(field: &TriPlaneField, decoders: &Decoders, p: &ContractedPoint) -> Attributes {
    let stencil = PointStencil::new(p, field.resolution());
    let mut feature = vec![0.0; field.channels()];
    let mut decode = |attr: Attribute| {
        field.group(attr).features_at(&stencil, &mut feature);
        let raw = decoders[attr.index()].forward_one(&feature);
        let mut out = vec![0.0; raw.len()];
        map_outputs(attr, &raw, &mut out);
        out
    };
    let color = decode(Attribute::Color);
    let scale = decode(Attribute::Scale);
    let rotation = decode(Attribute::Rotation);
    let opacity = decode(Attribute::Opacity);
    Attributes {
        color,
        scale: [scale[0], scale[1], scale[2]],
        rotation: [rotation[0], rotation[1], rotation[2], rotation[3]],
        opacity: opacity[0],
    }
}

pub(crate) fn stencils(field: &TriPlaneField, positions: &[Point3]) -> Result<Vec<PointStencil>> {
    positions
        .iter()
        .map(|&p| Ok(PointStencil::new(&contract(p)?, field.resolution())))
        .collect()
}

/// Feature matrix (`N x C`) of one group at precomputed stencils.
pub(crate) fn feature_matrix(field: &TriPlaneField, attr: Attribute, stencils: &[PointStencil]) -> Array2<f64> {
    let c = field.channels();
    let group = field.group(attr);
    let mut x = Array2::zeros((stencils.len(), c));
    for (mut row, st) in x.rows_mut().into_iter().zip(stencils) {
        group.features_at(st, row.as_slice_mut().expect("standard layout"));
    }
    x
}

/// Contracts every position and decodes its attributes. Positions pass
/// through unchanged.
pub fn predict_cloud(field: &TriPlaneField, decoders: &Decoders, positions: &[Point3]) -> Result<GaussianCloud> {
    check_decoders(field, decoders)?;
    let st = stencils(field, positions)?;
    let attrs = Attribute::ALL.map(|attr| {
        let raw = decoders[attr.index()].forward(&feature_matrix(field, attr, &st));
        let mut out = Array2::zeros(raw.dim());
        for (r, mut o) in raw.rows().into_iter().zip(out.rows_mut()) {
            map_outputs(attr, r.as_slice().expect("contiguous"), o.as_slice_mut().expect("contiguous"));
        }
        out.into_raw_vec_and_offset().0
    });
    Ok(GaussianCloud {
        positions: positions.to_vec(),
        sh_degree: field.sh_degree,
        attrs,
    })
}

pub(crate) fn check_decoders(field: &TriPlaneField, decoders: &Decoders) -> Result<()> {
    for attr in Attribute::ALL {
        let d = &decoders[attr.index()];
        if d.inputs() != field.channels() || d.outputs() != attr.width(field.sh_degree) {
            return Err(Error::invalid(format!(
                "{} decoder is {}->{}, field needs {}->{}",
                attr.name(),
                d.inputs(),
                d.outputs(),
                field.channels(),
                attr.width(field.sh_degree)
            )));
        }
    }
    Ok(())
}
