use ndarray::Array2;

use crate::error::Result;
use crate::framecodec::{sample_error_bound, CodecSettings, Normalization};
use crate::geometry::Point3;
use crate::planefield::{map_outputs, stencils, Attribute, Decoders, GaussianCloud, TriPlaneField};

/// Per-texel error of a plane after 16-bit normalization and the frame
/// codec, in plane units.
pub fn plane_error_bound(norm: &Normalization, codec: &CodecSettings) -> f64 {
    if norm.is_constant() {
        return 0.0;
    }
    let codec_err = if codec.lossless || codec.backend != crate::framecodec::Backend::Builtin {
        0.0
    } else {
        sample_error_bound(codec.qp)
    };
    norm.sample_step() * (codec_err + 0.5)
}

/// Worst-case deviation of every decoded attribute component when each plane
/// texel may be off by `texel_error`, evaluated around `field` at
/// `positions`. Layout matches [`GaussianCloud::attribute`].
pub fn attribute_error_bounds(
    field: &TriPlaneField,
    decoders: &Decoders,
    positions: &[Point3],
    texel_error: f64,
) -> Result<[Vec<f64>; 4]> {
    let st = stencils(field, positions)?;
    let channels = field.channels();
    let d = texel_error;
    Ok(Attribute::ALL.map(|attr| {
        let group = field.group(attr);
        let decoder = &decoders[attr.index()];
        let gain: f64 = decoder.layer_gains().iter().product();
        let mut x = Array2::zeros((st.len(), channels));
        let mut feature_err = vec![0.0f64; st.len()];
        for (i, s) in st.iter().enumerate() {
            for c in 0..channels {
                let v: [f64; 3] = std::array::from_fn(|k| s.0[k].sample(group.planes[k].channel(c)));
                x[[i, c]] = v[0] * v[1] * v[2];
                // interval bound on the product of three perturbed factors
                let mut bound = (v[0].abs() + d) * (v[1].abs() + d) * (v[2].abs() + d) - (v[0] * v[1] * v[2]).abs();
                bound = bound.max(0.0);
                feature_err[i] = feature_err[i].max(bound);
            }
        }
        let raw = decoder.forward(&x);
        let width = raw.ncols();
        let mut out = Vec::with_capacity(st.len() * width);
        let mut lo = vec![0.0; width];
        let mut hi = vec![0.0; width];
        let mut mid = vec![0.0; width];
        for (i, row) in raw.rows().into_iter().enumerate() {
            let z = row.as_slice().expect("contiguous");
            let delta = feature_err[i] * gain;
            let delta = delta + 1e-9 * (1.0 + z.iter().map(|v| v.abs()).fold(0.0, f64::max));
            match attr {
                Attribute::Rotation => {
                    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let e = if norm > 0.0 { (4.0 * delta / norm).min(2.0) } else { 2.0 };
                    out.extend(std::iter::repeat_n(e, width));
                }
                _ => {
                    // componentwise monotone activations
                    let zl: Vec<f64> = z.iter().map(|v| v - delta).collect();
                    let zh: Vec<f64> = z.iter().map(|v| v + delta).collect();
                    map_outputs(attr, &zl, &mut lo);
                    map_outputs(attr, &zh, &mut hi);
                    map_outputs(attr, z, &mut mid);
                    for j in 0..width {
                        let e = (hi[j] - mid[j]).abs().max((mid[j] - lo[j]).abs());
                        out.push(e * (1.0 + 1e-9) + 1e-12);
                    }
                }
            }
        }
        out
    }))
}

/// Largest per-component violation of `bounds` by `decoded` against
/// `reference`; non-positive means the bound holds everywhere.
pub fn bound_violation(reference: &GaussianCloud, decoded: &GaussianCloud, bounds: &[Vec<f64>; 4]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for attr in Attribute::ALL {
        for ((a, b), e) in reference
            .attribute(attr)
            .iter()
            .zip(decoded.attribute(attr))
            .zip(&bounds[attr.index()])
        {
            worst = worst.max((a - b).abs() - e);
        }
    }
    worst
}
