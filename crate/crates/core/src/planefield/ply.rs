//! PLY import/export in the usual 3DGS vertex layout: `x y z nx ny nz
//! f_dc_* f_rest_* opacity scale_* rot_*`, opacity stored as a logit and
//! scales as natural logs.

use std::io::{BufRead, Write};

use super::{Attribute, GaussianCloud};
use crate::error::{Error, Result};
use crate::geometry::Point3;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => f64::from(b[0] as i8),
            Scalar::U8 => f64::from(b[0]),
            Scalar::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Scalar::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Scalar::I32 => f64::from(i32::from_le_bytes(b[..4].try_into().unwrap())),
            Scalar::U32 => f64::from(u32::from_le_bytes(b[..4].try_into().unwrap())),
            Scalar::F32 => f64::from(f32::from_le_bytes(b[..4].try_into().unwrap())),
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, PartialEq)]
enum Encoding {
    Ascii,
    BinaryLittleEndian,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-7, 1.0 - 1e-7);
    (p / (1.0 - p)).ln()
}

fn property_names(sh_degree: usize) -> Vec<String> {
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rest = 3 * ((sh_degree + 1) * (sh_degree + 1) - 1);
    names.extend((0..rest).map(|i| format!("f_rest_{i}")));
    names.push("opacity".into());
    names.extend((0..3).map(|i| format!("scale_{i}")));
    names.extend((0..4).map(|i| format!("rot_{i}")));
    names
}

/// Writes `cloud` as binary little-endian PLY with `float` properties.
pub fn write_ply<W: Write>(cloud: &GaussianCloud, mut out: W) -> Result<()> {
    let names = property_names(cloud.sh_degree);
    writeln!(out, "ply")?;
    writeln!(out, "format binary_little_endian 1.0")?;
    writeln!(out, "element vertex {}", cloud.len())?;
    for n in &names {
        writeln!(out, "property float {n}")?;
    }
    writeln!(out, "end_header")?;

    let k = (cloud.sh_degree + 1) * (cloud.sh_degree + 1);
    let mut row = Vec::with_capacity(names.len());
    for i in 0..cloud.len() {
        row.clear();
        let p = cloud.positions[i];
        row.extend_from_slice(&[p.x, p.y, p.z, 0.0, 0.0, 0.0]);
        let color = cloud.color(i);
        row.extend((0..3).map(|ch| color[ch]));
        for ch in 0..3 {
            row.extend((1..k).map(|coef| color[coef * 3 + ch]));
        }
        row.push(logit(cloud.opacity(i)));
        row.extend(cloud.scale(i).map(f64::ln));
        row.extend(cloud.rotation(i));
        for v in &row {
            out.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a 3DGS-style PLY (ASCII or binary little-endian).
pub fn read_ply<R: BufRead>(mut input: R) -> Result<GaussianCloud> {
    let mut line = String::new();
    let mut next_line = |input: &mut R| -> Result<String> {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Err(Error::format("ply header", "unexpected end of header"));
        }
        Ok(line.trim().to_string())
    };

    if next_line(&mut input)? != "ply" {
        return Err(Error::format("ply header", "missing 'ply' magic"));
    }
    let mut encoding = None;
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut in_vertex = false;
    loop {
        let l = next_line(&mut input)?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => encoding = Some(Encoding::Ascii),
            ["format", "binary_little_endian", _] => encoding = Some(Encoding::BinaryLittleEndian),
            ["format", other, _] => {
                return Err(Error::Unsupported(format!("ply encoding {other}")));
            }
            ["element", "vertex", n] => {
                in_vertex = true;
                count = Some(n.parse::<usize>().map_err(|_| Error::format("ply header", "bad vertex count"))?);
            }
            ["element", ..] => {
                if count.is_some() {
                    // only a leading vertex element is read
                    in_vertex = false;
                } else {
                    return Err(Error::Unsupported("ply elements before vertex".into()));
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(Error::Unsupported("list properties on vertices".into()));
            }
            ["property", ty, name] if in_vertex => {
                let s = Scalar::parse(ty).ok_or_else(|| Error::format("ply header", format!("unknown type {ty}")))?;
                props.push((name.to_string(), s));
            }
            _ => {}
        }
    }
    let encoding = encoding.ok_or_else(|| Error::format("ply header", "missing format line"))?;
    let count = count.ok_or_else(|| Error::format("ply header", "missing vertex element"))?;

    let find = |name: &str| props.iter().position(|(n, _)| n == name);
    let need = |name: &str| find(name).ok_or_else(|| Error::format("ply header", format!("missing property {name}")));
    let rest = props.iter().filter(|(n, _)| n.starts_with("f_rest_")).count();
    let k = rest / 3 + 1;
    let sh_degree = (k as f64).sqrt().round() as usize - 1;
    if (sh_degree + 1) * (sh_degree + 1) != k || rest % 3 != 0 {
        return Err(Error::format("ply header", format!("{rest} f_rest properties do not form an SH basis")));
    }
    let pos_idx = [need("x")?, need("y")?, need("z")?];
    let dc_idx = [need("f_dc_0")?, need("f_dc_1")?, need("f_dc_2")?];
    let rest_idx: Vec<usize> = (0..rest).map(|i| need(&format!("f_rest_{i}"))).collect::<Result<_>>()?;
    let opacity_idx = need("opacity")?;
    let scale_idx = [need("scale_0")?, need("scale_1")?, need("scale_2")?];
    let rot_idx = [need("rot_0")?, need("rot_1")?, need("rot_2")?, need("rot_3")?];

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(count);
    match encoding {
        Encoding::BinaryLittleEndian => {
            let stride: usize = props.iter().map(|(_, s)| s.size()).sum();
            let mut buf = vec![0u8; stride];
            for v in 0..count {
                input
                    .read_exact(&mut buf)
                    .map_err(|_| Error::format("ply body", format!("truncated at vertex {v}")))?;
                let mut off = 0;
                let row = props
                    .iter()
                    .map(|(_, s)| {
                        let x = s.read_le(&buf[off..]);
                        off += s.size();
                        x
                    })
                    .collect();
                rows.push(row);
            }
        }
        Encoding::Ascii => {
            let mut text = String::new();
            input.read_to_string(&mut text)?;
            let mut it = text.split_whitespace();
            for v in 0..count {
                let row = (0..props.len())
                    .map(|_| {
                        it.next()
                            .and_then(|t| t.parse::<f64>().ok())
                            .ok_or_else(|| Error::format("ply body", format!("bad value at vertex {v}")))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                rows.push(row);
            }
        }
    }

    let mut positions = Vec::with_capacity(count);
    let mut attrs: [Vec<f64>; 4] = Default::default();
    for row in &rows {
        positions.push(Point3::new(row[pos_idx[0]], row[pos_idx[1]], row[pos_idx[2]]));
        let color = &mut attrs[Attribute::Color.index()];
        for coef in 0..k {
            for ch in 0..3 {
                color.push(if coef == 0 {
                    row[dc_idx[ch]]
                } else {
                    row[rest_idx[ch * (k - 1) + coef - 1]]
                });
            }
        }
        attrs[Attribute::Scale.index()].extend(scale_idx.iter().map(|&i| row[i].exp()));
        attrs[Attribute::Rotation.index()].extend(rot_idx.iter().map(|&i| row[i]));
        attrs[Attribute::Opacity.index()].push(sigmoid(row[opacity_idx]));
    }
    GaussianCloud::new(positions, sh_degree, attrs)
}
