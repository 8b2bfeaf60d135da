use crate::error::{Error, Result};
use crate::framecodec::bits::ByteReader;
use crate::framecodec::{Backend, LayoutKind, Normalization};
use crate::geometry::BoundingBox;
use crate::planefield::{Attribute, Decoders, Linear, MlpDecoder};
use crate::transform::BlockSpec;
use crate::trainer::ProgressiveSchedule;

use ndarray::{Array1, Array2};

pub const CONTAINER_MAGIC: &[u8; 4] = b"GSPC";
pub const CONTAINER_VERSION: u16 = 1;

const SECTION_HEADER: u8 = 1;
const SECTION_PLANES: u8 = 2;
const SECTION_POSITIONS: u8 = 3;
const SECTION_DECODERS: u8 = 4;
const SECTION_ENTROPY: u8 = 5;

/// Scene-level metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneHeader {
    pub point_count: u64,
    pub bbox: BoundingBox,
    pub sh_degree: usize,
    pub resolution: usize,
    pub channels: usize,
    pub hidden: usize,
    pub layout: LayoutKind,
    pub norm: Normalization,
    /// Positions are contracted before plane lookup.
    pub contracted: bool,
    pub backend: Backend,
    pub qp: u32,
    pub lossless: bool,
    pub q_step: f64,
    pub schedule: ProgressiveSchedule,
}

/// How the plane section stores the field.
#[derive(Debug, Clone, PartialEq)]
pub enum PlaneData {
    /// Builtin-codec frame stream.
    Builtin(Vec<u8>),
    /// Raw little-endian 16-bit frames, handed to an external encoder.
    RawFrames(Vec<u8>),
    /// Exact `f64` plane values, group, plane, channel-major order.
    Exact(Vec<f64>),
}

impl PlaneData {
    fn tag(&self) -> u8 {
        match self {
            PlaneData::Builtin(_) => 0,
            PlaneData::RawFrames(_) => 1,
            PlaneData::Exact(_) => 2,
        }
    }
}

/// How the position section stores coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum PositionData {
    /// Lossless stream of Morton-sorted 16-bit coordinates.
    Coded(Vec<u8>),
    /// Exact `f64` coordinates in original order.
    Exact(Vec<[f64; 3]>),
}

/// Entropy-model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropySection {
    pub block: BlockSpec,
    pub slices: usize,
    pub scales: Vec<f64>,
}

/// Parsed container.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub header: SceneHeader,
    pub planes: PlaneData,
    pub positions: PositionData,
    pub decoders: Decoders,
    pub entropy: EntropySection,
}

/// Byte size of every section including its tag and length prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SizeReport {
    pub preamble: usize,
    pub header: usize,
    pub planes: usize,
    pub positions: usize,
    pub decoders: usize,
    pub entropy: usize,
}

impl SizeReport {
    pub fn total(&self) -> usize {
        self.preamble + self.header + self.planes + self.positions + self.decoders + self.entropy
    }

    /// Rows of the size table, each section counted with its framing.
    pub fn rows(&self) -> [(&'static str, usize); 6] {
        [
            ("feature planes", self.planes),
            ("positions", self.positions),
            ("decoders", self.decoders),
            ("entropy model", self.entropy),
            ("metadata", self.preamble + self.header),
            ("total", self.total()),
        ]
    }
}

const SECTION_FRAMING: usize = 1 + 8;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::invalid(format!("{v} does not fit in 32 bits")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_section(out: &mut Vec<u8>, tag: u8, payload: &[u8]) -> usize {
    out.push(tag);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    SECTION_FRAMING + payload.len()
}

fn backend_code(b: Backend) -> u8 {
    match b {
        Backend::Builtin => 0,
        Backend::ExternalHm => 1,
        Backend::ExternalX265 => 2,
    }
}

fn backend_from(code: u8) -> Option<Backend> {
    match code {
        0 => Some(Backend::Builtin),
        1 => Some(Backend::ExternalHm),
        2 => Some(Backend::ExternalX265),
        _ => None,
    }
}

impl SceneHeader {
    fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.point_count.to_le_bytes());
        for v in self.bbox.min.iter().chain(&self.bbox.extent) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        put_u32(&mut out, self.sh_degree)?;
        put_u32(&mut out, self.resolution)?;
        put_u32(&mut out, self.channels)?;
        put_u32(&mut out, self.hidden)?;
        out.push(self.layout.code());
        out.extend_from_slice(&self.norm.min.to_le_bytes());
        out.extend_from_slice(&self.norm.max.to_le_bytes());
        out.push(self.contracted as u8);
        out.push(backend_code(self.backend));
        out.extend_from_slice(&self.qp.to_le_bytes());
        out.push(self.lossless as u8);
        out.extend_from_slice(&self.q_step.to_le_bytes());
        put_u32(&mut out, self.schedule.starts().len())?;
        for (&t, &l) in self.schedule.starts().iter().zip(self.schedule.counts()) {
            out.extend_from_slice(&t.to_le_bytes());
            put_u32(&mut out, l)?;
        }
        Ok(out)
    }

    fn parse(r: &mut ByteReader<'_>) -> Result<Self> {
        let point_count = r.u64()?;
        let mut v = [0.0; 6];
        for x in &mut v {
            *x = r.f64()?;
        }
        let bbox = BoundingBox {
            min: [v[0], v[1], v[2]],
            extent: [v[3], v[4], v[5]],
        };
        let sh_degree = r.u32()? as usize;
        let resolution = r.u32()? as usize;
        let channels = r.u32()? as usize;
        let hidden = r.u32()? as usize;
        let layout = LayoutKind::from_code(r.u8()?).ok_or_else(|| r.corrupt("unknown frame layout"))?;
        let norm = Normalization {
            min: r.f64()?,
            max: r.f64()?,
        };
        let contracted = r.u8()? != 0;
        let backend = backend_from(r.u8()?).ok_or_else(|| r.corrupt("unknown codec backend"))?;
        let qp = r.u32()?;
        let lossless = r.u8()? != 0;
        let q_step = r.f64()?;
        let stages = r.u32()? as usize;
        if stages > r.remaining() / 12 {
            return Err(r.corrupt("schedule longer than the section"));
        }
        let mut starts = Vec::with_capacity(stages);
        let mut counts = Vec::with_capacity(stages);
        for _ in 0..stages {
            starts.push(r.u64()?);
            counts.push(r.u32()? as usize);
        }
        let schedule = ProgressiveSchedule::new(starts, counts).map_err(|e| r.corrupt(e.to_string()))?;
        if sh_degree > 3 || !(2..=1 << 14).contains(&resolution) || channels == 0 || channels > 1 << 10 || hidden == 0 || hidden > 1 << 14 {
            return Err(r.corrupt("implausible model dimensions"));
        }
        if !(bbox.min.iter().chain(&bbox.extent).all(|v| v.is_finite()) && bbox.extent.iter().all(|&e| e >= 0.0)) {
            return Err(r.corrupt("invalid bounding box"));
        }
        if !(norm.min.is_finite() && norm.max.is_finite() && norm.min <= norm.max) {
            return Err(r.corrupt("invalid normalization range"));
        }
        if !(q_step > 0.0 && q_step.is_finite()) {
            return Err(r.corrupt("invalid quantization step"));
        }
        Ok(Self {
            point_count,
            bbox,
            sh_degree,
            resolution,
            channels,
            hidden,
            layout,
            norm,
            contracted,
            backend,
            qp,
            lossless,
            q_step,
            schedule,
        })
    }

    /// Number of `f64` values in an exact plane section.
    pub fn plane_values(&self) -> usize {
        12 * self.channels * self.resolution * self.resolution
    }

    fn decoder_shapes(&self) -> [(usize, usize, usize); 4] {
        Attribute::ALL.map(|a| (self.channels, self.hidden, a.width(self.sh_degree)))
    }
}

fn decoders_to_bytes(decoders: &Decoders) -> Vec<u8> {
    decoders
        .iter()
        .flat_map(|d| d.parameters())
        .flat_map(|v| (v as f32).to_le_bytes())
        .collect()
}

fn parse_decoders(r: &mut ByteReader<'_>, header: &SceneHeader) -> Result<Decoders> {
    let expected: usize = header
        .decoder_shapes()
        .iter()
        .map(|&(i, h, o)| MlpDecoder::zeros(i, h, o).parameter_count())
        .sum();
    if r.remaining() != expected * 4 {
        return Err(r.corrupt(format!(
            "decoder section holds {} bytes, architecture needs {}",
            r.remaining(),
            expected * 4
        )));
    }
    let mut read_layer = |inputs: usize, outputs: usize| -> Result<Linear> {
        let w: Vec<f64> = (0..inputs * outputs).map(|_| r.f32().map(f64::from)).collect::<Result<_>>()?;
        let b: Vec<f64> = (0..outputs).map(|_| r.f32().map(f64::from)).collect::<Result<_>>()?;
        Ok(Linear {
            weight: Array2::from_shape_vec((inputs, outputs), w).expect("shape"),
            bias: Array1::from(b),
        })
    };
    let mut out = Vec::with_capacity(4);
    for (i, h, o) in header.decoder_shapes() {
        let layers = [read_layer(i, h)?, read_layer(h, h)?, read_layer(h, o)?];
        out.push(MlpDecoder::from_layers(layers)?);
    }
    Ok(out.try_into().expect("four decoders"))
}

impl Container {
    /// Serializes the container and reports section sizes.
    pub fn to_bytes(&self) -> Result<(Vec<u8>, SizeReport)> {
        let mut out = Vec::new();
        out.extend_from_slice(CONTAINER_MAGIC);
        out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        let mut report = SizeReport {
            preamble: out.len(),
            ..SizeReport::default()
        };
        report.header = put_section(&mut out, SECTION_HEADER, &self.header.to_bytes()?);

        let mut planes = vec![self.planes.tag()];
        match &self.planes {
            PlaneData::Builtin(b) | PlaneData::RawFrames(b) => planes.extend_from_slice(b),
            PlaneData::Exact(v) => planes.extend(v.iter().flat_map(|x| x.to_le_bytes())),
        }
        report.planes = put_section(&mut out, SECTION_PLANES, &planes);

        let mut positions = Vec::new();
        match &self.positions {
            PositionData::Coded(b) => {
                positions.push(0);
                positions.extend_from_slice(b);
            }
            PositionData::Exact(p) => {
                positions.push(1);
                positions.extend(p.iter().flatten().flat_map(|x| x.to_le_bytes()));
            }
        }
        report.positions = put_section(&mut out, SECTION_POSITIONS, &positions);
        report.decoders = put_section(&mut out, SECTION_DECODERS, &decoders_to_bytes(&self.decoders));

        let mut entropy = Vec::new();
        put_u32(&mut entropy, self.entropy.block.rows)?;
        put_u32(&mut entropy, self.entropy.block.cols)?;
        put_u32(&mut entropy, self.entropy.slices)?;
        entropy.extend(self.entropy.scales.iter().flat_map(|x| x.to_le_bytes()));
        report.entropy = put_section(&mut out, SECTION_ENTROPY, &entropy);
        Ok((out, report))
    }

    pub fn parse(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(data, 0);
        let magic = r.take(4).map_err(|_| Error::format("preamble", "file shorter than the magic"))?;
        if magic != CONTAINER_MAGIC {
            return Err(Error::format("preamble", "bad magic, not a splat container"));
        }
        let version = r.u16().map_err(|_| Error::format("preamble", "missing version"))?;
        if version != CONTAINER_VERSION {
            return Err(Error::format("preamble", format!("unsupported container version {version}")));
        }

        let header_bytes = section(&mut r, SECTION_HEADER, "header")?;
        let header = within("header", header_bytes, SceneHeader::parse)?;

        let planes = within("planes", section(&mut r, SECTION_PLANES, "planes")?, |r| {
            let tag = r.u8()?;
            let rest = r.take(r.remaining())?;
            match tag {
                0 => Ok(PlaneData::Builtin(rest.to_vec())),
                1 => Ok(PlaneData::RawFrames(rest.to_vec())),
                2 => {
                    if rest.len() != header.plane_values() * 8 {
                        return Err(Error::Corrupt {
                            offset: 0,
                            message: "exact plane section size does not match the header".into(),
                        });
                    }
                    Ok(PlaneData::Exact(
                        rest.chunks(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect(),
                    ))
                }
                _ => Err(r.corrupt("unknown plane storage tag")),
            }
        })?;

        let positions = within("positions", section(&mut r, SECTION_POSITIONS, "positions")?, |r| {
            let tag = r.u8()?;
            let rest = r.take(r.remaining())?;
            match tag {
                0 => Ok(PositionData::Coded(rest.to_vec())),
                1 => {
                    if rest.len() as u64 != header.point_count.saturating_mul(24) {
                        return Err(r.corrupt("exact position section size does not match the point count"));
                    }
                    Ok(PositionData::Exact(
                        rest.chunks(24)
                            .map(|c| std::array::from_fn(|k| f64::from_le_bytes(c[k * 8..k * 8 + 8].try_into().expect("8 bytes"))))
                            .collect(),
                    ))
                }
                _ => Err(r.corrupt("unknown position storage tag")),
            }
        })?;

        let decoders = within("decoders", section(&mut r, SECTION_DECODERS, "decoders")?, |r| parse_decoders(r, &header))?;

        let entropy = within("entropy", section(&mut r, SECTION_ENTROPY, "entropy")?, |r| {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let block = BlockSpec::new(rows, cols).map_err(|e| r.corrupt(e.to_string()))?;
            let slices = r.u32()? as usize;
            if r.remaining() != slices.saturating_mul(block.len()).saturating_mul(8) {
                return Err(r.corrupt("entropy scale count does not match slices x bands"));
            }
            let scales = (0..slices * block.len()).map(|_| r.f64()).collect::<Result<_>>()?;
            Ok(EntropySection { block, slices, scales })
        })?;

        if r.remaining() != 0 {
            return Err(Error::format("trailer", format!("{} unexpected trailing bytes", r.remaining())));
        }
        Ok(Self {
            header,
            planes,
            positions,
            decoders,
            entropy,
        })
    }
}

/// Reads one tagged, length-prefixed section and returns its payload and
/// absolute offset.
fn section<'a>(r: &mut ByteReader<'a>, tag: u8, name: &'static str) -> Result<(&'a [u8], usize)> {
    let at = r.offset();
    let found = r.u8().map_err(|_| Error::format(name, format!("missing section at byte {at}")))?;
    if found != tag {
        return Err(Error::format(name, format!("expected section tag {tag}, found {found} at byte {at}")));
    }
    let len = r.u64().map_err(|_| Error::format(name, "truncated section length"))?;
    let len = usize::try_from(len)
        .ok()
        .filter(|&l| l <= r.remaining())
        .ok_or_else(|| Error::format(name, format!("section length {len} exceeds the file")))?;
    let start = r.offset();
    Ok((r.take(len)?, start))
}

/// Runs a section parser and converts its byte-level errors into format
/// errors naming the section.
fn within<T>(name: &'static str, (payload, base): (&[u8], usize), f: impl FnOnce(&mut ByteReader<'_>) -> Result<T>) -> Result<T> {
    let mut r = ByteReader::new(payload, base);
    let value = f(&mut r).map_err(|e| name_section(name, e))?;
    if r.remaining() != 0 {
        return Err(Error::format(name, format!("{} unparsed bytes at end of section", r.remaining())));
    }
    Ok(value)
}

pub(crate) fn name_section(name: &'static str, e: Error) -> Error {
    match e {
        Error::Corrupt { offset, message } => Error::format(name, format!("at byte {offset}: {message}")),
        Error::InvalidInput(message) => Error::format(name, message),
        other => other,
    }
}
