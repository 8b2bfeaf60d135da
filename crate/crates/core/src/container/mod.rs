//! Single-file container bundling plane and position bitstreams, decoder
//! weights and entropy-model scales, plus the scene encode/decode pipelines.

mod bound;
mod format;

pub use bound::{attribute_error_bounds, bound_violation, plane_error_bound};
pub use format::{
    Container, EntropySection, PlaneData, PositionData, SceneHeader, SizeReport, CONTAINER_MAGIC,
    CONTAINER_VERSION,
};

use crate::error::{Error, Result};
use crate::framecodec::{
    code_positions, decode_frames_builtin, decode_positions, encode_frames_builtin, pack_planes,
    parse_raw_frames, raw_frames, unpack_planes, Backend, CodecSettings, FrameLayout, FramePack,
    LayoutKind, Normalization, PositionPack,
};
use crate::geometry::{apply_permutation, morton_order, BoundingBox, Point3};
use crate::planefield::{check_decoders, predict_cloud, Decoders, FeaturePlane, GaussianCloud, TriPlaneField, TriPlaneGroup, Attribute};
use crate::rdloss::EntropyModel;
use crate::trainer::ProgressiveSchedule;
use format::name_section;

/// Settings of one encode.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeSettings {
    pub codec: CodecSettings,
    pub layout: LayoutKind,
    /// Recorded in the header for reference.
    pub schedule: ProgressiveSchedule,
}

impl Default for EncodeSettings {
    fn default() -> Self {
        Self {
            codec: CodecSettings::default(),
            layout: LayoutKind::PerSlice,
            schedule: ProgressiveSchedule::standard(),
        }
    }
}

/// Output of [`encode_scene`].
#[derive(Debug, Clone)]
pub struct EncodedScene {
    pub bytes: Vec<u8>,
    pub sizes: SizeReport,
    /// Frames handed to the codec, kept for external encoders.
    pub frames: FramePack,
    pub positions: PositionPack,
}

/// Quantizes positions to 16 bits, Morton-sorts them and returns the sorted
/// lattice pack, the box and the dequantized sorted positions.
pub fn prepare_positions(positions: &[Point3]) -> Result<(PositionPack, BoundingBox, Vec<Point3>)> {
    if positions.is_empty() {
        let bbox = BoundingBox {
            min: [0.0; 3],
            extent: [0.0; 3],
        };
        return Ok((PositionPack::new(&[]), bbox, Vec::new()));
    }
    let (q, bbox) = crate::geometry::quantize_positions(positions)?;
    let order = morton_order(&q);
    let sorted = apply_permutation(&q, &order);
    let restored = sorted.iter().map(|&p| bbox.dequantize(p)).collect();
    Ok((PositionPack::new(&sorted), bbox, restored))
}

/// Decoders as stored: every weight rounded to `f32`.
pub fn stored_decoders(decoders: &Decoders) -> Decoders {
    let mut d = decoders.clone();
    d.iter_mut().for_each(|m| m.round_to_f32());
    d
}

/// Encoder-side prediction the decoder reproduces up to plane error:
/// stored decoders evaluated on the unquantized field at the decoded
/// positions.
pub fn reference_cloud(field: &TriPlaneField, decoders: &Decoders, positions: &[Point3]) -> Result<GaussianCloud> {
    let (_, _, restored) = prepare_positions(positions)?;
    predict_cloud(field, &stored_decoders(decoders), &restored)
}

fn check_field(field: &TriPlaneField, decoders: &Decoders, model: &EntropyModel) -> Result<()> {
    check_decoders(field, decoders)?;
    if model.slices() != 12 * field.channels() {
        return Err(Error::invalid("entropy model does not match the field's channel count"));
    }
    Ok(())
}

fn header_for(field: &TriPlaneField, decoders: &Decoders, model: &EntropyModel, settings: &EncodeSettings, point_count: usize, bbox: BoundingBox, norm: Normalization) -> SceneHeader {
    SceneHeader {
        point_count: point_count as u64,
        bbox,
        sh_degree: field.sh_degree,
        resolution: field.resolution(),
        channels: field.channels(),
        hidden: decoders[0].hidden(),
        layout: settings.layout,
        norm,
        contracted: true,
        backend: settings.codec.backend,
        qp: settings.codec.qp,
        lossless: settings.codec.lossless,
        q_step: model.q_step,
        schedule: settings.schedule.clone(),
    }
}

fn entropy_section(model: &EntropyModel) -> EntropySection {
    EntropySection {
        block: model.spec,
        slices: model.slices(),
        scales: model.scales().to_vec(),
    }
}

/// Packs and codes the planes, codes Morton-sorted positions and assembles
/// the container.
pub fn encode_scene(
    field: &TriPlaneField,
    decoders: &Decoders,
    positions: &[Point3],
    model: &EntropyModel,
    settings: &EncodeSettings,
) -> Result<EncodedScene> {
    check_field(field, decoders, model)?;
    if decoders.iter().any(|d| d.hidden() != decoders[0].hidden()) {
        return Err(Error::invalid("decoders must share one hidden width"));
    }
    let frames = pack_planes(field, settings.layout)?;
    let planes = match settings.codec.backend {
        Backend::Builtin => PlaneData::Builtin(encode_frames_builtin(&frames, &settings.codec)?),
        Backend::ExternalHm | Backend::ExternalX265 => PlaneData::RawFrames(raw_frames(&frames.frames, false)),
    };
    let (pack, bbox, _) = prepare_positions(positions)?;
    let container = Container {
        header: header_for(field, decoders, model, settings, positions.len(), bbox, frames.norm),
        planes,
        positions: PositionData::Coded(code_positions(&pack)),
        decoders: stored_decoders(decoders),
        entropy: entropy_section(model),
    };
    let (bytes, sizes) = container.to_bytes()?;
    Ok(EncodedScene {
        bytes,
        sizes,
        frames,
        positions: pack,
    })
}

/// Rebuilds the field stored in a container.
pub fn decode_field(c: &Container) -> Result<TriPlaneField> {
    let h = &c.header;
    let layout = FrameLayout::new(h.layout, h.resolution, h.channels);
    let field = match &c.planes {
        PlaneData::Builtin(bytes) => {
            let pack = decode_frames_builtin(bytes).map_err(|e| name_section("planes", e))?;
            if pack.layout != layout {
                return Err(Error::format("planes", "frame layout disagrees with the header"));
            }
            unpack_planes(&pack, h.sh_degree)?
        }
        PlaneData::RawFrames(bytes) => {
            let (w, hgt) = layout.frame_size();
            let frames = parse_raw_frames(bytes, w, hgt, false)?;
            unpack_planes(&FramePack { layout, norm: h.norm, frames }, h.sh_degree).map_err(|e| name_section("planes", e))?
        }
        PlaneData::Exact(values) => field_from_values(h, values)?,
    };
    Ok(field)
}

fn field_from_values(h: &SceneHeader, values: &[f64]) -> Result<TriPlaneField> {
    let per_plane = h.channels * h.resolution * h.resolution;
    if values.len() != 12 * per_plane {
        return Err(Error::format("planes", "exact plane section size does not match the header"));
    }
    let mut chunks = values.chunks(per_plane);
    let mut groups = Vec::with_capacity(4);
    for attr in Attribute::ALL {
        let mut planes = Vec::with_capacity(3);
        for _ in 0..3 {
            let v = chunks.next().expect("sized above").to_vec();
            planes.push(FeaturePlane::from_values(h.resolution, h.channels, v)?);
        }
        let planes: [FeaturePlane; 3] = planes.try_into().expect("three planes");
        groups.push(TriPlaneGroup::new(attr, planes)?);
    }
    TriPlaneField::new(groups.try_into().expect("four groups"), h.sh_degree)
}

/// Positions stored in a container: Morton order for coded sections, the
/// original order for exact ones.
pub fn decode_positions_of(c: &Container) -> Result<Vec<Point3>> {
    let h = &c.header;
    let points = match &c.positions {
        PositionData::Coded(bytes) => {
            let pack = decode_positions(bytes).map_err(|e| name_section("positions", e))?;
            pack.positions().into_iter().map(|q| h.bbox.dequantize(q)).collect::<Vec<_>>()
        }
        PositionData::Exact(p) => p.iter().map(|&a| Point3::from_array(a)).collect(),
    };
    if points.len() as u64 != h.point_count {
        return Err(Error::format("positions", "point count disagrees with the header"));
    }
    Ok(points)
}

/// Parses a container and predicts every attribute at the stored positions.
pub fn decode_scene(bytes: &[u8]) -> Result<GaussianCloud> {
    let c = Container::parse(bytes)?;
    let field = decode_field(&c)?;
    let positions = decode_positions_of(&c)?;
    predict_cloud(&field, &c.decoders, &positions)
}

/// Trained model state saved between `train` and `encode`.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub field: TriPlaneField,
    pub decoders: Decoders,
    pub model: EntropyModel,
    pub positions: Vec<Point3>,
    pub schedule: ProgressiveSchedule,
}

/// Stores planes and positions exactly (decoder weights as `f32`).
pub fn save_checkpoint(cp: &Checkpoint) -> Result<Vec<u8>> {
    check_field(&cp.field, &cp.decoders, &cp.model)?;
    let settings = EncodeSettings {
        schedule: cp.schedule.clone(),
        ..EncodeSettings::default()
    };
    let (min, max) = cp.field.value_range();
    let bbox = if cp.positions.is_empty() {
        BoundingBox {
            min: [0.0; 3],
            extent: [0.0; 3],
        }
    } else {
        BoundingBox::fit(&cp.positions)?
    };
    let container = Container {
        header: header_for(&cp.field, &cp.decoders, &cp.model, &settings, cp.positions.len(), bbox, Normalization { min, max }),
        planes: PlaneData::Exact(cp.field.planes().flat_map(|p| p.values().iter().copied()).collect()),
        positions: PositionData::Exact(cp.positions.iter().map(|p| p.to_array()).collect()),
        decoders: stored_decoders(&cp.decoders),
        entropy: entropy_section(&cp.model),
    };
    Ok(container.to_bytes()?.0)
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let c = Container::parse(bytes)?;
    if !matches!(c.planes, PlaneData::Exact(_)) || !matches!(c.positions, PositionData::Exact(_)) {
        return Err(Error::format("planes", "container is an encoded scene, not a checkpoint"));
    }
    let field = decode_field(&c)?;
    let positions = decode_positions_of(&c)?;
    let model = EntropyModel::from_scales(c.header.q_step, c.entropy.block, c.entropy.slices, c.entropy.scales.clone())
        .map_err(|e| name_section("entropy", e))?;
    Ok(Checkpoint {
        field,
        decoders: c.decoders,
        model,
        positions,
        schedule: c.header.schedule,
    })
}
