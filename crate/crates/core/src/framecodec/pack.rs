use crate::error::{Error, Result};
use crate::planefield::{Attribute, FeaturePlane, TriPlaneField, TriPlaneGroup};

pub const SAMPLE_MAX: f64 = 65_535.0;

/// How plane slices map onto frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LayoutKind {
    /// One `R x R` frame per (group, plane, channel).
    #[default]
    PerSlice,
    /// One `3R x R` frame per (group, channel) with the three planes side by
    /// side.
    Tiled,
}

impl LayoutKind {
    pub fn code(self) -> u8 {
        match self {
            LayoutKind::PerSlice => 0,
            LayoutKind::Tiled => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(LayoutKind::PerSlice),
            1 => Some(LayoutKind::Tiled),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LayoutKind::PerSlice => "per-slice",
            LayoutKind::Tiled => "tiled",
        }
    }
}

/// Placement of every plane slice of a field with `channels` channels at
/// `resolution` into frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    pub kind: LayoutKind,
    pub resolution: usize,
    pub channels: usize,
}

impl FrameLayout {
    pub fn new(kind: LayoutKind, resolution: usize, channels: usize) -> Self {
        Self {
            kind,
            resolution,
            channels,
        }
    }

    pub fn frame_count(&self) -> usize {
        match self.kind {
            LayoutKind::PerSlice => 12 * self.channels,
            LayoutKind::Tiled => 4 * self.channels,
        }
    }

    /// `(width, height)` of every frame.
    pub fn frame_size(&self) -> (usize, usize) {
        match self.kind {
            LayoutKind::PerSlice => (self.resolution, self.resolution),
            LayoutKind::Tiled => (3 * self.resolution, self.resolution),
        }
    }

    /// Frame index and column offset of one slice.
    pub fn slot(&self, group: usize, plane: usize, channel: usize) -> (usize, usize) {
        match self.kind {
            LayoutKind::PerSlice => ((group * 3 + plane) * self.channels + channel, 0),
            LayoutKind::Tiled => (group * self.channels + channel, plane * self.resolution),
        }
    }
}

/// Global affine normalization of plane values onto 16-bit samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
}

impl Normalization {
    pub fn is_constant(&self) -> bool {
        self.min == self.max
    }

    /// Round-half-up onto `[0, 65535]`; constant packs map to 0.
    pub fn quantize(&self, v: f64) -> u16 {
        if self.is_constant() {
            return 0;
        }
        ((v - self.min) / (self.max - self.min) * SAMPLE_MAX + 0.5)
            .floor()
            .clamp(0.0, SAMPLE_MAX) as u16
    }

    pub fn dequantize(&self, s: u16) -> f64 {
        if self.is_constant() {
            return self.min;
        }
        self.min + f64::from(s) / SAMPLE_MAX * (self.max - self.min)
    }

    /// Largest real-valued error introduced by `quantize` then `dequantize`.
    pub fn max_error(&self) -> f64 {
        (self.max - self.min) / (2.0 * SAMPLE_MAX)
    }

    /// Real-valued size of one 16-bit step.
    pub fn sample_step(&self) -> f64 {
        (self.max - self.min) / SAMPLE_MAX
    }
}

/// 16-bit grayscale frames holding every plane slice of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePack {
    pub layout: FrameLayout,
    pub norm: Normalization,
    /// Row-major `width x height` samples per frame.
    pub frames: Vec<Vec<u16>>,
}

impl FramePack {
    pub fn empty() -> Self {
        Self {
            layout: FrameLayout::new(LayoutKind::PerSlice, 0, 0),
            norm: Normalization { min: 0.0, max: 0.0 },
            frames: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.layout.frame_size().0
    }

    pub fn height(&self) -> usize {
        self.layout.frame_size().1
    }

    pub fn is_constant(&self) -> bool {
        self.norm.is_constant()
    }

    pub fn raw_bytes(&self) -> usize {
        self.frames.len() * self.width() * self.height() * 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.len() != self.layout.frame_count() {
            return Err(Error::format(
                "frames",
                format!("layout needs {} frames, pack has {}", self.layout.frame_count(), self.frames.len()),
            ));
        }
        if self.layout.channels > 0 && self.layout.resolution < 2 {
            return Err(Error::format("frames", "plane resolution below 2"));
        }
        let n = self.width() * self.height();
        if self.frames.iter().any(|f| f.len() != n) {
            return Err(Error::format("frames", "frame sample count does not match its size"));
        }
        if !(self.norm.min.is_finite() && self.norm.max.is_finite() && self.norm.min <= self.norm.max) {
            return Err(Error::format("frames", "invalid normalization range"));
        }
        Ok(())
    }
}

/// Normalizes every plane of `field` with one global min/max pair and lays
/// the slices out as frames.
pub fn pack_planes(field: &TriPlaneField, kind: LayoutKind) -> Result<FramePack> {
    let (min, max) = field.value_range();
    if !(min.is_finite() && max.is_finite()) {
        return Err(Error::invalid("field has non-finite values"));
    }
    let norm = Normalization { min, max };
    let r = field.resolution();
    let layout = FrameLayout::new(kind, r, field.channels());
    let (w, h) = layout.frame_size();
    let mut frames = vec![vec![0u16; w * h]; layout.frame_count()];
    for (g, group) in field.groups.iter().enumerate() {
        for (p, plane) in group.planes.iter().enumerate() {
            for c in 0..field.channels() {
                let (f, x0) = layout.slot(g, p, c);
                let src = plane.channel(c);
                for row in 0..r {
                    let dst = &mut frames[f][row * w + x0..row * w + x0 + r];
                    for (d, &v) in dst.iter_mut().zip(&src[row * r..(row + 1) * r]) {
                        *d = norm.quantize(v);
                    }
                }
            }
        }
    }
    Ok(FramePack { layout, norm, frames })
}

/// Inverse of [`pack_planes`].
pub fn unpack_planes(pack: &FramePack, sh_degree: usize) -> Result<TriPlaneField> {
    pack.validate()?;
    let layout = pack.layout;
    if layout.channels == 0 {
        return Err(Error::format("frames", "pack holds no plane channels"));
    }
    let r = layout.resolution;
    let w = pack.width();
    let mut groups = Vec::with_capacity(4);
    for (g, attr) in Attribute::ALL.into_iter().enumerate() {
        let mut planes = Vec::with_capacity(3);
        for p in 0..3 {
            let mut values = Vec::with_capacity(layout.channels * r * r);
            for c in 0..layout.channels {
                let (f, x0) = layout.slot(g, p, c);
                for row in 0..r {
                    values.extend(
                        pack.frames[f][row * w + x0..row * w + x0 + r]
                            .iter()
                            .map(|&s| pack.norm.dequantize(s)),
                    );
                }
            }
            planes.push(FeaturePlane::from_values(r, layout.channels, values)?);
        }
        let planes: [FeaturePlane; 3] = planes.try_into().expect("three planes");
        groups.push(TriPlaneGroup::new(attr, planes)?);
    }
    let groups: [TriPlaneGroup; 4] = groups.try_into().expect("four groups");
    TriPlaneField::new(groups, sh_degree)
}
