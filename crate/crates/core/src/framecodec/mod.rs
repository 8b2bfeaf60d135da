//! 16-bit frame packing of planes and positions, the builtin intra codec,
//! and command lines for external video encoders.

pub mod bits;
mod builtin;
mod external;
mod pack;
mod positions;

pub use builtin::{
    decode_frames_builtin, decode_frames_builtin_prefix, encode_frames_builtin, quant_step,
    sample_error_bound, FRAME_MAGIC,
};
pub use external::{build_external_command, hm_gop_stanza, parse_raw_frames, raw_frames, ExternalJob, GOP_POCS};
pub use pack::{pack_planes, unpack_planes, FrameLayout, FramePack, LayoutKind, Normalization, SAMPLE_MAX};
pub use positions::{
    code_positions, decode_positions, decode_positions_prefix, PositionPack, POSITION_FRAME_SIDE,
    POSITION_MAGIC,
};

use crate::error::{Error, Result};

/// Which encoder produces the plane bitstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Builtin,
    ExternalHm,
    ExternalX265,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Builtin => "builtin",
            Backend::ExternalHm => "external-hm",
            Backend::ExternalX265 => "external-x265",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "builtin" => Ok(Backend::Builtin),
            "external-hm" | "hm" => Ok(Backend::ExternalHm),
            "external-x265" | "x265" => Ok(Backend::ExternalX265),
            other => Err(Error::invalid(format!("unknown codec backend {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodecSettings {
    pub backend: Backend,
    pub qp: u32,
    /// Per-GOP-row QP offsets written into the HM configuration.
    pub qp_offsets: Vec<i32>,
    /// Bypasses quantization in the builtin codec.
    pub lossless: bool,
    pub framerate: u32,
    pub hm_config: String,
    /// Replaces the encoder program name in external commands.
    pub program: Option<String>,
}

impl Default for CodecSettings {
    fn default() -> Self {
        Self {
            backend: Backend::Builtin,
            qp: 1,
            qp_offsets: vec![0; GOP_POCS.len()],
            lossless: false,
            framerate: 30,
            hm_config: "encoder_randomaccess_main_rext.cfg".into(),
            program: None,
        }
    }
}
