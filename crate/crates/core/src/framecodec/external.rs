use super::{Backend, CodecSettings};
use crate::error::{Error, Result};

/// POC order of one random-access GOP of 16 frames.
pub const GOP_POCS: [u32; 16] = [16, 8, 4, 2, 1, 3, 6, 5, 7, 12, 10, 9, 11, 14, 13, 15];

/// Inputs substituted into an external encoder command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalJob {
    pub input: String,
    pub bitstream: String,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
}

/// Command line for the configured external encoder. Nothing is executed.
pub fn build_external_command(job: &ExternalJob, settings: &CodecSettings) -> Result<String> {
    let program = |default: &str| settings.program.clone().unwrap_or_else(|| default.to_string());
    let parts: Vec<String> = match settings.backend {
        Backend::Builtin => return Err(Error::Unsupported("the builtin backend has no external command".into())),
        Backend::ExternalHm => vec![
            program("TAppEncoder"),
            "-c".into(),
            settings.hm_config.clone(),
            format!("--InputFile={}", job.input),
            format!("--SourceWidth={}", job.width),
            format!("--SourceHeight={}", job.height),
            "--InputBitDepth=16".into(),
            "--InternalBitDepth=16".into(),
            "--OutputBitDepth=16".into(),
            "--InputChromaFormat=400".into(),
            format!("--FrameRate={}", settings.framerate),
            format!("--FramesToBeEncoded={}", job.frames),
            format!("--QP={}", settings.qp),
            format!("--BitstreamFile={}", job.bitstream),
        ],
        Backend::ExternalX265 => vec![
            program("ffmpeg"),
            "-y".into(),
            "-pix_fmt gray16be".into(),
            format!("-s {}x{}", job.width, job.height),
            format!("-framerate {}", settings.framerate),
            format!("-i {}", job.input),
            "-c:v libx265".into(),
            "-x265-params".into(),
            "lossless=1".into(),
            job.bitstream.clone(),
        ],
    };
    Ok(parts.join(" "))
}

/// GOP rows of the random-access configuration with the configured QP
/// offsets.
pub fn hm_gop_stanza(settings: &CodecSettings) -> String {
    let mut out = String::from("#        Type POC QPoffset (...)\n");
    for (i, poc) in GOP_POCS.iter().enumerate() {
        let offset = settings.qp_offsets.get(i).copied().unwrap_or(0);
        out.push_str(&format!("Frame{}:  B{poc:>5}{offset:>4}\n", i + 1));
    }
    out
}

/// Concatenated raw 16-bit frames.
pub fn raw_frames(frames: &[Vec<u16>], big_endian: bool) -> Vec<u8> {
    frames
        .iter()
        .flatten()
        .flat_map(|&s| if big_endian { s.to_be_bytes() } else { s.to_le_bytes() })
        .collect()
}

pub fn parse_raw_frames(bytes: &[u8], width: usize, height: usize, big_endian: bool) -> Result<Vec<Vec<u16>>> {
    let frame_bytes = width * height * 2;
    if frame_bytes == 0 {
        return if bytes.is_empty() {
            Ok(Vec::new())
        } else {
            Err(Error::format("frames", "raw data for zero-sized frames"))
        };
    }
    if !bytes.len().is_multiple_of(frame_bytes) {
        return Err(Error::format(
            "frames",
            format!("{} raw bytes is not a whole number of {width}x{height} frames", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks(frame_bytes)
        .map(|f| {
            f.chunks(2)
                .map(|b| {
                    let b = [b[0], b[1]];
                    if big_endian {
                        u16::from_be_bytes(b)
                    } else {
                        u16::from_le_bytes(b)
                    }
                })
                .collect()
        })
        .collect())
}
