use super::bits::{signed_to_code, code_to_signed, ue_k_len, BitReader, BitWriter, ByteReader};
use crate::error::{Error, Result};
use crate::geometry::QuantizedPosition;

pub const POSITION_MAGIC: &[u8; 4] = b"GPP1";
/// Side of the square frames positions are packed into.
pub const POSITION_FRAME_SIDE: usize = 512;

/// Quantized coordinates as three consecutive streams (`qx`, `qy`, `qz`) of
/// `count` samples in 512x512 frames, zero padded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionPack {
    pub count: usize,
    pub samples: Vec<u16>,
}

impl PositionPack {
    pub fn new(positions: &[QuantizedPosition]) -> Self {
        let count = positions.len();
        let mut samples = Vec::with_capacity(Self::padded_len(count));
        samples.extend(positions.iter().map(|p| p.qx));
        samples.extend(positions.iter().map(|p| p.qy));
        samples.extend(positions.iter().map(|p| p.qz));
        samples.resize(Self::padded_len(count), 0);
        Self { count, samples }
    }

    fn padded_len(count: usize) -> usize {
        let frame = POSITION_FRAME_SIDE * POSITION_FRAME_SIDE;
        (3 * count).div_ceil(frame) * frame
    }

    pub fn frame_count(&self) -> usize {
        self.samples.len() / (POSITION_FRAME_SIDE * POSITION_FRAME_SIDE)
    }

    pub fn frames(&self) -> Vec<Vec<u16>> {
        self.samples
            .chunks(POSITION_FRAME_SIDE * POSITION_FRAME_SIDE)
            .map(<[u16]>::to_vec)
            .collect()
    }

    pub fn from_frames(count: usize, frames: &[Vec<u16>]) -> Result<Self> {
        let samples: Vec<u16> = frames.concat();
        if samples.len() != Self::padded_len(count) || samples[3 * count..].iter().any(|&s| s != 0) {
            return Err(Error::format("positions", "position frames do not match the point count"));
        }
        Ok(Self { count, samples })
    }

    /// Size of the padded frames as raw 16-bit samples.
    pub fn raw_bytes(&self) -> usize {
        self.samples.len() * 2
    }

    pub fn positions(&self) -> Vec<QuantizedPosition> {
        let n = self.count;
        (0..n)
            .map(|i| QuantizedPosition {
                qx: self.samples[i],
                qy: self.samples[n + i],
                qz: self.samples[2 * n + i],
            })
            .collect()
    }
}

/// Largest exp-Golomb order tried per stream.
const MAX_ORDER: u32 = 16;

/// Lossless coding: magic, `u64` point count, then for each stream a 5-bit
/// exp-Golomb order `k` followed by the difference to the previous sample,
/// signed-mapped and coded with order `k`. Each stream uses the `k` that
/// minimizes its size.
pub fn code_positions(pack: &PositionPack) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(POSITION_MAGIC);
    out.extend_from_slice(&(pack.count as u64).to_le_bytes());
    let mut w = BitWriter::new();
    for stream in pack.samples[..3 * pack.count].chunks(pack.count.max(1)) {
        let codes: Vec<u64> = std::iter::once(0)
            .chain(stream.iter().map(|&s| i64::from(s)))
            .collect::<Vec<_>>()
            .windows(2)
            .map(|d| signed_to_code(d[1] - d[0]))
            .collect();
        let k = (0..=MAX_ORDER)
            .min_by_key(|&k| codes.iter().map(|&c| ue_k_len(c, k)).sum::<usize>())
            .unwrap_or(0);
        w.bits(u64::from(k), 5);
        for c in codes {
            w.ue_k(c, k);
        }
    }
    out.extend_from_slice(&w.finish());
    out
}

/// Inverse of [`code_positions`] on a prefix of `data`; returns the pack and
/// the bytes consumed.
pub fn decode_positions_prefix(data: &[u8], base: usize) -> Result<(PositionPack, usize)> {
    let mut r = ByteReader::new(data, base);
    if r.take(4)? != POSITION_MAGIC {
        return Err(Error::Corrupt {
            offset: base,
            message: "bad position-stream magic".into(),
        });
    }
    let count = usize::try_from(r.u64()?).map_err(|_| r.corrupt("point count overflows"))?;
    let header = r.position();
    // each coded sample takes at least one bit
    if count.saturating_mul(3) > (data.len() - header).saturating_mul(8) {
        return Err(r.corrupt("point count exceeds the stream length"));
    }
    let mut bits = BitReader::new(&data[header..], base + header);
    let mut samples = Vec::with_capacity(PositionPack::padded_len(count));
    let streams = if count == 0 { 0 } else { 3 };
    for _ in 0..streams {
        let k = bits.bits(5)? as u32;
        if k > MAX_ORDER {
            return Err(Error::Corrupt {
                offset: bits.byte_offset(),
                message: format!("exp-Golomb order {k} out of range"),
            });
        }
        let mut prev = 0i64;
        for _ in 0..count {
            let code = bits.ue_k(k)?;
            let delta = if code > 2 * (i64::MAX as u64) { i64::MAX } else { code_to_signed(code) };
            let v = prev
                .checked_add(delta)
                .filter(|v| (0..=65_535).contains(v))
                .ok_or_else(|| Error::Corrupt {
                    offset: bits.byte_offset(),
                    message: "position sample outside the 16-bit range".into(),
                })?;
            samples.push(v as u16);
            prev = v;
        }
    }
    samples.resize(PositionPack::padded_len(count), 0);
    Ok((PositionPack { count, samples }, header + bits.bytes_consumed()))
}

pub fn decode_positions(data: &[u8]) -> Result<PositionPack> {
    let (pack, used) = decode_positions_prefix(data, 0)?;
    if used != data.len() {
        return Err(Error::Corrupt {
            offset: used,
            message: "trailing bytes after position stream".into(),
        });
    }
    Ok(pack)
}
