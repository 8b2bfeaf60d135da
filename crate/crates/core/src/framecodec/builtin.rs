use super::bits::{BitReader, BitWriter, ByteReader};
use super::pack::{FrameLayout, FramePack, LayoutKind, Normalization};
use super::CodecSettings;
use crate::error::{Error, Result};
use crate::transform::{zigzag_order, BlockDct, BlockSpec};

pub const FRAME_MAGIC: &[u8; 4] = b"GPF1";
const BLOCK: usize = 4;
const CENTER: i64 = 32_768;
const FLAG_LOSSLESS: u8 = 1;
const FLAG_CONSTANT: u8 = 2;
const MAX_FRAME_SAMPLES: usize = 1 << 28;

/// Quantizer step in 16-bit sample units: `2^(QP/6)` scaled by 256, the
/// ratio between the 16-bit and 8-bit sample ranges.
pub fn quant_step(qp: u32) -> f64 {
    256.0 * 2f64.powf(f64::from(qp) / 6.0)
}

/// Worst-case per-sample error of lossy decoding at `qp`, in 16-bit units:
/// half a step on every coefficient spread through the inverse transform,
/// plus half a unit of final rounding.
pub fn sample_error_bound(qp: u32) -> f64 {
    BlockDct::new(BlockSpec::default()).sample_error_bound(quant_step(qp) / 2.0) + 0.5
}

/// Reversible integer S-transform on 4 samples: two Haar levels.
fn lift4(x: [i64; 4]) -> [i64; 4] {
    let pair = |a: i64, b: i64| {
        let h = a - b;
        (b + h.div_euclid(2), h)
    };
    let (l0, h0) = pair(x[0], x[1]);
    let (l1, h1) = pair(x[2], x[3]);
    let (ll, lh) = pair(l0, l1);
    [ll, lh, h0, h1]
}

fn unlift4(y: [i64; 4]) -> [i64; 4] {
    let unpair = |l: i64, h: i64| {
        let b = l - h.div_euclid(2);
        (h + b, b)
    };
    let (l0, l1) = unpair(y[0], y[1]);
    let (a, b) = unpair(l0, y[2]);
    let (c, d) = unpair(l1, y[3]);
    [a, b, c, d]
}

fn lift_block(block: &mut [i64; 16], inverse: bool) {
    let f = if inverse { unlift4 } else { lift4 };
    let rows = |b: &mut [i64; 16]| {
        for r in 0..4 {
            let out = f([b[r * 4], b[r * 4 + 1], b[r * 4 + 2], b[r * 4 + 3]]);
            b[r * 4..r * 4 + 4].copy_from_slice(&out);
        }
    };
    let cols = |b: &mut [i64; 16]| {
        for c in 0..4 {
            let out = f([b[c], b[4 + c], b[8 + c], b[12 + c]]);
            for (r, v) in out.into_iter().enumerate() {
                b[r * 4 + c] = v;
            }
        }
    };
    if inverse {
        cols(block);
        rows(block);
    } else {
        rows(block);
        cols(block);
    }
}

struct FrameCoder {
    dct: BlockDct,
    zigzag: Vec<usize>,
    step: f64,
    lossless: bool,
}

impl FrameCoder {
    fn new(qp: u32, lossless: bool) -> Self {
        let spec = BlockSpec::default();
        Self {
            dct: BlockDct::new(spec),
            zigzag: zigzag_order(spec).into_iter().map(|(r, c)| r * BLOCK + c).collect(),
            step: quant_step(qp),
            lossless,
        }
    }

    fn levels(&self, samples: &[i64; 16]) -> [i64; 16] {
        if self.lossless {
            let mut b = *samples;
            lift_block(&mut b, false);
            return b;
        }
        let x = samples.map(|s| s as f64);
        let mut c = [0.0; 16];
        self.dct.forward(&x, &mut c);
        c.map(|v| (v / self.step).round() as i64)
    }

    fn reconstruct(&self, levels: &[i64; 16], offset: usize) -> Result<[i64; 16]> {
        if self.lossless {
            let mut b = *levels;
            lift_block(&mut b, true);
            if b.iter().any(|&v| !(-CENTER..CENTER).contains(&v)) {
                return Err(Error::Corrupt {
                    offset,
                    message: "lossless block decodes outside the 16-bit range".into(),
                });
            }
            return Ok(b);
        }
        let c = levels.map(|l| l as f64 * self.step);
        let mut x = [0.0; 16];
        self.dct.inverse(&c, &mut x);
        Ok(x.map(|v| (v.round() as i64).clamp(-CENTER, CENTER - 1)))
    }

    fn encode(&self, frame: &[u16], w: usize, h: usize) -> Vec<u8> {
        let (bw, bh) = (w.div_ceil(BLOCK), h.div_ceil(BLOCK));
        let mut dc = vec![0i64; bw * bh];
        let mut out = BitWriter::new();
        let mut skip = 0u64;
        for by in 0..bh {
            for bx in 0..bw {
                let mut samples = [0i64; 16];
                for r in 0..BLOCK {
                    let y = (by * BLOCK + r).min(h - 1);
                    for c in 0..BLOCK {
                        let x = (bx * BLOCK + c).min(w - 1);
                        samples[r * BLOCK + c] = i64::from(frame[y * w + x]) - CENTER;
                    }
                }
                let mut levels = self.levels(&samples);
                let i = by * bw + bx;
                dc[i] = levels[0];
                levels[0] -= dc_prediction(&dc, bx, by, bw);
                let scanned: Vec<i64> = self.zigzag.iter().map(|&k| levels[k]).collect();
                let pairs = run_level_pairs(&scanned);
                if pairs.is_empty() {
                    skip += 1;
                    continue;
                }
                out.ue(skip);
                skip = 0;
                out.ue(pairs.len() as u64 - 1);
                for (run, level) in pairs {
                    out.ue(run);
                    out.se(level);
                }
            }
        }
        if skip > 0 {
            out.ue(skip);
        }
        out.finish()
    }

    fn decode(&self, payload: &[u8], base: usize, w: usize, h: usize) -> Result<(Vec<u16>, usize)> {
        let (bw, bh) = (w.div_ceil(BLOCK), h.div_ceil(BLOCK));
        let total = bw * bh;
        let mut dc = vec![0i64; total];
        let mut frame = vec![0u16; w * h];
        let mut r = BitReader::new(payload, base);
        let mut i = 0usize;
        let mut zero = [0i64; 16];
        while i < total {
            let skip = r.ue()?;
            if skip > (total - i) as u64 {
                return Err(r_corrupt(&r, "block skip runs past the frame end"));
            }
            let end = i + skip as usize;
            while i < end {
                let (bx, by) = (i % bw, i / bw);
                dc[i] = dc_prediction(&dc, bx, by, bw);
                zero[0] = dc[i];
                let block = self.reconstruct(&zero, r.byte_offset())?;
                store_block(&mut frame, &block, bx, by, w, h);
                i += 1;
            }
            if i == total {
                break;
            }
            let pairs = r.ue()?.checked_add(1).filter(|&p| p <= 16).ok_or_else(|| r_corrupt(&r, "too many coefficient pairs"))?;
            let mut scanned = [0i64; 16];
            let mut pos = 0usize;
            for _ in 0..pairs {
                let run = r.ue()?;
                if run >= (16 - pos) as u64 {
                    return Err(r_corrupt(&r, "coefficient run past the block end"));
                }
                pos += run as usize;
                let level = r.se()?;
                if level == 0 {
                    return Err(r_corrupt(&r, "zero level in run-level pair"));
                }
                scanned[pos] = level;
                pos += 1;
            }
            let mut levels = [0i64; 16];
            for (k, &z) in self.zigzag.iter().enumerate() {
                levels[z] = scanned[k];
            }
            let (bx, by) = (i % bw, i / bw);
            levels[0] = levels[0]
                .checked_add(dc_prediction(&dc, bx, by, bw))
                .ok_or_else(|| r_corrupt(&r, "DC level overflows"))?;
            dc[i] = levels[0];
            let block = self.reconstruct(&levels, r.byte_offset())?;
            store_block(&mut frame, &block, bx, by, w, h);
            i += 1;
        }
        Ok((frame, r.bytes_consumed()))
    }
}

fn r_corrupt(r: &BitReader<'_>, message: &str) -> Error {
    Error::Corrupt {
        offset: r.byte_offset(),
        message: message.to_string(),
    }
}

/// Left neighbour's DC level, the block above for the first column, zero for
/// the first block.
fn dc_prediction(dc: &[i64], bx: usize, by: usize, bw: usize) -> i64 {
    if bx > 0 {
        dc[by * bw + bx - 1]
    } else if by > 0 {
        dc[(by - 1) * bw]
    } else {
        0
    }
}

/// `(zeros before, level)` for every non-zero entry.
fn run_level_pairs(scanned: &[i64]) -> Vec<(u64, i64)> {
    let mut pairs = Vec::new();
    let mut run = 0u64;
    for &v in scanned {
        if v == 0 {
            run += 1;
        } else {
            pairs.push((run, v));
            run = 0;
        }
    }
    pairs
}

fn store_block(frame: &mut [u16], block: &[i64; 16], bx: usize, by: usize, w: usize, h: usize) {
    for r in 0..BLOCK {
        let y = by * BLOCK + r;
        if y >= h {
            break;
        }
        for c in 0..BLOCK {
            let x = bx * BLOCK + c;
            if x >= w {
                break;
            }
            frame[y * w + x] = (block[r * BLOCK + c] + CENTER) as u16;
        }
    }
}

/// Intra-codes every frame. Layout: magic, `u32` frame count, width, height,
/// QP, `u8` flags, `f64` min and max, `u8` layout kind, `u32` plane
/// resolution and channels, one `u32` payload length per frame, payloads.
pub fn encode_frames_builtin(pack: &FramePack, settings: &CodecSettings) -> Result<Vec<u8>> {
    pack.validate()?;
    let (w, h) = (pack.width(), pack.height());
    let coder = FrameCoder::new(settings.qp, settings.lossless);
    let payloads: Vec<Vec<u8>> = pack.frames.iter().map(|f| coder.encode(f, w, h)).collect();

    let mut out = Vec::new();
    out.extend_from_slice(FRAME_MAGIC);
    for v in [pack.frames.len(), w, h] {
        out.extend_from_slice(&u32_of(v)?.to_le_bytes());
    }
    out.extend_from_slice(&settings.qp.to_le_bytes());
    let mut flags = 0u8;
    if settings.lossless {
        flags |= FLAG_LOSSLESS;
    }
    if pack.is_constant() {
        flags |= FLAG_CONSTANT;
    }
    out.push(flags);
    out.extend_from_slice(&pack.norm.min.to_le_bytes());
    out.extend_from_slice(&pack.norm.max.to_le_bytes());
    out.push(pack.layout.kind.code());
    out.extend_from_slice(&u32_of(pack.layout.resolution)?.to_le_bytes());
    out.extend_from_slice(&u32_of(pack.layout.channels)?.to_le_bytes());
    for p in &payloads {
        out.extend_from_slice(&u32_of(p.len())?.to_le_bytes());
    }
    for p in payloads {
        out.extend_from_slice(&p);
    }
    Ok(out)
}

fn u32_of(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::invalid(format!("{v} does not fit in 32 bits")))
}

/// Decodes a builtin stream; returns the pack and the bytes consumed.
pub fn decode_frames_builtin_prefix(data: &[u8], base: usize) -> Result<(FramePack, usize)> {
    let mut r = ByteReader::new(data, base);
    if r.take(4)? != FRAME_MAGIC {
        return Err(Error::Corrupt {
            offset: base,
            message: "bad frame-stream magic".into(),
        });
    }
    let count = r.u32()? as usize;
    let w = r.u32()? as usize;
    let h = r.u32()? as usize;
    let qp = r.u32()?;
    let flags = r.u8()?;
    if flags & !(FLAG_LOSSLESS | FLAG_CONSTANT) != 0 {
        return Err(r.corrupt("unknown frame-stream flags"));
    }
    let min = r.f64()?;
    let max = r.f64()?;
    let kind_at = r.offset();
    let kind = LayoutKind::from_code(r.u8()?).ok_or_else(|| Error::Corrupt {
        offset: kind_at,
        message: "unknown frame layout".into(),
    })?;
    let layout = FrameLayout::new(kind, r.u32()? as usize, r.u32()? as usize);
    if layout.frame_count() != count || (count > 0 && layout.frame_size() != (w, h)) {
        return Err(r.corrupt("frame layout disagrees with the frame header"));
    }
    if count > 0 && (w == 0 || h == 0 || w.saturating_mul(h) > MAX_FRAME_SAMPLES) {
        return Err(r.corrupt(format!("unsupported frame size {w}x{h}")));
    }
    let norm = Normalization { min, max };
    if !(min.is_finite() && max.is_finite() && min <= max) || ((flags & FLAG_CONSTANT != 0) != norm.is_constant()) {
        return Err(r.corrupt("invalid normalization range"));
    }
    if r.remaining() < count * 4 {
        return Err(r.corrupt("truncated frame length table"));
    }
    let lengths: Vec<usize> = (0..count).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_>>()?;
    let coder = FrameCoder::new(qp, flags & FLAG_LOSSLESS != 0);
    let mut frames = Vec::with_capacity(count);
    for len in lengths {
        let start = r.offset();
        let payload = r.take(len)?;
        let (frame, used) = coder.decode(payload, start, w, h)?;
        if used != len {
            return Err(Error::Corrupt {
                offset: start + used,
                message: format!("frame payload has {} trailing bytes", len - used),
            });
        }
        frames.push(frame);
    }
    Ok((FramePack { layout, norm, frames }, r.position()))
}

/// Decodes a builtin stream that must span all of `data`.
pub fn decode_frames_builtin(data: &[u8]) -> Result<FramePack> {
    let (pack, used) = decode_frames_builtin_prefix(data, 0)?;
    if used != data.len() {
        return Err(Error::Corrupt {
            offset: used,
            message: "trailing bytes after frame stream".into(),
        });
    }
    Ok(pack)
}
