use crate::error::{Error, Result};

/// MSB-first bit sink.
#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    bytes: Vec<u8>,
    current: u8,
    used: u8,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bit(&mut self, b: bool) {
        self.current = (self.current << 1) | b as u8;
        self.used += 1;
        if self.used == 8 {
            self.bytes.push(self.current);
            self.current = 0;
            self.used = 0;
        }
    }

    /// Writes the low `n` bits of `v`, most significant first.
    pub fn bits(&mut self, v: u64, n: u32) {
        for i in (0..n).rev() {
            self.bit((v >> i) & 1 == 1);
        }
    }

    /// Order-0 exponential-Golomb code of `v`.
    pub fn ue(&mut self, v: u64) {
        let x = v as u128 + 1;
        let len = 128 - x.leading_zeros();
        for _ in 1..len {
            self.bit(false);
        }
        for i in (0..len).rev() {
            self.bit((x >> i) & 1 == 1);
        }
    }

    /// Signed exp-Golomb: `k > 0` maps to `2k - 1`, `k <= 0` to `-2k`.
    pub fn se(&mut self, v: i64) {
        self.ue(signed_to_code(v));
    }

    /// Order-`k` exponential-Golomb: `v >> k` as order 0, then the low `k`
    /// bits verbatim.
    pub fn ue_k(&mut self, v: u64, k: u32) {
        self.ue(v >> k);
        self.bits(v, k);
    }

    pub fn bit_len(&self) -> usize {
        self.bytes.len() * 8 + self.used as usize
    }

    /// Pads the last byte with zeros.
    pub fn finish(mut self) -> Vec<u8> {
        if self.used > 0 {
            self.bytes.push(self.current << (8 - self.used));
        }
        self.bytes
    }
}

/// Length in bits of the order-`k` exponential-Golomb code of `v`.
pub fn ue_k_len(v: u64, k: u32) -> usize {
    let x = (v >> k) as u128 + 1;
    2 * (128 - x.leading_zeros() as usize) - 1 + k as usize
}

pub fn signed_to_code(v: i64) -> u64 {
    if v > 0 {
        (v as u64) * 2 - 1
    } else {
        v.unsigned_abs() * 2
    }
}

pub fn code_to_signed(c: u64) -> i64 {
    if c % 2 == 1 {
        (c / 2 + 1) as i64
    } else {
        -((c / 2) as i64)
    }
}

/// MSB-first bit source over a byte slice. Errors report the absolute byte
/// offset `base + position`.
#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8], base: usize) -> Self {
        Self { data, pos: 0, base }
    }

    pub fn byte_offset(&self) -> usize {
        self.base + self.pos / 8
    }

    fn corrupt(&self, message: &str) -> Error {
        Error::Corrupt {
            offset: self.byte_offset(),
            message: message.to_string(),
        }
    }

    pub fn bit(&mut self) -> Result<bool> {
        let byte = *self
            .data
            .get(self.pos / 8)
            .ok_or_else(|| self.corrupt("unexpected end of bitstream"))?;
        let b = (byte >> (7 - self.pos % 8)) & 1 == 1;
        self.pos += 1;
        Ok(b)
    }

    pub fn bits(&mut self, n: u32) -> Result<u64> {
        let mut v = 0;
        for _ in 0..n {
            v = (v << 1) | self.bit()? as u64;
        }
        Ok(v)
    }

    pub fn ue(&mut self) -> Result<u64> {
        let mut zeros = 0u32;
        while !self.bit()? {
            zeros += 1;
            if zeros > 64 {
                return Err(self.corrupt("exp-Golomb prefix too long"));
            }
        }
        let rest = self.bits(zeros)? as u128;
        let x = (1u128 << zeros) | rest;
        u64::try_from(x - 1).map_err(|_| self.corrupt("exp-Golomb value overflows"))
    }

    pub fn ue_k(&mut self, k: u32) -> Result<u64> {
        let high = self.ue()?;
        if k > 0 && high >> (64 - k) != 0 {
            return Err(self.corrupt("exp-Golomb value overflows"));
        }
        Ok((high << k) | self.bits(k)?)
    }

    pub fn se(&mut self) -> Result<i64> {
        let c = self.ue()?;
        if c > 2 * (i64::MAX as u64) {
            return Err(self.corrupt("signed exp-Golomb value overflows"));
        }
        Ok(code_to_signed(c))
    }

    /// Number of whole bytes touched so far.
    pub fn bytes_consumed(&self) -> usize {
        self.pos.div_ceil(8)
    }
}

/// Little-endian byte reader for fixed-width header fields.
#[derive(Debug, Clone)]
pub struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8], base: usize) -> Self {
        Self { data, pos: 0, base }
    }

    pub fn offset(&self) -> usize {
        self.base + self.pos
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn corrupt(&self, message: impl Into<String>) -> Error {
        Error::Corrupt {
            offset: self.offset(),
            message: message.into(),
        }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.corrupt(format!("need {n} bytes, {} left", self.remaining())));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
