//! Lossless coding of per-chunk Top-k index sets.
//!
//! Two codecs share one bit layout convention (MSB first):
//!
//! * naive: every index in `ceil(log2 C)` bits;
//! * enumerative: the set's rank in the combinatorial number system,
//!   `rank = sum_i binom(c_i, i + 1)` over the ascending indices `c_i`, written
//!   in exactly `ceil(log2 binom(C, k))` bits.
//!
//! `k` is never inferred from the payload; both ends must know it.

use bitvec::prelude::*;
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("index set is not strictly increasing within 0..{chunk_size}")]
    InvalidSet { chunk_size: usize },
    #[error("k={k} exceeds chunk size {chunk_size}")]
    KTooLarge { k: usize, chunk_size: usize },
    #[error("expected {expected} indices, got {got}")]
    WrongCount { expected: usize, got: usize },
    #[error("bit stream exhausted: wanted {wanted} bits at offset {offset}, {len} available")]
    Exhausted { wanted: usize, offset: usize, len: usize },
    #[error("decoded index {index} out of range for chunk size {chunk_size}")]
    IndexOutOfRange { index: u64, chunk_size: usize },
    #[error("decoded indices are not strictly increasing")]
    NotIncreasing,
    #[error("rank exceeds binom(C, k) - 1")]
    RankOutOfRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexCodec {
    Naive,
    Enumerative,
    /// No index payload: every position of the chunk is sent.
    Dense,
}

impl IndexCodec {
    pub fn id(self) -> u8 {
        match self {
            IndexCodec::Naive => 0,
            IndexCodec::Enumerative => 1,
            IndexCodec::Dense => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(IndexCodec::Naive),
            1 => Some(IndexCodec::Enumerative),
            2 => Some(IndexCodec::Dense),
            _ => None,
        }
    }
}

/// Strictly increasing indices inside a chunk of `chunk_size` positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    chunk_size: usize,
    indices: Vec<u32>,
}

impl IndexSet {
    pub fn new(chunk_size: usize, indices: Vec<u32>) -> Result<Self, CodecError> {
        let increasing = indices.windows(2).all(|w| w[0] < w[1]);
        let in_range = indices.last().is_none_or(|&i| (i as usize) < chunk_size);
        if !increasing || !in_range {
            return Err(CodecError::InvalidSet { chunk_size });
        }
        Ok(Self { chunk_size, indices })
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn k(&self) -> usize {
        self.indices.len()
    }

    pub fn into_indices(self) -> Vec<u32> {
        self.indices
    }
}

/// Append-only MSB-first bit buffer.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitBuffer {
    bits: BitVec<u8, Msb0>,
}

impl BitBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bit_len(&self) -> usize {
        self.bits.len()
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u64, width: usize) {
        debug_assert!(width <= 64);
        debug_assert!(width == 64 || value >> width == 0);
        for b in (0..width).rev() {
            self.bits.push((value >> b) & 1 == 1);
        }
    }

    /// Appends `value` in exactly `width` bits.
    pub fn push_big(&mut self, value: &BigUint, width: usize) {
        let have = value.bits() as usize;
        debug_assert!(have <= width);
        for _ in have..width {
            self.bits.push(false);
        }
        for b in (0..have).rev() {
            self.bits.push(value.bit(b as u64));
        }
    }

    pub fn extend(&mut self, other: &BitBuffer) {
        self.bits.extend_from_bitslice(&other.bits);
    }

    pub fn as_bitslice(&self) -> &BitSlice<u8, Msb0> {
        &self.bits
    }

    /// Bytes with the final partial byte zero-padded.
    pub fn into_bytes(self) -> Vec<u8> {
        self.bits.into_vec()
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader::new(&self.bits)
    }
}

/// Cursor over an MSB-first bit slice.
pub struct BitReader<'a> {
    bits: &'a BitSlice<u8, Msb0>,
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bits: &'a BitSlice<u8, Msb0>) -> Self {
        Self { bits, pos: 0 }
    }

    pub fn from_bytes(bytes: &'a [u8]) -> Self {
        Self::new(bytes.view_bits())
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.pos
    }

    fn take(&mut self, width: usize) -> Result<&'a BitSlice<u8, Msb0>, CodecError> {
        if width > self.remaining() {
            return Err(CodecError::Exhausted { wanted: width, offset: self.pos, len: self.bits.len() });
        }
        let s = &self.bits[self.pos..self.pos + width];
        self.pos += width;
        Ok(s)
    }

    pub fn read_bits(&mut self, width: usize) -> Result<u64, CodecError> {
        debug_assert!(width <= 64);
        let s = self.take(width)?;
        Ok(s.iter().fold(0u64, |acc, b| (acc << 1) | u64::from(*b)))
    }

    pub fn read_big(&mut self, width: usize) -> Result<BigUint, CodecError> {
        let s = self.take(width)?;
        let pad = (8 - width % 8) % 8;
        let mut aligned: BitVec<u8, Msb0> = BitVec::repeat(false, pad);
        aligned.extend_from_bitslice(s);
        Ok(BigUint::from_bytes_be(aligned.as_raw_slice()))
    }
}

/// `ceil(log2 c)`: bits per index for the naive codec.
pub fn naive_width(chunk_size: usize) -> usize {
    if chunk_size <= 1 {
        0
    } else {
        (usize::BITS - (chunk_size - 1).leading_zeros()) as usize
    }
}

pub fn write_naive(out: &mut BitBuffer, set: &IndexSet) {
    let w = naive_width(set.chunk_size);
    for &i in &set.indices {
        out.push_bits(i as u64, w);
    }
}

pub fn read_naive(r: &mut BitReader<'_>, chunk_size: usize, k: usize) -> Result<IndexSet, CodecError> {
    if k > chunk_size {
        return Err(CodecError::KTooLarge { k, chunk_size });
    }
    let w = naive_width(chunk_size);
    if w.saturating_mul(k) > r.remaining() {
        return Err(CodecError::Exhausted { wanted: w * k, offset: r.position(), len: r.position() + r.remaining() });
    }
    let mut indices = Vec::with_capacity(k);
    for _ in 0..k {
        let i = r.read_bits(w)?;
        if i >= chunk_size as u64 {
            return Err(CodecError::IndexOutOfRange { index: i, chunk_size });
        }
        if indices.last().is_some_and(|&p: &u32| p as u64 >= i) {
            return Err(CodecError::NotIncreasing);
        }
        indices.push(i as u32);
    }
    Ok(IndexSet { chunk_size, indices })
}

pub fn encode_naive(set: &IndexSet) -> BitBuffer {
    let mut out = BitBuffer::new();
    write_naive(&mut out, set);
    out
}

pub fn decode_naive(buf: &BitBuffer, chunk_size: usize, k: usize) -> Result<IndexSet, CodecError> {
    read_naive(&mut buf.reader(), chunk_size, k)
}

/// Exact `binom(n, k)`.
pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= (n - i) as u64;
        acc /= (i + 1) as u64;
    }
    acc
}

/// `log2 binom(n, k)` in floating point; the information-theoretic index cost.
pub fn log2_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64 / (i + 1) as f64).log2()).sum()
}

/// Enumerative coder for k-subsets of a fixed chunk size.
///
/// Holds `binom(C, k)` and `binom(C - 1, k)` so repeated chunks with the same
/// shape skip the setup cost.
#[derive(Debug, Clone)]
pub struct EnumerativeCodec {
    chunk_size: usize,
    k: usize,
    total: BigUint,
    start: BigUint,
    width: usize,
}

impl EnumerativeCodec {
    pub fn new(chunk_size: usize, k: usize) -> Result<Self, CodecError> {
        if k > chunk_size {
            return Err(CodecError::KTooLarge { k, chunk_size });
        }
        let total = binomial(chunk_size, k);
        let width = (&total - 1u32).bits() as usize;
        let start = if chunk_size == 0 { BigUint::zero() } else { binomial(chunk_size - 1, k) };
        Ok(Self { chunk_size, k, total, start, width })
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Payload width, `ceil(log2 binom(C, k))`.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn total(&self) -> &BigUint {
        &self.total
    }

    /// Walks `n` from `C - 1` down to 0, keeping `binom(n, j)` current through
    /// exact multiplicative updates, and calls `visit(n, j, binom)`; the
    /// visitor returns whether `n` belongs to the set.
    fn walk(&self, mut visit: impl FnMut(usize, &BigUint) -> Result<bool, CodecError>) -> Result<(), CodecError> {
        let mut j = self.k;
        let mut b = self.start.clone();
        let mut n = self.chunk_size;
        while j > 0 && n > 0 {
            n -= 1;
            let member = visit(n, &b)?;
            if n == 0 {
                break;
            }
            if member {
                b *= j as u64;
                j -= 1;
            } else {
                b *= (n - j) as u64;
            }
            b /= n as u64;
        }
        Ok(())
    }

    pub fn rank(&self, set: &IndexSet) -> Result<BigUint, CodecError> {
        if set.chunk_size != self.chunk_size {
            return Err(CodecError::InvalidSet { chunk_size: self.chunk_size });
        }
        if set.k() != self.k {
            return Err(CodecError::WrongCount { expected: self.k, got: set.k() });
        }
        let mut rank = BigUint::zero();
        let mut next = set.indices.len();
        self.walk(|n, b| {
            let member = next > 0 && set.indices[next - 1] as usize == n;
            if member {
                rank += b;
                next -= 1;
            }
            Ok(member)
        })?;
        Ok(rank)
    }

    pub fn unrank(&self, rank: &BigUint) -> Result<IndexSet, CodecError> {
        if rank >= &self.total {
            return Err(CodecError::RankOutOfRange);
        }
        let mut rest = rank.clone();
        let mut out = Vec::with_capacity(self.k);
        self.walk(|n, b| {
            let member = &rest >= b;
            if member {
                rest -= b;
                out.push(n as u32);
            }
            Ok(member)
        })?;
        out.reverse();
        debug_assert_eq!(out.len(), self.k);
        Ok(IndexSet { chunk_size: self.chunk_size, indices: out })
    }

    pub fn write(&self, out: &mut BitBuffer, set: &IndexSet) -> Result<(), CodecError> {
        let rank = self.rank(set)?;
        out.push_big(&rank, self.width);
        Ok(())
    }

    pub fn read(&self, r: &mut BitReader<'_>) -> Result<IndexSet, CodecError> {
        let rank = r.read_big(self.width)?;
        self.unrank(&rank)
    }
}

pub fn encode_enumerative(set: &IndexSet, k: usize) -> Result<BitBuffer, CodecError> {
    let codec = EnumerativeCodec::new(set.chunk_size, k)?;
    let mut out = BitBuffer::new();
    codec.write(&mut out, set)?;
    Ok(out)
}

pub fn decode_enumerative(buf: &BitBuffer, chunk_size: usize, k: usize) -> Result<IndexSet, CodecError> {
    EnumerativeCodec::new(chunk_size, k)?.read(&mut buf.reader())
}

/// Which index cost [`bits_per_value`] reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexCost {
    Naive,
    Enumerative,
    /// `log2 binom(C, k) / k`, the lower bound for any lossless codec.
    Limit,
}

pub fn bits_per_value(chunk_size: usize, k: usize, cost: IndexCost) -> f64 {
    assert!(k >= 1 && k <= chunk_size, "need 1 <= k <= C");
    match cost {
        IndexCost::Naive => naive_width(chunk_size) as f64,
        IndexCost::Enumerative => {
            let w = (&binomial(chunk_size, k) - 1u32).bits();
            w as f64 / k as f64
        }
        IndexCost::Limit => log2_binomial(chunk_size, k) / k as f64,
    }
}

/// Bits the given codec spends on one chunk's indices.
pub fn index_payload_bits(codec: IndexCodec, chunk_size: usize, k: usize) -> usize {
    match codec {
        IndexCodec::Naive => naive_width(chunk_size) * k,
        IndexCodec::Enumerative => (&binomial(chunk_size, k) - 1u32).bits().to_usize().unwrap_or(usize::MAX),
        IndexCodec::Dense => 0,
    }
}
