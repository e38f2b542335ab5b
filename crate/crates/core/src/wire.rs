//! Bit-exact serialized form of a compressed pseudo-gradient.
//!
//! ```text
//! header (28 bytes, little-endian)
//!   0   4  magic "SLCM"
//!   4   1  version (1)
//!   5   1  value bits b  (1, 2, 3, 4, 8, 16, 32)
//!   6   1  index codec   (0 naive, 1 enumerative, 2 dense)
//!   7   1  flags         (bit 0: values are DCT coefficients)
//!   8   8  param_len N
//!   16  4  chunk size C
//!   20  4  k
//!   24  4  num_chunks = ceil(N / C)
//! body (MSB-first bit stream, zero-padded to a byte at the very end)
//!   per chunk, in order, with k_c = min(k, chunk_len):
//!     16 bits           scale (IEEE half; 0 for b = 16 / 32)
//!     index payload     naive: k_c * ceil(log2 chunk_len)
//!                       enumerative: ceil(log2 binom(chunk_len, k_c))
//!                       dense: nothing (k_c = chunk_len)
//!     k_c * b bits      value codes
//! ```
//!
//! The encoded length is a pure function of `(N, C, k, b, codec)`; see
//! [`message_size_bytes`].

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::compress::{dequantize, dct_inverse, CompressError, Compressed, QuantSpec};
use crate::index_codec::{
    index_payload_bits, naive_width, read_naive, write_naive, BitBuffer, BitReader, CodecError, EnumerativeCodec,
    IndexCodec, IndexSet,
};
use crate::tensor::{ChunkLayout, ParamVector, Real};

pub const MAGIC: &[u8; 4] = b"SLCM";
pub const VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 28;
pub const SCALE_BITS: usize = 16;
/// Largest chunk size a parser will accept.
pub const MAX_CHUNK_SIZE: u32 = 1 << 20;
pub const FLAG_DCT: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("bad magic")]
    Magic,
    #[error("unsupported version {0}")]
    Version(u8),
    #[error("invalid header: {0}")]
    Header(String),
    #[error("inconsistent message: {0}")]
    Inconsistent(String),
    #[error("message length {got} bytes, expected {expected}")]
    Length { expected: u64, got: u64 },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Compress(#[from] CompressError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MessageHeader {
    pub version: u8,
    pub param_len: u64,
    pub chunk_size: u32,
    pub k: u32,
    pub value_bits: QuantSpec,
    pub codec: IndexCodec,
    pub dct: bool,
    pub num_chunks: u32,
}

impl MessageHeader {
    pub fn new(
        param_len: u64,
        chunk_size: u32,
        k: u32,
        value_bits: QuantSpec,
        codec: IndexCodec,
        dct: bool,
    ) -> Result<Self, WireError> {
        if param_len == 0 || chunk_size == 0 || chunk_size > MAX_CHUNK_SIZE {
            return Err(WireError::Header(format!("param_len={param_len} chunk_size={chunk_size}")));
        }
        if k > chunk_size {
            return Err(WireError::Header(format!("k={k} > chunk_size={chunk_size}")));
        }
        if codec == IndexCodec::Dense && k != chunk_size {
            return Err(WireError::Header("dense messages need k == chunk_size".into()));
        }
        let num_chunks = param_len.div_ceil(chunk_size as u64);
        let num_chunks =
            u32::try_from(num_chunks).map_err(|_| WireError::Header(format!("{num_chunks} chunks")))?;
        Ok(Self { version: VERSION, param_len, chunk_size, k, value_bits, codec, dct, num_chunks })
    }

    fn chunk_len(&self, c: u32) -> u64 {
        if c + 1 == self.num_chunks {
            self.param_len - self.chunk_size as u64 * (self.num_chunks as u64 - 1)
        } else {
            self.chunk_size as u64
        }
    }

    fn chunk_k(&self, c: u32) -> u64 {
        (self.k as u64).min(self.chunk_len(c))
    }

    fn to_bytes(self) -> [u8; HEADER_BYTES] {
        let mut b = [0u8; HEADER_BYTES];
        b[..4].copy_from_slice(MAGIC);
        b[4] = self.version;
        b[5] = self.value_bits.bits();
        b[6] = self.codec.id();
        b[7] = if self.dct { FLAG_DCT } else { 0 };
        b[8..16].copy_from_slice(&self.param_len.to_le_bytes());
        b[16..20].copy_from_slice(&self.chunk_size.to_le_bytes());
        b[20..24].copy_from_slice(&self.k.to_le_bytes());
        b[24..28].copy_from_slice(&self.num_chunks.to_le_bytes());
        b
    }

    fn from_bytes(b: &[u8]) -> Result<Self, WireError> {
        if b.len() < HEADER_BYTES {
            return Err(WireError::Length { expected: HEADER_BYTES as u64, got: b.len() as u64 });
        }
        if &b[..4] != MAGIC {
            return Err(WireError::Magic);
        }
        if b[4] != VERSION {
            return Err(WireError::Version(b[4]));
        }
        let bits = QuantSpec::new(b[5]).map_err(|_| WireError::Header(format!("value bits {}", b[5])))?;
        let codec = IndexCodec::from_id(b[6]).ok_or_else(|| WireError::Header(format!("codec id {}", b[6])))?;
        if b[7] & !FLAG_DCT != 0 {
            return Err(WireError::Header(format!("unknown flags {:#04x}", b[7])));
        }
        let param_len = u64::from_le_bytes(b[8..16].try_into().unwrap());
        let chunk_size = u32::from_le_bytes(b[16..20].try_into().unwrap());
        let k = u32::from_le_bytes(b[20..24].try_into().unwrap());
        let num_chunks = u32::from_le_bytes(b[24..28].try_into().unwrap());
        let h = Self::new(param_len, chunk_size, k, bits, codec, b[7] & FLAG_DCT != 0)?;
        if h.num_chunks != num_chunks {
            return Err(WireError::Header(format!("num_chunks {num_chunks}, expected {}", h.num_chunks)));
        }
        Ok(h)
    }
}

/// One chunk's decoded payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkPayload {
    pub scale: u16,
    pub indices: Vec<u32>,
    pub codes: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseMessage {
    pub header: MessageHeader,
    pub chunks: Vec<ChunkPayload>,
}

/// Per-chunk bit cost of one chunk shape.
fn chunk_bits(codec: IndexCodec, chunk_len: u64, k: u64, bits: u8) -> u128 {
    let index = index_payload_bits(codec, chunk_len as usize, k as usize) as u128;
    SCALE_BITS as u128 + index + k as u128 * bits as u128
}

/// Exact serialized size in bytes, without building a message.
pub fn message_size_bytes(param_len: u64, chunk_size: u64, k: u64, value_bits: u8, codec: IndexCodec) -> u64 {
    assert!(param_len > 0 && chunk_size > 0 && k <= chunk_size);
    let num_chunks = param_len.div_ceil(chunk_size);
    let tail = param_len - chunk_size * (num_chunks - 1);
    let full = chunk_bits(codec, chunk_size, k, value_bits);
    let last = chunk_bits(codec, tail, k.min(tail), value_bits);
    let body_bits = full * (num_chunks as u128 - 1) + last;
    HEADER_BYTES as u64 + body_bits.div_ceil(8) as u64
}

/// Size of a dense message carrying every value at `value_bits` bits.
pub fn dense_message_size_bytes(param_len: u64, chunk_size: u64, value_bits: u8) -> u64 {
    message_size_bytes(param_len, chunk_size, chunk_size, value_bits, IndexCodec::Dense)
}

struct EnumCache(HashMap<(usize, usize), EnumerativeCodec>);

impl EnumCache {
    fn get(&mut self, c: usize, k: usize) -> Result<&EnumerativeCodec, CodecError> {
        match self.0.entry((c, k)) {
            Entry::Occupied(e) => Ok(e.into_mut()),
            Entry::Vacant(e) => Ok(e.insert(EnumerativeCodec::new(c, k)?)),
        }
    }
}

impl SparseMessage {
    pub fn from_compressed<T: Real>(c: &Compressed<T>, codec: IndexCodec) -> Result<Self, WireError> {
        let k = if codec == IndexCodec::Dense { c.config.chunk_size } else { c.config.k };
        let header = MessageHeader::new(
            c.layout.len as u64,
            c.config.chunk_size as u32,
            k as u32,
            c.config.quant,
            codec,
            c.config.dct,
        )?;
        let chunks = c
            .chunks
            .iter()
            .map(|ch| ChunkPayload { scale: ch.scale, indices: ch.indices.clone(), codes: ch.codes.clone() })
            .collect();
        let msg = Self { header, chunks };
        msg.validate()?;
        Ok(msg)
    }

    fn validate(&self) -> Result<(), WireError> {
        let h = &self.header;
        if self.chunks.len() != h.num_chunks as usize {
            return Err(WireError::Inconsistent(format!("{} chunks, header says {}", self.chunks.len(), h.num_chunks)));
        }
        let bits = h.value_bits.bits();
        for (c, ch) in self.chunks.iter().enumerate() {
            let kc = h.chunk_k(c as u32) as usize;
            let len = h.chunk_len(c as u32) as usize;
            if ch.indices.len() != kc || ch.codes.len() != kc {
                return Err(WireError::Inconsistent(format!(
                    "chunk {c}: {} indices / {} codes, expected {kc}",
                    ch.indices.len(),
                    ch.codes.len()
                )));
            }
            IndexSet::new(len, ch.indices.clone())?;
            if bits < 32 && ch.codes.iter().any(|&x| x >> bits != 0) {
                return Err(WireError::Inconsistent(format!("chunk {c}: code wider than {bits} bits")));
            }
        }
        Ok(())
    }

    pub fn encoded_len(&self) -> u64 {
        let h = &self.header;
        message_size_bytes(h.param_len, h.chunk_size as u64, h.k as u64, h.value_bits.bits(), h.codec)
    }

    pub fn serialize(&self) -> Result<Vec<u8>, WireError> {
        self.validate()?;
        let h = &self.header;
        let bits = h.value_bits.bits() as usize;
        let mut body = BitBuffer::new();
        let mut cache = EnumCache(HashMap::new());
        for (c, ch) in self.chunks.iter().enumerate() {
            let len = h.chunk_len(c as u32) as usize;
            body.push_bits(ch.scale as u64, SCALE_BITS);
            let set = IndexSet::new(len, ch.indices.clone())?;
            match h.codec {
                IndexCodec::Naive => write_naive(&mut body, &set),
                IndexCodec::Enumerative => cache.get(len, set.k())?.write(&mut body, &set)?,
                IndexCodec::Dense => {}
            }
            for &code in &ch.codes {
                body.push_bits(code as u64, bits);
            }
        }
        let mut out = h.to_bytes().to_vec();
        out.extend(body.into_bytes());
        debug_assert_eq!(out.len() as u64, self.encoded_len());
        Ok(out)
    }

    /// Parses and fully validates a serialized message.
    pub fn parse(bytes: &[u8]) -> Result<Self, WireError> {
        let h = MessageHeader::from_bytes(bytes)?;
        let body = &bytes[HEADER_BYTES..];
        let body_bits = body.len() as u128 * 8;
        // Cheap lower bound before any big-integer work.
        let floor: u128 = (0..h.num_chunks.min(2))
            .map(|c| {
                let n = if c == 0 { h.num_chunks as u128 - u128::from(h.num_chunks > 1) } else { 1 };
                let c = if c == 0 { 0 } else { h.num_chunks - 1 };
                n * (SCALE_BITS as u128 + h.chunk_k(c) as u128 * h.value_bits.bits() as u128)
            })
            .sum();
        if floor > body_bits {
            return Err(WireError::Length { expected: HEADER_BYTES as u64 + floor.div_ceil(8) as u64, got: bytes.len() as u64 });
        }
        let expected = message_size_bytes(h.param_len, h.chunk_size as u64, h.k as u64, h.value_bits.bits(), h.codec);
        if expected != bytes.len() as u64 {
            return Err(WireError::Length { expected, got: bytes.len() as u64 });
        }
        let mut r = BitReader::from_bytes(body);
        let bits = h.value_bits.bits() as usize;
        let mut cache = EnumCache(HashMap::new());
        let mut chunks = Vec::with_capacity(h.num_chunks as usize);
        for c in 0..h.num_chunks {
            let len = h.chunk_len(c) as usize;
            let kc = h.chunk_k(c) as usize;
            let scale = r.read_bits(SCALE_BITS)? as u16;
            let indices = match h.codec {
                IndexCodec::Naive => read_naive(&mut r, len, kc)?.into_indices(),
                IndexCodec::Enumerative => cache.get(len, kc)?.read(&mut r)?.into_indices(),
                IndexCodec::Dense => (0..len as u32).collect(),
            };
            let mut codes = Vec::with_capacity(kc);
            for _ in 0..kc {
                codes.push(r.read_bits(bits)? as u32);
            }
            chunks.push(ChunkPayload { scale, indices, codes });
        }
        let pad = r.remaining();
        if pad >= 8 || r.read_bits(pad)? != 0 {
            return Err(WireError::Inconsistent("non-zero trailing padding".into()));
        }
        Ok(Self { header: h, chunks })
    }

    /// Dequantized values scattered into a dense vector (inverse DCT applied
    /// when the values are DCT coefficients).
    pub fn to_dense<T: Real>(&self) -> Result<ParamVector<T>, WireError> {
        let h = &self.header;
        let layout = ChunkLayout::new(h.param_len as usize, h.chunk_size as usize)
            .map_err(|e| WireError::Header(e.to_string()))?;
        let mut out = ParamVector::zeros(layout.len);
        for (c, ch) in self.chunks.iter().enumerate() {
            let values: Vec<T> = dequantize(&ch.codes, ch.scale, h.value_bits)?;
            let range = layout.chunk_range(c);
            if h.dct {
                let mut coeffs = vec![0.0; range.len()];
                for (&i, v) in ch.indices.iter().zip(&values) {
                    coeffs[i as usize] = v.as_f64();
                }
                for (o, x) in out.as_mut_slice()[range].iter_mut().zip(dct_inverse(&coeffs)) {
                    *o = T::lit(x);
                }
            } else {
                for (&i, &v) in ch.indices.iter().zip(&values) {
                    out[range.start + i as usize] = v;
                }
            }
        }
        Ok(out)
    }

    /// Human-readable description used by `wire dump`.
    pub fn describe(&self, max_chunks: usize) -> String {
        let h = &self.header;
        let mut s = String::new();
        let _ = writeln!(s, "magic      SLCM v{}", h.version);
        let _ = writeln!(s, "param_len  {}", h.param_len);
        let _ = writeln!(s, "chunk_size {}", h.chunk_size);
        let _ = writeln!(s, "k          {}", h.k);
        let _ = writeln!(s, "bits       {}", h.value_bits.bits());
        let _ = writeln!(s, "codec      {:?}", h.codec);
        let _ = writeln!(s, "dct        {}", h.dct);
        let _ = writeln!(s, "num_chunks {}", h.num_chunks);
        let _ = writeln!(s, "bytes      {}", self.encoded_len());
        if h.codec != IndexCodec::Dense {
            let _ = writeln!(s, "index bits/chunk (naive) {}", naive_width(h.chunk_size as usize) * h.k as usize);
        }
        for (c, ch) in self.chunks.iter().take(max_chunks).enumerate() {
            let head: Vec<String> = ch.indices.iter().zip(&ch.codes).take(8).map(|(i, v)| format!("{i}:{v}")).collect();
            let _ = writeln!(
                s,
                "chunk {c:>6} scale={:<10} k={:<5} {}{}",
                half::f16::from_bits(ch.scale),
                ch.indices.len(),
                head.join(" "),
                if ch.indices.len() > 8 { " ..." } else { "" }
            );
        }
        if self.chunks.len() > max_chunks {
            let _ = writeln!(s, "... {} more chunks", self.chunks.len() - max_chunks);
        }
        s
    }
}
