//! Chunked Top-k / Random-k selection, optional per-chunk DCT and b-bit value
//! quantization.
//!
//! Quantizer: for `b` in 2..=8 a symmetric mid-rise uniform quantizer on
//! `[-s, s]` with `2^b` bins, where `s` is the chunk's absolute maximum rounded
//! *up* to the nearest half-precision float (so every value lies inside the
//! transmitted range). Codes dequantize to bin centres. `b = 1` sends signs with
//! a shared magnitude equal to the mean absolute value. `b = 16` and `b = 32`
//! send raw IEEE half / single floats.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::sync::Arc;

use half::f16;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{check_len, ChunkLayout, ParamVector, Real, Rng, TensorError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompressError {
    #[error("k={k} out of range 1..={chunk_size}")]
    KOutOfRange { k: usize, chunk_size: usize },
    #[error("unsupported value bit width {0}")]
    Bits(u8),
    #[error("code {code} does not fit in {bits} bits")]
    InvalidCode { code: u32, bits: u8 },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Values selected from one chunk, at ascending chunk-local indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkSelection<T> {
    pub indices: Vec<u32>,
    pub values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult<T> {
    pub layout: ChunkLayout,
    pub chunks: Vec<ChunkSelection<T>>,
}

impl<T: Real> SelectionResult<T> {
    /// Scatters the selected values back into a dense vector.
    pub fn to_dense(&self) -> ParamVector<T> {
        let mut out = ParamVector::zeros(self.layout.len);
        for (c, sel) in self.chunks.iter().enumerate() {
            let base = c * self.layout.chunk_size;
            for (&i, &v) in sel.indices.iter().zip(&sel.values) {
                out[base + i as usize] = v;
            }
        }
        out
    }
}

fn check_k(layout: &ChunkLayout, k: usize) -> Result<(), CompressError> {
    if k == 0 || k > layout.chunk_size {
        return Err(CompressError::KOutOfRange { k, chunk_size: layout.chunk_size });
    }
    Ok(())
}

/// Indices of the `k` largest magnitudes in `chunk`, ascending; ties go to the lower index.
pub fn topk_indices<T: Real>(chunk: &[T], k: usize) -> Vec<u32> {
    let k = k.min(chunk.len());
    let mut idx: Vec<u32> = (0..chunk.len() as u32).collect();
    if k < chunk.len() {
        let by_magnitude = |&a: &u32, &b: &u32| {
            let (ma, mb) = (chunk[a as usize].abs(), chunk[b as usize].abs());
            mb.partial_cmp(&ma).unwrap_or(Ordering::Equal).then(a.cmp(&b))
        };
        if k > 0 {
            idx.select_nth_unstable_by(k - 1, by_magnitude);
        }
        idx.truncate(k);
        idx.sort_unstable();
    }
    idx
}

fn gather<T: Real>(chunk: &[T], indices: Vec<u32>) -> ChunkSelection<T> {
    let values = indices.iter().map(|&i| chunk[i as usize]).collect();
    ChunkSelection { indices, values }
}

/// Per chunk, the `min(k, chunk_len)` largest-magnitude entries.
pub fn chunk_topk<T: Real>(v: &ParamVector<T>, layout: &ChunkLayout, k: usize) -> Result<SelectionResult<T>, CompressError> {
    check_len(v.len(), layout.len)?;
    check_k(layout, k)?;
    let chunks = layout
        .ranges()
        .map(|r| {
            let chunk = &v.as_slice()[r];
            gather(chunk, topk_indices(chunk, k))
        })
        .collect();
    Ok(SelectionResult { layout: *layout, chunks })
}

/// Per chunk, `min(k, chunk_len)` indices drawn uniformly without replacement.
pub fn chunk_randk<T: Real>(
    v: &ParamVector<T>,
    layout: &ChunkLayout,
    k: usize,
    rng: &mut Rng,
) -> Result<SelectionResult<T>, CompressError> {
    check_len(v.len(), layout.len)?;
    check_k(layout, k)?;
    let chunks = layout
        .ranges()
        .map(|r| {
            let chunk = &v.as_slice()[r];
            let picks = rng.sample_sorted(chunk.len(), k.min(chunk.len()));
            gather(chunk, picks.into_iter().map(|i| i as u32).collect())
        })
        .collect();
    Ok(SelectionResult { layout: *layout, chunks })
}

thread_local! {
    static FFT_PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    FFT_PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

fn dct_scale(k: usize, n: usize) -> f64 {
    if k == 0 {
        (1.0 / n as f64).sqrt()
    } else {
        (2.0 / n as f64).sqrt()
    }
}

/// Orthonormal DCT-II, computed with one length-`n` FFT of the even/odd reordering.
pub fn dct_chunk(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); n];
    for i in 0..n.div_ceil(2) {
        buf[i] = Complex::new(x[2 * i], 0.0);
    }
    for i in 0..n / 2 {
        buf[n - 1 - i] = Complex::new(x[2 * i + 1], 0.0);
    }
    plan(n, false).process(&mut buf);
    (0..n)
        .map(|k| {
            let theta = -std::f64::consts::PI * k as f64 / (2 * n) as f64;
            let tw = Complex::new(theta.cos(), theta.sin());
            (tw * buf[k]).re * dct_scale(k, n)
        })
        .collect()
}

/// Inverse of [`dct_chunk`] (orthonormal DCT-III).
pub fn dct_inverse(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    if n == 0 {
        return Vec::new();
    }
    let raw: Vec<f64> = coeffs.iter().enumerate().map(|(k, &c)| c / dct_scale(k, n)).collect();
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|k| {
            let other = if k == 0 { 0.0 } else { raw[n - k] };
            let theta = std::f64::consts::PI * k as f64 / (2 * n) as f64;
            Complex::new(theta.cos(), theta.sin()) * Complex::new(raw[k], -other)
        })
        .collect();
    plan(n, true).process(&mut buf);
    let inv_n = 1.0 / n as f64;
    let mut x = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        x[2 * i] = buf[i].re * inv_n;
    }
    for i in 0..n / 2 {
        x[2 * i + 1] = buf[n - 1 - i].re * inv_n;
    }
    x
}

/// Value bit width. Widths 1-4 are the quantization ablation grid; 8 and 16
/// exist for the dense and DeMo-style baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct QuantSpec {
    bits: u8,
}

impl QuantSpec {
    pub const SUPPORTED: [u8; 7] = [1, 2, 3, 4, 8, 16, 32];

    pub fn new(bits: u8) -> Result<Self, CompressError> {
        if Self::SUPPORTED.contains(&bits) {
            Ok(Self { bits })
        } else {
            Err(CompressError::Bits(bits))
        }
    }

    pub fn full() -> Self {
        Self { bits: 32 }
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn is_passthrough(&self) -> bool {
        self.bits == 32
    }
}

impl TryFrom<u8> for QuantSpec {
    type Error = CompressError;
    fn try_from(bits: u8) -> Result<Self, Self::Error> {
        Self::new(bits)
    }
}

impl From<QuantSpec> for u8 {
    fn from(q: QuantSpec) -> u8 {
        q.bits
    }
}

/// Codes for one chunk plus its half-precision scale (stored as raw bits).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedChunk {
    pub codes: Vec<u32>,
    pub scale: u16,
}

impl QuantizedChunk {
    pub fn scale_f64(&self) -> f64 {
        f16::from_bits(self.scale).to_f64()
    }
}

/// Smallest finite half-precision value `>= s` (saturating at `f16::MAX`).
fn f16_round_up(s: f64) -> f16 {
    let h = f16::from_f64(s);
    if h.is_infinite() {
        return f16::MAX;
    }
    if h.to_f64() >= s {
        h
    } else {
        f16::from_bits(h.to_bits() + 1)
    }
}

pub fn quantize<T: Real>(values: &[T], spec: QuantSpec) -> QuantizedChunk {
    match spec.bits {
        32 => QuantizedChunk { codes: values.iter().map(|v| (v.as_f64() as f32).to_bits()).collect(), scale: 0 },
        16 => QuantizedChunk {
            codes: values.iter().map(|v| f16::from_f64(v.as_f64()).to_bits() as u32).collect(),
            scale: 0,
        },
        1 => {
            if values.is_empty() {
                return QuantizedChunk { codes: vec![], scale: 0 };
            }
            let mean = values.iter().map(|v| v.as_f64().abs()).sum::<f64>() / values.len() as f64;
            let codes = values.iter().map(|v| u32::from(v.as_f64() >= 0.0)).collect();
            QuantizedChunk { codes, scale: f16::from_f64(mean).to_bits() }
        }
        b => {
            let absmax = values.iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
            if absmax == 0.0 {
                return QuantizedChunk { codes: vec![0; values.len()], scale: 0 };
            }
            let s = f16_round_up(absmax).to_f64();
            let levels = 1u32 << b;
            let width = 2.0 * s / levels as f64;
            let codes = values
                .iter()
                .map(|v| {
                    let c = ((v.as_f64() + s) / width).floor();
                    c.clamp(0.0, (levels - 1) as f64) as u32
                })
                .collect();
            QuantizedChunk { codes, scale: s_bits(s) }
        }
    }
}

fn s_bits(s: f64) -> u16 {
    f16::from_f64(s).to_bits()
}

pub fn dequantize<T: Real>(codes: &[u32], scale: u16, spec: QuantSpec) -> Result<Vec<T>, CompressError> {
    let bits = spec.bits;
    if bits < 32 {
        if let Some(&code) = codes.iter().find(|&&c| c >> bits != 0) {
            return Err(CompressError::InvalidCode { code, bits });
        }
    }
    let s = f16::from_bits(scale).to_f64();
    Ok(match bits {
        32 => codes.iter().map(|&c| T::lit(f32::from_bits(c) as f64)).collect(),
        16 => codes.iter().map(|&c| T::lit(f16::from_bits(c as u16).to_f64())).collect(),
        1 => codes.iter().map(|&c| T::lit(if c == 1 { s } else { -s })).collect(),
        b => {
            let levels = 1u32 << b;
            let width = 2.0 * s / levels as f64;
            codes.iter().map(|&c| T::lit(-s + (c as f64 + 0.5) * width)).collect()
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    TopK,
    RandomK,
}

/// Everything that determines `Q(select_k(v))` for one message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompressorConfig {
    pub chunk_size: usize,
    pub k: usize,
    pub selection: Selection,
    pub dct: bool,
    pub quant: QuantSpec,
}

/// One chunk of a compressed vector: what goes on the wire plus the values the
/// receiver reconstructs from it.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedChunk<T> {
    pub indices: Vec<u32>,
    pub codes: Vec<u32>,
    pub scale: u16,
    /// Dequantized values. For 32-bit pass-through these are the selected
    /// values at full working precision.
    pub values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Compressed<T> {
    pub layout: ChunkLayout,
    pub config: CompressorConfig,
    pub chunks: Vec<CompressedChunk<T>>,
}

impl<T: Real> Compressed<T> {
    /// Adds the reconstructed (decompressed) vector into `acc`.
    pub fn add_into(&self, acc: &mut ParamVector<T>) -> Result<(), CompressError> {
        check_len(acc.len(), self.layout.len)?;
        let out = acc.as_mut_slice();
        for (c, ch) in self.chunks.iter().enumerate() {
            let range = self.layout.chunk_range(c);
            if self.config.dct {
                let mut coeffs = vec![0.0; range.len()];
                for (&i, v) in ch.indices.iter().zip(&ch.values) {
                    coeffs[i as usize] = v.as_f64();
                }
                for (o, x) in out[range].iter_mut().zip(dct_inverse(&coeffs)) {
                    *o += T::lit(x);
                }
            } else {
                let base = range.start;
                for (&i, &v) in ch.indices.iter().zip(&ch.values) {
                    out[base + i as usize] += v;
                }
            }
        }
        Ok(())
    }

    pub fn to_dense(&self) -> ParamVector<T> {
        let mut out = ParamVector::zeros(self.layout.len);
        self.add_into(&mut out).expect("layout length matches by construction");
        out
    }

    pub fn selected_count(&self) -> usize {
        self.chunks.iter().map(|c| c.indices.len()).sum()
    }
}

/// Selects, optionally in the DCT domain, then quantizes each chunk.
///
/// `rng` is only consumed for Random-k.
pub fn compress<T: Real>(
    v: &ParamVector<T>,
    config: &CompressorConfig,
    rng: &mut Rng,
) -> Result<Compressed<T>, CompressError> {
    let layout = ChunkLayout::new(v.len(), config.chunk_size)?;
    check_k(&layout, config.k)?;
    let mut chunks = Vec::with_capacity(layout.num_chunks);
    for range in layout.ranges() {
        let raw = &v.as_slice()[range];
        let transformed: Vec<T>;
        let chunk: &[T] = if config.dct {
            let x: Vec<f64> = raw.iter().map(|x| x.as_f64()).collect();
            transformed = dct_chunk(&x).into_iter().map(T::lit).collect();
            &transformed
        } else {
            raw
        };
        let k = config.k.min(chunk.len());
        let indices: Vec<u32> = match config.selection {
            Selection::TopK => topk_indices(chunk, k),
            Selection::RandomK => rng.sample_sorted(chunk.len(), k).into_iter().map(|i| i as u32).collect(),
        };
        let selected: Vec<T> = indices.iter().map(|&i| chunk[i as usize]).collect();
        let q = quantize(&selected, config.quant);
        let values = if config.quant.is_passthrough() {
            selected
        } else {
            dequantize(&q.codes, q.scale, config.quant)?
        };
        chunks.push(CompressedChunk { indices, codes: q.codes, scale: q.scale, values });
    }
    Ok(Compressed { layout, config: *config, chunks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector<f64> {
        ParamVector::from_f64(v)
    }

    // Independent oracle: sort the whole chunk by (|v| desc, index asc).
    fn sort_oracle(chunk: &[f64], k: usize) -> Vec<u32> {
        let mut order: Vec<usize> = (0..chunk.len()).collect();
        order.sort_by(|&a, &b| chunk[b].abs().partial_cmp(&chunk[a].abs()).unwrap().then(a.cmp(&b)));
        let mut top: Vec<u32> = order[..k.min(chunk.len())].iter().map(|&i| i as u32).collect();
        top.sort();
        top
    }

    #[test]
    fn topk_examples() {
        let v = pv(&[1., -3., 2., 0.]);
        let layout = ChunkLayout::new(4, 4).unwrap();
        let sel = chunk_topk(&v, &layout, 1).unwrap();
        assert_eq!(sel.chunks[0].indices, vec![1]);
        assert_eq!(sel.chunks[0].values, vec![-3.]);
        let all = chunk_topk(&v, &layout, 4).unwrap();
        assert_eq!(all.chunks[0].indices, vec![0, 1, 2, 3]);
        assert_eq!(all.to_dense(), v);
        assert!(matches!(chunk_topk(&v, &layout, 0), Err(CompressError::KOutOfRange { .. })));
        assert!(matches!(chunk_topk(&v, &layout, 5), Err(CompressError::KOutOfRange { .. })));
    }

    #[test]
    fn topk_ties_prefer_lower_index() {
        let v = pv(&[1., -1., 1., 1., 0.5]);
        let layout = ChunkLayout::new(5, 5).unwrap();
        assert_eq!(chunk_topk(&v, &layout, 2).unwrap().chunks[0].indices, vec![0, 1]);
    }

    #[test]
    fn topk_matches_sort_oracle() {
        let mut rng = Rng::new(11, 0);
        let v: ParamVector<f64> = ParamVector::new((0..10_000).map(|_| rng.normal()).collect()).unwrap();
        let layout = ChunkLayout::new(10_000, 256).unwrap();
        let sel = chunk_topk(&v, &layout, 16).unwrap();
        for (c, r) in layout.ranges().enumerate() {
            assert_eq!(sel.chunks[c].indices, sort_oracle(&v.as_slice()[r], 16), "chunk {c}");
        }
        // Tail chunk of 16 entries keeps everything.
        assert_eq!(sel.chunks.last().unwrap().indices.len(), 16);
    }

    #[test]
    fn tail_chunk_uses_min_k() {
        let v: ParamVector<f64> = ParamVector::from_f64(&[5., 4., 3., 2., 1., 9.]);
        let layout = ChunkLayout::new(6, 4).unwrap();
        let sel = chunk_topk(&v, &layout, 3).unwrap();
        assert_eq!(sel.chunks[0].indices, vec![0, 1, 2]);
        assert_eq!(sel.chunks[1].indices, vec![0, 1]);
    }

    #[test]
    fn randk_full_and_deterministic() {
        let v = pv(&[1., 2., 3., 4., 5., 6., 7., 8.]);
        let layout = ChunkLayout::new(8, 8).unwrap();
        let all = chunk_randk(&v, &layout, 8, &mut Rng::new(1, 1)).unwrap();
        assert_eq!(all.chunks[0].indices, (0..8).collect::<Vec<u32>>());
        let a = chunk_randk(&v, &layout, 3, &mut Rng::new(4, 2)).unwrap();
        let b = chunk_randk(&v, &layout, 3, &mut Rng::new(4, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn randk_is_uniform() {
        let v = pv(&[0.; 8]);
        let layout = ChunkLayout::new(8, 8).unwrap();
        let mut rng = Rng::new(99, 0);
        let mut counts = [0usize; 8];
        let trials = 10_000;
        for _ in 0..trials {
            for &i in &chunk_randk(&v, &layout, 2, &mut rng).unwrap().chunks[0].indices {
                counts[i as usize] += 1;
            }
        }
        for c in counts {
            let f = c as f64 / trials as f64;
            assert!((f - 0.25).abs() <= 0.02, "{f}");
        }
    }

    fn naive_dct(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                let s: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| v * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos())
                    .sum();
                s * dct_scale(k, n)
            })
            .collect()
    }

    #[test]
    fn dct_matches_naive_transform() {
        let mut rng = Rng::new(5, 5);
        for n in [1, 2, 3, 7, 8, 33, 256] {
            let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let fast = dct_chunk(&x);
            for (a, b) in fast.iter().zip(naive_dct(&x)) {
                assert!((a - b).abs() < 1e-9, "n={n}");
            }
        }
    }

    #[test]
    fn dct_properties() {
        let c = 2.5;
        let n = 64;
        let y = dct_chunk(&vec![c; n]);
        assert!((y[0] - c * (n as f64).sqrt()).abs() < 1e-5);
        assert!(y[1..].iter().all(|v| v.abs() < 1e-5));

        let mut rng = Rng::new(8, 0);
        for n in [5, 64, 100, 4096] {
            let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let y = dct_chunk(&x);
            let back = dct_inverse(&y);
            let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((nx - ny).abs() / nx < 1e-5);
            let err: f64 = x.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err / nx < 1e-5);
        }
    }

    #[test]
    fn quantize_two_bit_example() {
        let q = quantize(&[-1.0f64, 0.9, 0.1, -0.2], QuantSpec::new(2).unwrap());
        assert_eq!(q.scale_f64(), 1.0);
        let d: Vec<f64> = dequantize(&q.codes, q.scale, QuantSpec::new(2).unwrap()).unwrap();
        assert_eq!(d, vec![-0.75, 0.75, 0.25, -0.25]);
    }

    #[test]
    fn passthrough_is_exact_in_f32() {
        let mut rng = Rng::new(2, 2);
        let x: Vec<f32> = (0..100).map(|_| rng.normal() as f32 * 1e3).collect();
        let q = quantize(&x, QuantSpec::full());
        assert_eq!(dequantize::<f32>(&q.codes, q.scale, QuantSpec::full()).unwrap(), x);
    }

    #[test]
    fn zero_chunk_and_one_bit() {
        let q = quantize(&[0.0f64; 5], QuantSpec::new(3).unwrap());
        assert_eq!(q.scale, 0);
        assert!(q.codes.iter().all(|&c| c == 0));
        let d: Vec<f64> = dequantize(&q.codes, q.scale, QuantSpec::new(3).unwrap()).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));

        let vals = [0.5f64, -1.5, 1.0, -1.0];
        let q = quantize(&vals, QuantSpec::new(1).unwrap());
        let d: Vec<f64> = dequantize(&q.codes, q.scale, QuantSpec::new(1).unwrap()).unwrap();
        assert_eq!(d, vec![1.0, -1.0, 1.0, -1.0]);
    }

    #[test]
    fn invalid_codes_rejected() {
        assert!(matches!(
            dequantize::<f64>(&[4], 0x3c00, QuantSpec::new(2).unwrap()),
            Err(CompressError::InvalidCode { code: 4, bits: 2 })
        ));
        assert!(QuantSpec::new(5).is_err());
    }

    #[test]
    fn four_bit_error_bound_on_random_values() {
        let mut rng = Rng::new(77, 0);
        let spec = QuantSpec::new(4).unwrap();
        for _ in 0..200 {
            let x: Vec<f64> = (0..64).map(|_| rng.normal() * 0.01).collect();
            let q = quantize(&x, spec);
            let d: Vec<f64> = dequantize(&q.codes, q.scale, spec).unwrap();
            let s = q.scale_f64();
            let absmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(s >= absmax && s <= absmax * (1.0 + 1.0 / 1024.0) + 6e-8);
            for (a, b) in x.iter().zip(&d) {
                assert!((a - b).abs() <= s / 16.0 + 1e-15);
            }
        }
    }

    #[test]
    fn compress_dense_passthrough_is_identity() {
        let mut rng = Rng::new(3, 3);
        let v: ParamVector<f64> = ParamVector::new((0..1000).map(|_| rng.normal()).collect()).unwrap();
        let cfg = CompressorConfig { chunk_size: 64, k: 64, selection: Selection::TopK, dct: false, quant: QuantSpec::full() };
        let c = compress(&v, &cfg, &mut rng).unwrap();
        assert_eq!(c.to_dense(), v);

        let cfg = CompressorConfig { dct: true, ..cfg };
        let c = compress(&v, &cfg, &mut rng).unwrap();
        assert!(c.to_dense().max_abs_diff(&v).unwrap() < 1e-10);
    }

    #[test]
    fn topk_energy_monotone() {
        let mut rng = Rng::new(21, 0);
        let v: ParamVector<f64> = ParamVector::new((0..300).map(|_| rng.normal()).collect()).unwrap();
        let layout = ChunkLayout::new(300, 32).unwrap();
        let mut prev = 0.0;
        for k in 1..=32 {
            let e = chunk_topk(&v, &layout, k).unwrap().to_dense().norm2();
            assert!(e >= prev);
            prev = e;
        }
        assert!((prev - v.norm2()).abs() < 1e-12);
    }
}
