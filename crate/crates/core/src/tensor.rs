//! Flat parameter vectors, chunk layouts and seeded random streams.
//!
//! Every model parameter, pseudo-gradient and accumulator in the simulator is
//! a [`ParamVector`]. Reductions run in a fixed order so that results are
//! bit-identical regardless of how work is scheduled.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, Index, IndexMut, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Scalar type of model state. Implemented for `f32` (training default) and
/// `f64` (used to check algebraic equivalences at tight tolerances).
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + 'static
{
    const NAME: &'static str;

    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn lit(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("parameter vectors must be non-empty")]
    Empty,
    #[error("cosine similarity is undefined for two zero vectors")]
    UndefinedSimilarity,
    #[error("invalid chunk layout: len={len}, chunk_size={chunk_size}")]
    InvalidLayout { len: usize, chunk_size: usize },
}

#[inline]
pub(crate) fn check_len(left: usize, right: usize) -> Result<(), TensorError> {
    if left == right {
        Ok(())
    } else {
        Err(TensorError::DimensionMismatch { left, right })
    }
}

/// Dot product with a fixed eight-lane accumulation order.
///
/// The lane split lets the compiler vectorize the loop while keeping the
/// summation order independent of the target or thread count.
#[inline]
pub fn dot_slices<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let xa = &a[c * 8..c * 8 + 8];
        let xb = &b[c * 8..c * 8 + 8];
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// `y += a * x` over slices.
#[inline]
pub fn axpy_slices<T: Real>(a: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Flat vector of model parameters or parameter-shaped state.
#[derive(Clone, PartialEq, Default)]
pub struct ParamVector<T> {
    data: Vec<T>,
}

impl<T: Debug> Debug for ParamVector<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.data.len() <= 8 {
            f.debug_list().entries(self.data.iter()).finish()
        } else {
            write!(f, "ParamVector[len={}]", self.data.len())
        }
    }
}

impl<T: Real> ParamVector<T> {
    pub fn new(data: Vec<T>) -> Result<Self, TensorError> {
        if data.is_empty() {
            return Err(TensorError::Empty);
        }
        Ok(Self { data })
    }

    pub fn zeros(len: usize) -> Self {
        Self { data: vec![T::zero(); len] }
    }

    pub fn from_f64(values: &[f64]) -> Self {
        Self { data: values.iter().map(|&x| T::lit(x)).collect() }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    pub fn cast<U: Real>(&self) -> ParamVector<U> {
        ParamVector { data: self.data.iter().map(|&x| U::lit(x.as_f64())).collect() }
    }

    pub fn dot(&self, other: &Self) -> Result<T, TensorError> {
        check_len(self.len(), other.len())?;
        Ok(dot_slices(&self.data, &other.data))
    }

    pub fn norm2(&self) -> T {
        dot_slices(&self.data, &self.data).sqrt()
    }

    pub fn norm_inf(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    /// `self += a * x`
    pub fn axpy_in_place(&mut self, a: T, x: &Self) -> Result<(), TensorError> {
        check_len(self.len(), x.len())?;
        axpy_slices(a, &x.data, &mut self.data);
        Ok(())
    }

    pub fn scale_in_place(&mut self, a: T) {
        for x in &mut self.data {
            *x *= a;
        }
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self, TensorError> {
        check_len(self.len(), other.len())?;
        Ok(Self { data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect() })
    }

    pub fn sub_assign(&mut self, other: &Self) -> Result<(), TensorError> {
        check_len(self.len(), other.len())?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<(), TensorError> {
        check_len(self.len(), other.len())?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<T, TensorError> {
        check_len(self.len(), other.len())?;
        Ok(self.data.iter().zip(&other.data).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    /// Mean of equally sized vectors, reduced left to right in slice order.
    pub fn mean_of(vectors: &[&Self]) -> Result<Self, TensorError> {
        let first = vectors.first().ok_or(TensorError::Empty)?;
        let mut out = Self::zeros(first.len());
        for v in vectors {
            out.add_assign(v)?;
        }
        let inv = T::one() / T::lit(vectors.len() as f64);
        out.scale_in_place(inv);
        Ok(out)
    }
}

impl<T> Index<usize> for ParamVector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.data[i]
    }
}

impl<T> IndexMut<usize> for ParamVector<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.data[i]
    }
}

/// Returns `a * x + y`.
pub fn axpy<T: Real>(a: T, x: &ParamVector<T>, y: &ParamVector<T>) -> Result<ParamVector<T>, TensorError> {
    let mut out = y.clone();
    out.axpy_in_place(a, x)?;
    Ok(out)
}

/// Cosine of the angle between `a` and `b`.
///
/// A single zero vector yields 0; two zero vectors are an error.
pub fn cosine_similarity<T: Real>(a: &ParamVector<T>, b: &ParamVector<T>) -> Result<T, TensorError> {
    check_len(a.len(), b.len())?;
    let na = a.norm2();
    let nb = b.norm2();
    if na.is_zero() && nb.is_zero() {
        return Err(TensorError::UndefinedSimilarity);
    }
    if na.is_zero() || nb.is_zero() {
        return Ok(T::zero());
    }
    let c = dot_slices(a.as_slice(), b.as_slice()) / (na * nb);
    Ok(c.max(-T::one()).min(T::one()))
}

/// Partition of a flat vector into fixed-size chunks; the last chunk may be short.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkLayout {
    pub len: usize,
    pub chunk_size: usize,
    pub num_chunks: usize,
    pub tail_len: usize,
}

impl ChunkLayout {
    pub fn new(len: usize, chunk_size: usize) -> Result<Self, TensorError> {
        if len == 0 || chunk_size == 0 {
            return Err(TensorError::InvalidLayout { len, chunk_size });
        }
        let num_chunks = len.div_ceil(chunk_size);
        let tail_len = len - chunk_size * (num_chunks - 1);
        Ok(Self { len, chunk_size, num_chunks, tail_len })
    }

    pub fn chunk_len(&self, chunk: usize) -> usize {
        if chunk + 1 == self.num_chunks {
            self.tail_len
        } else {
            self.chunk_size
        }
    }

    pub fn chunk_range(&self, chunk: usize) -> std::ops::Range<usize> {
        let start = chunk * self.chunk_size;
        start..start + self.chunk_len(chunk)
    }

    /// Per-chunk selection count, clamped to the chunk length.
    pub fn k_for(&self, chunk: usize, k: usize) -> usize {
        k.min(self.chunk_len(chunk))
    }

    pub fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        (0..self.num_chunks).map(|c| self.chunk_range(c))
    }
}

pub fn chunk_layout(len: usize, chunk_size: usize) -> Result<ChunkLayout, TensorError> {
    ChunkLayout::new(len, chunk_size)
}

/// Counter-based random stream keyed by `(seed, stream_id)`.
///
/// Backed by ChaCha8, whose output is specified independently of platform, so
/// a given key yields the same sequence everywhere.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// `k` distinct values from `0..n`, sorted ascending.
    pub fn sample_sorted(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx = rand::seq::index::sample(&mut self.inner, n, k).into_vec();
        idx.sort_unstable();
        idx
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector<f64> {
        ParamVector::from_f64(v)
    }

    #[test]
    fn axpy_examples() {
        assert_eq!(axpy(0.0, &pv(&[1., 2.]), &pv(&[3., 4.])).unwrap(), pv(&[3., 4.]));
        assert_eq!(axpy(1.0, &pv(&[1., 1.]), &pv(&[0., 0.])).unwrap(), pv(&[1., 1.]));
        assert_eq!(axpy(2.0, &pv(&[1., -1.]), &pv(&[1., 1.])).unwrap(), pv(&[3., -1.]));
        assert_eq!(
            axpy(1.0, &pv(&[1.]), &pv(&[1., 2.])),
            Err(TensorError::DimensionMismatch { left: 2, right: 1 })
        );
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&pv(&[1., 2., 3.]), &pv(&[1., 2., 3.])).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&pv(&[1., 0.]), &pv(&[0., 1.])).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&pv(&[1., 0.]), &pv(&[-1., 0.])).unwrap(), -1.0);
        assert_eq!(
            cosine_similarity(&pv(&[0., 0.]), &pv(&[0., 0.])),
            Err(TensorError::UndefinedSimilarity)
        );
    }

    #[test]
    fn cosine_scale_invariant_f32() {
        let mut rng = Rng::new(3, 0);
        for _ in 0..50 {
            let a: ParamVector<f32> =
                ParamVector::new((0..257).map(|_| rng.normal() as f32).collect()).unwrap();
            let c = (rng.uniform() * 100.0 + 1e-3) as f32;
            let mut b = a.clone();
            b.scale_in_place(c);
            assert!((cosine_similarity(&a, &b).unwrap() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn layout_examples() {
        let l = chunk_layout(8192, 4096).unwrap();
        assert_eq!((l.num_chunks, l.tail_len), (2, 4096));
        let l = chunk_layout(5000, 4096).unwrap();
        assert_eq!((l.num_chunks, l.tail_len), (2, 904));
        assert_eq!(l.chunk_range(1), 4096..5000);
        let l = chunk_layout(10, 4096).unwrap();
        assert_eq!((l.num_chunks, l.tail_len), (1, 10));
        assert!(chunk_layout(0, 4).is_err());
        assert!(chunk_layout(4, 0).is_err());
    }

    #[test]
    fn rng_streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = {
            let mut r = Rng::new(7, 1);
            (0..4).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = Rng::new(7, 1);
            (0..4).map(|_| r.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut r = Rng::new(7, 2);
            (0..4).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn mean_is_fixed_order() {
        let a = pv(&[1., 2.]);
        let b = pv(&[3., 6.]);
        assert_eq!(ParamVector::mean_of(&[&a, &b]).unwrap(), pv(&[2., 4.]));
    }

    #[test]
    fn dot_matches_naive() {
        let mut rng = Rng::new(1, 1);
        let a: Vec<f64> = (0..37).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..37).map(|_| rng.normal()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot_slices(&a, &b) - naive).abs() < 1e-12);
    }
}
