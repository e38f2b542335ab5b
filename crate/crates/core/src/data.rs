//! Synthetic teacher-labelled classification data, split into homogeneous shards.
//!
//! Binary dump layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SLDS"
//! 4       4     version (1)
//! 8       4     input_dim
//! 12      4     n_classes
//! 16      4     num_shards
//! 20      8     n_samples
//! 28      4*n*d inputs, row-major f32
//! ...     4*n   labels, u32
//! ```

use std::io::{Read, Write};

use thiserror::Error;

use crate::model::{Batch, MlpArch};
use crate::tensor::{ParamVector, Real, Rng};

pub const DATASET_MAGIC: &[u8; 4] = b"SLDS";
pub const DATASET_VERSION: u32 = 1;
const HEADER_LEN: usize = 28;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset spec: {0}")]
    Spec(String),
    #[error("bad dataset magic")]
    Magic,
    #[error("unsupported dataset version {0}")]
    Version(u32),
    #[error("truncated or oversized dataset file: expected {expected} bytes, got {got}")]
    Length { expected: u64, got: u64 },
    #[error("corrupt dataset: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Feature rows with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub input_dim: usize,
    pub n_classes: usize,
    pub inputs: Vec<f32>,
    pub labels: Vec<u32>,
}

impl LabeledData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn batch<T: Real>(&self, indices: &[usize]) -> Batch<T> {
        let mut inputs = Vec::with_capacity(indices.len() * self.input_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend(self.row(i).iter().map(|&x| T::lit(x as f64)));
            labels.push(self.labels[i]);
        }
        Batch { inputs, labels }
    }

    pub fn full_batch<T: Real>(&self) -> Batch<T> {
        Batch { inputs: self.inputs.iter().map(|&x| T::lit(x as f64)).collect(), labels: self.labels.clone() }
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.n_classes];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }
}

/// Training data partitioned round-robin: sample `i` belongs to shard `i % num_shards`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardedDataset {
    pub data: LabeledData,
    pub num_shards: usize,
}

impl ShardedDataset {
    pub fn new(data: LabeledData, num_shards: usize) -> Result<Self, DataError> {
        if num_shards == 0 || num_shards > data.len() {
            return Err(DataError::Spec(format!(
                "cannot split {} samples into {num_shards} shards",
                data.len()
            )));
        }
        Ok(Self { data, num_shards })
    }

    pub fn shard_of(&self, index: usize) -> usize {
        index % self.num_shards
    }

    pub fn shard_len(&self, shard: usize) -> usize {
        let n = self.data.len();
        n / self.num_shards + usize::from(shard < n % self.num_shards)
    }

    pub fn shard_indices(&self, shard: usize) -> Vec<usize> {
        (shard..self.data.len()).step_by(self.num_shards).collect()
    }

    /// `batch_size` distinct samples from one shard (with replacement across calls).
    pub fn sample_batch<T: Real>(&self, shard: usize, batch_size: usize, rng: &mut Rng) -> Batch<T> {
        let len = self.shard_len(shard);
        let picks = rng.sample_sorted(len, batch_size.min(len));
        let global: Vec<usize> = picks.into_iter().map(|j| shard + j * self.num_shards).collect();
        self.data.batch(&global)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub seed: u64,
    pub n_samples: usize,
    pub n_eval: usize,
    pub input_dim: usize,
    pub n_classes: usize,
    pub teacher_depth: usize,
    pub teacher_width: usize,
    pub num_shards: usize,
}

/// Training shards plus a held-out set drawn from the same teacher.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub train: ShardedDataset,
    pub eval: LabeledData,
}

const TEACHER_GAIN: f64 = 2.0;

/// Gaussian inputs labelled by a fixed random teacher MLP.
///
/// Teacher logits are centred per class over the whole generated pool before
/// the argmax so that no class dominates.
pub fn generate_synthetic(spec: &DatasetSpec) -> Result<SyntheticTask, DataError> {
    if spec.n_samples == 0 || spec.input_dim == 0 || spec.n_classes == 0 || spec.num_shards == 0 {
        return Err(DataError::Spec("all counts must be positive".into()));
    }
    if spec.teacher_depth > 0 && spec.teacher_width == 0 {
        return Err(DataError::Spec("teacher_width must be positive".into()));
    }
    let mut dims = vec![spec.input_dim];
    dims.extend(std::iter::repeat_n(spec.teacher_width, spec.teacher_depth));
    dims.push(spec.n_classes);
    let teacher = MlpArch::new(dims).map_err(|e| DataError::Spec(e.to_string()))?;
    let mut teacher_rng = Rng::new(spec.seed, 0x7EAC_0000);
    let teacher_params: ParamVector<f64> = teacher.init_params(&mut teacher_rng, TEACHER_GAIN);

    let total = spec.n_samples + spec.n_eval;
    let mut input_rng = Rng::new(spec.seed, 0x1D47_0000);
    let inputs: Vec<f32> = (0..total * spec.input_dim).map(|_| input_rng.normal() as f32).collect();

    let c = spec.n_classes;
    let mut logits = Vec::with_capacity(total * c);
    const BLOCK: usize = 1024;
    for start in (0..total).step_by(BLOCK) {
        let end = (start + BLOCK).min(total);
        let batch = Batch::<f64> {
            inputs: inputs[start * spec.input_dim..end * spec.input_dim].iter().map(|&x| x as f64).collect(),
            labels: vec![0; end - start],
        };
        logits.extend(teacher.logits(&teacher_params, &batch).map_err(|e| DataError::Spec(e.to_string()))?);
    }
    let mut means = vec![0.0; c];
    for row in logits.chunks_exact(c) {
        for (m, &v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= total as f64;
    }
    let labels: Vec<u32> = logits
        .chunks_exact(c)
        .map(|row| {
            let mut best = 0;
            for j in 1..c {
                if row[j] - means[j] > row[best] - means[best] {
                    best = j;
                }
            }
            best as u32
        })
        .collect();

    let split = spec.n_samples * spec.input_dim;
    let train = LabeledData {
        input_dim: spec.input_dim,
        n_classes: c,
        inputs: inputs[..split].to_vec(),
        labels: labels[..spec.n_samples].to_vec(),
    };
    let eval = LabeledData {
        input_dim: spec.input_dim,
        n_classes: c,
        inputs: inputs[split..].to_vec(),
        labels: labels[spec.n_samples..].to_vec(),
    };
    Ok(SyntheticTask { train: ShardedDataset::new(train, spec.num_shards)?, eval })
}

pub fn encode_dataset(ds: &ShardedDataset) -> Vec<u8> {
    let d = &ds.data;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * d.inputs.len() + 4 * d.labels.len());
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(d.input_dim as u32).to_le_bytes());
    out.extend_from_slice(&(d.n_classes as u32).to_le_bytes());
    out.extend_from_slice(&(ds.num_shards as u32).to_le_bytes());
    out.extend_from_slice(&(d.len() as u64).to_le_bytes());
    for x in &d.inputs {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for l in &d.labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Parses a dataset dump, rejecting anything inconsistent.
pub fn decode_dataset(bytes: &[u8]) -> Result<ShardedDataset, DataError> {
    if bytes.len() < HEADER_LEN {
        return Err(DataError::Length { expected: HEADER_LEN as u64, got: bytes.len() as u64 });
    }
    if &bytes[..4] != DATASET_MAGIC {
        return Err(DataError::Magic);
    }
    let version = u32_at(bytes, 4);
    if version != DATASET_VERSION {
        return Err(DataError::Version(version));
    }
    let input_dim = u32_at(bytes, 8) as u64;
    let n_classes = u32_at(bytes, 12) as u64;
    let num_shards = u32_at(bytes, 16) as u64;
    let n = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
    if input_dim == 0 || n_classes == 0 || num_shards == 0 || n == 0 {
        return Err(DataError::Corrupt("zero dimension in header".into()));
    }
    let expected = n
        .checked_mul(input_dim)
        .and_then(|v| v.checked_add(n))
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| DataError::Corrupt("header sizes overflow".into()))?;
    if expected != bytes.len() as u64 {
        return Err(DataError::Length { expected, got: bytes.len() as u64 });
    }
    let (n, input_dim, n_classes) = (n as usize, input_dim as usize, n_classes as usize);
    let body = &bytes[HEADER_LEN..];
    let (xs, ls) = body.split_at(4 * n * input_dim);
    let inputs: Vec<f32> = xs.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    if inputs.iter().any(|x| !x.is_finite()) {
        return Err(DataError::Corrupt("non-finite input value".into()));
    }
    let labels: Vec<u32> = ls.chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).collect();
    if let Some(l) = labels.iter().find(|&&l| l as usize >= n_classes) {
        return Err(DataError::Corrupt(format!("label {l} >= {n_classes} classes")));
    }
    ShardedDataset::new(LabeledData { input_dim, n_classes, inputs, labels }, num_shards as usize)
}

pub fn write_dataset(ds: &ShardedDataset, mut w: impl Write) -> Result<(), DataError> {
    w.write_all(&encode_dataset(ds))?;
    Ok(())
}

pub fn read_dataset(mut r: impl Read) -> Result<ShardedDataset, DataError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    decode_dataset(&buf)
}
