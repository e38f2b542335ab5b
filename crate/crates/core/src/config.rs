//! Run configuration: TOML schema, defaults and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compress::{CompressorConfig, QuantSpec, Selection};
use crate::data::DatasetSpec;
use crate::index_codec::IndexCodec;
use crate::optim::AdamWConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("config serialize error: {0}")]
    Serialize(String),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Hidden layer widths; input and output widths come from `[data]`.
    pub hidden: Vec<usize>,
    pub init_gain: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: vec![512, 256], init_gain: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub n_eval: usize,
    pub input_dim: usize,
    pub n_classes: usize,
    pub teacher_depth: usize,
    pub teacher_width: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { seed: 0, n_samples: 32768, n_eval: 2048, input_dim: 128, n_classes: 16, teacher_depth: 1, teacher_width: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub replicas: usize,
    /// Inner steps per outer step (H).
    pub inner_steps: usize,
    pub total_inner_steps: usize,
    pub local_batch: usize,
    pub inner_lr: f64,
    /// Final learning rate as a fraction of `inner_lr`.
    pub min_lr_ratio: f64,
    pub warmup_steps: usize,
    pub grad_clip: f64,
    pub adamw: AdamWConfig,
    /// Evaluate held-out loss every this many outer steps (0: only at the end).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            replicas: 8,
            inner_steps: 15,
            total_inner_steps: 1995,
            local_batch: 32,
            inner_lr: 1e-3,
            min_lr_ratio: 0.1,
            warmup_steps: 50,
            grad_clip: 1.0,
            adamw: AdamWConfig::default(),
            eval_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompressionConfig {
    pub chunk_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub bits: u8,
    pub codec: IndexCodec,
    pub selection: Selection,
    pub dct: bool,
    /// When false the whole vector is one chunk.
    pub chunking: bool,
}

impl Default for CompressionConfig {
    fn default() -> Self {
        Self {
            chunk_size: 4096,
            density: Some(0.0312),
            k: None,
            bits: 2,
            codec: IndexCodec::Enumerative,
            selection: Selection::TopK,
            dct: false,
            chunking: true,
        }
    }
}

/// `k = round(density * C)`, at least 1 and at most `C`.
pub fn density_to_k(density: f64, chunk_size: usize) -> usize {
    ((density * chunk_size as f64).round() as usize).clamp(1, chunk_size)
}

impl CompressionConfig {
    fn validate(&self, prefix: &str) -> Result<(), ConfigError> {
        let f = |name: &str| format!("{prefix}.{name}");
        if self.chunk_size == 0 {
            return Err(invalid(&f("chunk_size"), "must be positive"));
        }
        QuantSpec::new(self.bits).map_err(|e| invalid(&f("bits"), e.to_string()))?;
        if let Some(d) = self.density {
            if !(d > 0.0 && d <= 1.0) {
                return Err(invalid(&f("density"), format!("{d} not in (0, 1]")));
            }
        }
        match (self.density, self.k) {
            (None, None) => return Err(invalid(&f("density"), "one of `density` or `k` is required")),
            (_, Some(_)) if !self.chunking => {
                return Err(invalid(&f("k"), "with chunking disabled give `density` instead"));
            }
            (_, Some(k)) if k == 0 || k > self.chunk_size => {
                return Err(invalid(&f("k"), format!("{k} not in 1..={}", self.chunk_size)));
            }
            (Some(d), Some(k)) if density_to_k(d, self.chunk_size) != k => {
                return Err(invalid(
                    &f("k"),
                    format!("{k} disagrees with density {d} (round(density * C) = {})", density_to_k(d, self.chunk_size)),
                ));
            }
            _ => {}
        }
        if self.codec == IndexCodec::Dense && self.k.or(self.density.map(|d| density_to_k(d, self.chunk_size))) != Some(self.chunk_size) {
            return Err(invalid(&f("codec"), "dense codec requires full density"));
        }
        Ok(())
    }

    /// Effective compressor for a vector of `param_len` entries.
    pub fn resolve(&self, param_len: usize) -> CompressorConfig {
        let chunk_size = if self.chunking { self.chunk_size } else { param_len };
        let k = match (self.k, self.density) {
            (Some(k), _) if self.chunking => k,
            (_, Some(d)) => density_to_k(d, chunk_size),
            _ => chunk_size,
        };
        CompressorConfig {
            chunk_size,
            k,
            selection: self.selection,
            dct: self.dct,
            quant: QuantSpec::new(self.bits).expect("validated"),
        }
    }
}

fn default_momentum() -> f64 {
    0.9
}
fn default_ef_beta() -> f64 {
    0.95
}
fn default_demo_beta() -> f64 {
    0.999
}
fn default_subk_fraction() -> f64 {
    0.25
}
fn default_chunk() -> usize {
    4096
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlgorithmConfig {
    /// Per-step gradient averaging with a shared AdamW.
    AdamwDdp {},
    /// Global Nesterov outer optimizer; `momentum = 0` is outer SGD.
    Diloco {
        outer_lr: f64,
        #[serde(default = "default_momentum")]
        momentum: f64,
    },
    DilocoLom {
        outer_lr: f64,
        #[serde(default = "default_momentum")]
        momentum: f64,
    },
    DilocoLomSubk {
        outer_lr: f64,
        #[serde(default = "default_momentum")]
        momentum: f64,
        #[serde(default = "default_subk_fraction")]
        fraction: f64,
        #[serde(default = "default_chunk")]
        chunk_size: usize,
    },
    SparseLoco {
        outer_lr: f64,
        #[serde(default = "default_ef_beta")]
        ef_beta: f64,
        #[serde(default)]
        compression: CompressionConfig,
    },
    SparseLocoNesterov {
        outer_lr: f64,
        #[serde(default = "default_ef_beta")]
        ef_beta: f64,
        #[serde(default = "default_momentum")]
        momentum: f64,
        #[serde(default)]
        compression: CompressionConfig,
    },
    /// Single-step error feedback on raw gradients with sign descent.
    DemoLite {
        #[serde(default = "default_demo_beta")]
        ef_beta: f64,
        #[serde(default)]
        compression: CompressionConfig,
    },
}

impl AlgorithmConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::AdamwDdp {} => "adamw-ddp",
            Self::Diloco { .. } => "diloco",
            Self::DilocoLom { .. } => "diloco-lom",
            Self::DilocoLomSubk { .. } => "diloco-lom-subk",
            Self::SparseLoco { .. } => "sparse-loco",
            Self::SparseLocoNesterov { .. } => "sparse-loco-nesterov",
            Self::DemoLite { .. } => "demo-lite",
        }
    }

    /// Methods that synchronize after every inner step.
    pub fn is_per_step(&self) -> bool {
        matches!(self, Self::AdamwDdp {} | Self::DemoLite { .. })
    }

    pub fn compression(&self) -> Option<&CompressionConfig> {
        match self {
            Self::SparseLoco { compression, .. }
            | Self::SparseLocoNesterov { compression, .. }
            | Self::DemoLite { compression, .. } => Some(compression),
            _ => None,
        }
    }

    pub fn compression_mut(&mut self) -> Option<&mut CompressionConfig> {
        match self {
            Self::SparseLoco { compression, .. }
            | Self::SparseLocoNesterov { compression, .. }
            | Self::DemoLite { compression, .. } => Some(compression),
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(&format!("algorithm.{name}"), format!("{v} must be positive")))
            }
        };
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(invalid(&format!("algorithm.{name}"), format!("{v} not in [0, 1)")))
            }
        };
        match self {
            Self::AdamwDdp {} => {}
            Self::Diloco { outer_lr, momentum } | Self::DilocoLom { outer_lr, momentum } => {
                positive("outer_lr", *outer_lr)?;
                unit("momentum", *momentum)?;
            }
            Self::DilocoLomSubk { outer_lr, momentum, fraction, chunk_size } => {
                positive("outer_lr", *outer_lr)?;
                unit("momentum", *momentum)?;
                if !(0.0..=1.0).contains(fraction) {
                    return Err(invalid("algorithm.fraction", format!("{fraction} not in [0, 1]")));
                }
                if *chunk_size == 0 {
                    return Err(invalid("algorithm.chunk_size", "must be positive"));
                }
            }
            Self::SparseLoco { outer_lr, ef_beta, compression } => {
                positive("outer_lr", *outer_lr)?;
                unit("ef_beta", *ef_beta)?;
                compression.validate("algorithm.compression")?;
            }
            Self::SparseLocoNesterov { outer_lr, ef_beta, momentum, compression } => {
                positive("outer_lr", *outer_lr)?;
                unit("ef_beta", *ef_beta)?;
                unit("momentum", *momentum)?;
                compression.validate("algorithm.compression")?;
            }
            Self::DemoLite { ef_beta, compression } => {
                unit("ef_beta", *ef_beta)?;
                compression.validate("algorithm.compression")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommConfig {
    /// Value width used to account dense messages.
    pub dense_bits: u8,
    /// Chunk size used to account dense messages (one scale per chunk).
    pub dense_chunk_size: usize,
    /// Serialize every message and check it against the analytic size.
    pub verify_wire: bool,
}

impl Default for CommConfig {
    fn default() -> Self {
        Self { dense_bits: 32, dense_chunk_size: 4096, verify_wire: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub comm: CommConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "SweepConfig::is_empty")]
    pub sweep: SweepConfig,
}

/// Grid of overrides; a config with a non-empty sweep expands to one run per
/// combination.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub density: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub bits: Vec<u8>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inner_steps: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub seed: Vec<u64>,
}

impl SweepConfig {
    pub fn is_empty(&self) -> bool {
        self.density.is_empty() && self.bits.is_empty() && self.inner_steps.is_empty() && self.seed.is_empty()
    }
}

fn default_name() -> String {
    "run".to_string()
}

impl RunConfig {
    /// Default settings around the given algorithm.
    pub fn with_algorithm(algorithm: AlgorithmConfig) -> Self {
        let mut cfg = Self {
            name: default_name(),
            seed: 0,
            precision: Precision::F32,
            model: ModelConfig::default(),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            algorithm,
            comm: CommConfig::default(),
            out_dir: None,
            sweep: SweepConfig::default(),
        };
        if cfg.algorithm.is_per_step() {
            cfg.train.inner_steps = 1;
        }
        cfg
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Serialize(e.to_string()))
    }

    /// One config per sweep combination, each named after its overrides and
    /// validated. A config without a sweep expands to itself.
    pub fn expand(&self) -> Result<Vec<RunConfig>, ConfigError> {
        let sw = &self.sweep;
        if (!sw.density.is_empty() || !sw.bits.is_empty()) && self.algorithm.compression().is_none() {
            return Err(invalid("sweep", format!("{} has no compression to sweep", self.algorithm.kind())));
        }
        let opts = |v: &[f64]| if v.is_empty() { vec![None] } else { v.iter().map(|&x| Some(x)).collect() };
        let densities = opts(&sw.density);
        let bits: Vec<Option<f64>> = opts(&sw.bits.iter().map(|&b| b as f64).collect::<Vec<_>>());
        let hs: Vec<Option<f64>> = opts(&sw.inner_steps.iter().map(|&h| h as f64).collect::<Vec<_>>());
        let seeds: Vec<Option<u64>> = if sw.seed.is_empty() { vec![None] } else { sw.seed.iter().map(|&s| Some(s)).collect() };
        let mut out = Vec::new();
        for d in &densities {
            for b in &bits {
                for h in &hs {
                    for seed in &seeds {
                        let mut cfg = self.clone();
                        cfg.sweep = SweepConfig::default();
                        let mut name = self.name.clone();
                        if let Some(c) = cfg.algorithm.compression_mut() {
                            if let Some(d) = d {
                                c.density = Some(*d);
                                c.k = None;
                                name.push_str(&format!("_d{:.2}", d * 100.0));
                            }
                            if let Some(b) = b {
                                c.bits = *b as u8;
                                name.push_str(&format!("_b{b}"));
                            }
                        }
                        if let Some(h) = h {
                            cfg.train.inner_steps = *h as usize;
                            name.push_str(&format!("_h{h}"));
                        }
                        if let Some(s) = seed {
                            cfg.seed = *s;
                            name.push_str(&format!("_s{s}"));
                        }
                        cfg.name = name;
                        cfg.validate()?;
                        out.push(cfg);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.data.input_dim];
        dims.extend(&self.model.hidden);
        dims.push(self.data.n_classes);
        dims
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            seed: self.data.seed,
            n_samples: self.data.n_samples,
            n_eval: self.data.n_eval,
            input_dim: self.data.input_dim,
            n_classes: self.data.n_classes,
            teacher_depth: self.data.teacher_depth,
            teacher_width: self.data.teacher_width,
            num_shards: self.train.replicas,
        }
    }

    pub fn num_syncs(&self) -> usize {
        self.train.total_inner_steps / self.train.inner_steps
    }

    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.train;
        let d = &self.data;
        if self.model.hidden.contains(&0) {
            return Err(invalid("model.hidden", "widths must be positive"));
        }
        if !(self.model.init_gain > 0.0) {
            return Err(invalid("model.init_gain", "must be positive"));
        }
        if d.input_dim == 0 || d.n_classes < 2 {
            return Err(invalid("data", "need input_dim >= 1 and n_classes >= 2"));
        }
        if d.n_eval == 0 {
            return Err(invalid("data.n_eval", "must be positive"));
        }
        if d.teacher_depth > 0 && d.teacher_width == 0 {
            return Err(invalid("data.teacher_width", "must be positive"));
        }
        if t.replicas == 0 {
            return Err(invalid("train.replicas", "must be positive"));
        }
        if d.n_samples < t.replicas {
            return Err(invalid("data.n_samples", "need at least one sample per replica"));
        }
        if t.inner_steps == 0 {
            return Err(invalid("train.inner_steps", "must be positive"));
        }
        if self.algorithm.is_per_step() && t.inner_steps != 1 {
            return Err(invalid(
                "train.inner_steps",
                format!("{} synchronizes every step; inner_steps must be 1", self.algorithm.kind()),
            ));
        }
        if t.total_inner_steps == 0 || !t.total_inner_steps.is_multiple_of(t.inner_steps) {
            return Err(invalid(
                "train.total_inner_steps",
                format!("{} must be a positive multiple of inner_steps ({})", t.total_inner_steps, t.inner_steps),
            ));
        }
        if t.warmup_steps >= t.total_inner_steps {
            return Err(invalid("train.warmup_steps", "must be below total_inner_steps"));
        }
        if t.local_batch == 0 {
            return Err(invalid("train.local_batch", "must be positive"));
        }
        if !(t.inner_lr >= 0.0 && t.inner_lr.is_finite()) {
            return Err(invalid("train.inner_lr", "must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&t.min_lr_ratio) {
            return Err(invalid("train.min_lr_ratio", "not in [0, 1]"));
        }
        if !(t.grad_clip > 0.0) {
            return Err(invalid("train.grad_clip", "must be positive"));
        }
        let a = &t.adamw;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return Err(invalid("train.adamw", "betas must be in [0, 1)"));
        }
        if !(a.eps > 0.0) || !(a.weight_decay >= 0.0) {
            return Err(invalid("train.adamw", "need eps > 0 and weight_decay >= 0"));
        }
        QuantSpec::new(self.comm.dense_bits).map_err(|e| invalid("comm.dense_bits", e.to_string()))?;
        if self.comm.dense_chunk_size == 0 {
            return Err(invalid("comm.dense_chunk_size", "must be positive"));
        }
        self.algorithm.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPARSE: &str = r#"
name = "sl"
seed = 3

[train]
replicas = 4
inner_steps = 5
total_inner_steps = 100
warmup_steps = 10

[algorithm]
kind = "sparse-loco"
outer_lr = 1.0

[algorithm.compression]
chunk_size = 256
density = 0.0156
bits = 2
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = RunConfig::from_toml_str(SPARSE).unwrap();
        assert_eq!(cfg.train.replicas, 4);
        assert_eq!(cfg.train.adamw, AdamWConfig::default());
        let AlgorithmConfig::SparseLoco { ef_beta, compression, .. } = &cfg.algorithm else { panic!() };
        assert_eq!(*ef_beta, 0.95);
        assert_eq!(compression.resolve(10_000).k, 4);
        assert_eq!(cfg.num_syncs(), 20);
    }

    #[test]
    fn round_trip() {
        let cfg = RunConfig::from_toml_str(SPARSE).unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
        for alg in [
            AlgorithmConfig::AdamwDdp {},
            AlgorithmConfig::Diloco { outer_lr: 0.6, momentum: 0.9 },
            AlgorithmConfig::DilocoLomSubk { outer_lr: 0.6, momentum: 0.9, fraction: 0.25, chunk_size: 64 },
            AlgorithmConfig::DemoLite { ef_beta: 0.999, compression: CompressionConfig::default() },
        ] {
            let cfg = RunConfig::with_algorithm(alg);
            cfg.validate().unwrap();
            let text = cfg.to_toml_string().unwrap();
            assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg, "{text}");
        }
    }

    #[test]
    fn missing_outer_lr_names_the_field() {
        let err = RunConfig::from_toml_str("[algorithm]\nkind = \"diloco\"\n").unwrap_err();
        assert!(err.to_string().contains("outer_lr"), "{err}");
    }

    #[test]
    fn rejects_bad_values() {
        let cases = [
            (SPARSE.replace("inner_steps = 5", "inner_steps = 7"), "total_inner_steps"),
            (SPARSE.replace("density = 0.0156", "density = 1.5"), "density"),
            (SPARSE.replace("bits = 2", "bits = 5"), "bits"),
            (SPARSE.replace("density = 0.0156", "density = 0.0156\nk = 9"), "algorithm.compression.k"),
            (SPARSE.replace("outer_lr = 1.0", "outer_lr = -1.0"), "outer_lr"),
            (SPARSE.replace("seed = 3", "seed = 3\nbogus = 1"), "bogus"),
            (SPARSE.replace("kind = \"sparse-loco\"", "kind = \"demo-lite\""), "outer_lr"),
        ];
        for (text, needle) in cases {
            let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
            assert!(err.contains(needle), "{needle}: {err}");
        }
        let mut cfg = RunConfig::with_algorithm(AlgorithmConfig::DemoLite { ef_beta: 0.9, compression: CompressionConfig::default() });
        cfg.train.inner_steps = 15;
        assert!(cfg.validate().unwrap_err().to_string().contains("inner_steps"));
    }

    #[test]
    fn sweep_expands_one_run_per_arm() {
        let text = format!("{SPARSE}\n[sweep]\ndensity = [0.0078, 0.0156, 0.0312, 0.0625]\n");
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        let runs = cfg.expand().unwrap();
        let names: Vec<&str> = runs.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["sl_d0.78", "sl_d1.56", "sl_d3.12", "sl_d6.25"]);
        let ks: Vec<usize> = runs.iter().map(|r| r.algorithm.compression().unwrap().resolve(100_000).k).collect();
        assert_eq!(ks, [2, 4, 8, 16]);
        assert_eq!(RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap(), cfg);
        assert_eq!(RunConfig::from_toml_str(SPARSE).unwrap().expand().unwrap().len(), 1);
        let bad = RunConfig::with_algorithm(AlgorithmConfig::Diloco { outer_lr: 0.6, momentum: 0.9 });
        let mut bad = bad;
        bad.sweep.density = vec![0.1];
        assert!(bad.expand().is_err());
    }

    #[test]
    fn density_grid_maps_to_paper_k() {
        let ks: Vec<usize> = [0.0078, 0.0156, 0.0312, 0.0625].iter().map(|&d| density_to_k(d, 4096)).collect();
        assert_eq!(ks, vec![32, 64, 128, 256]);
    }

    #[test]
    fn unchunked_uses_whole_vector() {
        let c = CompressionConfig { chunking: false, density: Some(0.01), ..Default::default() };
        let r = c.resolve(5000);
        assert_eq!((r.chunk_size, r.k), (5000, 50));
    }

    #[test]
    fn default_model_has_enough_chunks() {
        let cfg = RunConfig::with_algorithm(AlgorithmConfig::Diloco { outer_lr: 0.6, momentum: 0.9 });
        let arch = crate::model::MlpArch::new(cfg.layer_dims()).unwrap();
        assert!(arch.param_count().div_ceil(4096) >= 50);
    }
}
