#![allow(dead_code)]

use sparseloco::config::{AlgorithmConfig, CompressionConfig, Precision, RunConfig};
use sparseloco::data::{generate_synthetic, SyntheticTask};
use sparseloco::harness::{toy_config, TOY_CHUNK};
use sparseloco::index_codec::IndexCodec;
use sparseloco::model::MlpArch;
use sparseloco::sim::{data_stream, init_stream};
use sparseloco::ParamVector;

/// The ablation toy task in 64-bit with `outer_steps` synchronizations.
pub fn toy64(algorithm: AlgorithmConfig, outer_steps: usize) -> RunConfig {
    let mut cfg = toy_config();
    cfg.precision = Precision::F64;
    cfg.train.inner_steps = if algorithm.is_per_step() { 1 } else { cfg.train.inner_steps };
    cfg.train.total_inner_steps = cfg.train.inner_steps * outer_steps;
    cfg.train.warmup_steps = cfg.train.warmup_steps.min(cfg.train.total_inner_steps - 1);
    cfg.algorithm = algorithm;
    cfg
}

pub fn compression(density: f64, bits: u8) -> CompressionConfig {
    CompressionConfig { chunk_size: TOY_CHUNK, density: Some(density), bits, codec: IndexCodec::Enumerative, ..Default::default() }
}

/// max |a - b| relative to max |b|.
pub fn rel_diff(a: &ParamVector<f64>, b: &ParamVector<f64>) -> f64 {
    let scale = b.norm_inf().max(f64::MIN_POSITIVE);
    a.max_abs_diff(b).unwrap() / scale
}

fn schedule(cfg: &RunConfig, step: usize) -> f64 {
    let t = &cfg.train;
    let (base, min) = (t.inner_lr, t.inner_lr * t.min_lr_ratio);
    if step < t.warmup_steps {
        return base * step as f64 / t.warmup_steps as f64;
    }
    let p = (step - t.warmup_steps) as f64 / (t.total_inner_steps - t.warmup_steps) as f64;
    min + (base - min) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos())
}

/// Single-replica AdamW written out longhand on plain vectors: the parameters
/// after each of `steps` steps, drawing batches exactly as replica 0 does.
pub fn plain_adamw(cfg: &RunConfig, task: &SyntheticTask, steps: usize) -> Vec<Vec<f64>> {
    let arch = MlpArch::new(cfg.layer_dims()).unwrap();
    let mut p: Vec<f64> = arch.init_params::<f64>(&mut init_stream(cfg.seed), cfg.model.init_gain).into_vec();
    let mut m = vec![0.0; p.len()];
    let mut v = vec![0.0; p.len()];
    let a = cfg.train.adamw;
    let mut rng = data_stream(cfg.seed, 0);
    let mut out = Vec::with_capacity(steps);
    for s in 0..steps {
        let lr = schedule(cfg, s);
        let batch = task.train.sample_batch::<f64>(0, cfg.train.local_batch, &mut rng);
        let params = ParamVector::new(p.clone()).unwrap();
        let (_, g) = arch.loss_and_grad(&params, &batch).unwrap();
        let mut g = g.into_vec();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > cfg.train.grad_clip {
            let c = cfg.train.grad_clip / norm;
            g.iter_mut().for_each(|x| *x *= c);
        }
        let t = (s + 1) as i32;
        for i in 0..p.len() {
            m[i] = a.beta1 * m[i] + (1.0 - a.beta1) * g[i];
            v[i] = a.beta2 * v[i] + (1.0 - a.beta2) * g[i] * g[i];
            let mh = m[i] / (1.0 - a.beta1.powi(t));
            let vh = v[i] / (1.0 - a.beta2.powi(t));
            p[i] = p[i] * (1.0 - lr * a.weight_decay) - lr * mh / (vh.sqrt() + a.eps);
        }
        out.push(p.clone());
    }
    out
}

pub fn task_for(cfg: &RunConfig) -> SyntheticTask {
    generate_synthetic(&cfg.dataset_spec()).unwrap()
}

/// log2 binom(n, k) from the product formula in f64, independent of the
/// big-integer path.
pub fn log2_binom_product(n: usize, k: usize) -> f64 {
    (0..k).map(|i| ((n - i) as f64).log2() - ((i + 1) as f64).log2()).sum()
}
