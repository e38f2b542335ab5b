//! The multi-replica outer loop: inner AdamW loops on every shard, then one
//! synchronizing outer step per `H` inner steps.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::compress::{CompressError, Compressed, CompressorConfig};
use crate::config::{AlgorithmConfig, ConfigError, Precision, RunConfig};
use crate::data::{generate_synthetic, DataError, SyntheticTask};
use crate::index_codec::IndexCodec;
use crate::model::{Batch, MlpArch, ModelError};
use crate::optim::{clip_grad_norm, AdamWState, LrSchedule, OptimError};
use crate::outer::{
    apply_update, check_synchronized, demo_lite_step, lom_direction, lom_subk, nesterov_direction,
    sparseloco_outer_step, sparseloco_plus_nesterov_step, OuterError,
};
use crate::tensor::{cosine_similarity, ChunkLayout, ParamVector, Real, Rng, TensorError};
use crate::wire::{dense_message_size_bytes, message_size_bytes, SparseMessage, WireError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Outer(#[from] OuterError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Compress(#[from] CompressError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("non-finite {what} at outer step {outer_step}")]
    NumericFailure { outer_step: usize, what: String },
    #[error("run already finished after {0} outer steps")]
    Finished(usize),
}

const INIT_STREAM: u64 = 0x11;
const DATA_STREAM: u64 = 0xDA7A_0000;
const SELECT_STREAM: u64 = 0x5E1E_0000;

/// RNG stream replica `r` samples its minibatches from.
pub fn data_stream(seed: u64, replica: usize) -> Rng {
    Rng::new(seed, DATA_STREAM + replica as u64)
}

/// RNG stream used for the initial parameters.
pub fn init_stream(seed: u64) -> Rng {
    Rng::new(seed, INIT_STREAM)
}

fn select_stream(seed: u64, replica: usize) -> Rng {
    Rng::new(seed, SELECT_STREAM + replica as u64)
}

/// Metrics for one outer step.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub outer_step: usize,
    pub inner_step_global: usize,
    /// Learning rate of the last inner step.
    pub lr: f64,
    pub mean_loss: f64,
    /// Mean minibatch loss of each replica over this step's inner loop.
    pub replica_losses: Vec<f64>,
    pub bytes_sent_per_worker: u64,
    /// Mean over replicas of cos(accumulator_r, reference momentum).
    pub cosine_to_reference: Option<f64>,
    /// cos(mean_r accumulator_r, reference momentum).
    pub cosine_mean_accumulator: Option<f64>,
    pub eval_loss: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub name: String,
    pub algorithm: String,
    pub param_count: usize,
    pub replicas: usize,
    pub message_bytes: u64,
    pub records: Vec<OuterRecord>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsLog {
    pub fn final_eval_loss(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.eval_loss)
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.mean_loss)
    }

    pub fn total_bytes_per_worker(&self) -> u64 {
        self.records.iter().map(|r| r.bytes_sent_per_worker).sum()
    }

    /// Mean of the per-step cosine diagnostics over the first `steps` outer steps.
    pub fn mean_cosines(&self, steps: usize) -> Option<(f64, f64)> {
        let rows: Vec<_> = self
            .records
            .iter()
            .take(steps)
            .filter_map(|r| Some((r.cosine_to_reference?, r.cosine_mean_accumulator?)))
            .collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        Some((rows.iter().map(|r| r.0).sum::<f64>() / n, rows.iter().map(|r| r.1).sum::<f64>() / n))
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["outer_step", "inner_step_global", "lr", "mean_loss"].iter().map(|s| s.to_string()).collect();
        h.extend((0..self.replicas).map(|r| format!("loss_r{r}")));
        h.extend(
            ["bytes_sent_per_worker", "cosine_to_reference", "cosine_mean_accumulator", "eval_loss", "wall_ms"]
                .iter()
                .map(|s| s.to_string()),
        );
        h
    }

    /// Writes the log as CSV; `timing = false` leaves the `wall_ms` column empty.
    pub fn write_csv(&self, w: impl Write, timing: bool) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.csv_header())?;
        for r in &self.records {
            let mut row = vec![r.outer_step.to_string(), r.inner_step_global.to_string(), r.lr.to_string(), r.mean_loss.to_string()];
            row.extend(r.replica_losses.iter().map(|l| l.to_string()));
            row.push(r.bytes_sent_per_worker.to_string());
            row.push(opt(r.cosine_to_reference));
            row.push(opt(r.cosine_mean_accumulator));
            row.push(opt(r.eval_loss));
            row.push(if timing { format!("{:.3}", r.wall_ms) } else { String::new() });
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Per-replica inputs and outputs of the most recent outer step.
#[derive(Debug, Clone, Default)]
pub struct StepTrace<T> {
    /// Pseudo-gradients (or raw gradients for per-step methods).
    pub deltas: Vec<ParamVector<T>>,
    /// Dense form of what each replica transmitted, for compressed methods.
    pub sent: Vec<ParamVector<T>>,
}

/// A run in progress. Holds every replica's state explicitly.
pub struct Simulation<T: Real> {
    cfg: RunConfig,
    arch: MlpArch,
    task: Arc<SyntheticTask>,
    eval_batch: Batch<T>,
    schedule: LrSchedule,
    thetas: Vec<ParamVector<T>>,
    adams: Vec<AdamWState<T>>,
    data_rngs: Vec<Rng>,
    select_rngs: Vec<Rng>,
    /// Local momentum or error-feedback buffers, one per replica.
    accs: Vec<ParamVector<T>>,
    /// Global Nesterov momentum.
    momentum: ParamVector<T>,
    /// Discounted sum of mean pseudo-gradients, for the cosine diagnostic.
    reference: ParamVector<T>,
    compressor: Option<CompressorConfig>,
    subk_layout: Option<ChunkLayout>,
    message_bytes: u64,
    outer_step: usize,
    trace: StepTrace<T>,
}

impl<T: Real> Simulation<T> {
    pub fn new(cfg: RunConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let task = Arc::new(generate_synthetic(&cfg.dataset_spec())?);
        Self::with_task(cfg, task)
    }

    /// Builds a run on an already generated task (shared between sweep arms).
    pub fn with_task(cfg: RunConfig, task: Arc<SyntheticTask>) -> Result<Self, SimError> {
        cfg.validate()?;
        if task.train.num_shards != cfg.train.replicas || task.train.data.input_dim != cfg.data.input_dim {
            return Err(ConfigError::Invalid { field: "data".into(), reason: "task does not match config".into() }.into());
        }
        let arch = MlpArch::new(cfg.layer_dims())?;
        let n = arch.param_count();
        let r = cfg.train.replicas;
        let t = &cfg.train;
        let schedule = LrSchedule::new(t.inner_lr, t.inner_lr * t.min_lr_ratio, t.warmup_steps, t.total_inner_steps)?;
        let theta0: ParamVector<T> = arch.init_params(&mut init_stream(cfg.seed), cfg.model.init_gain);
        let compressor = cfg.algorithm.compression().map(|c| c.resolve(n));
        let subk_layout = match &cfg.algorithm {
            AlgorithmConfig::DilocoLomSubk { chunk_size, .. } => Some(ChunkLayout::new(n, *chunk_size)?),
            _ => None,
        };
        let message_bytes = match (&compressor, cfg.algorithm.compression()) {
            (Some(c), Some(cc)) => message_size_bytes(n as u64, c.chunk_size as u64, c.k as u64, c.quant.bits(), cc.codec),
            _ => dense_message_size_bytes(n as u64, cfg.comm.dense_chunk_size as u64, cfg.comm.dense_bits),
        };
        let eval_batch = task.eval.full_batch::<T>();
        Ok(Self {
            thetas: vec![theta0; r],
            adams: (0..r).map(|_| AdamWState::new(n, t.adamw)).collect(),
            data_rngs: (0..r).map(|i| data_stream(cfg.seed, i)).collect(),
            select_rngs: (0..r).map(|i| select_stream(cfg.seed, i)).collect(),
            accs: vec![ParamVector::zeros(n); r],
            momentum: ParamVector::zeros(n),
            reference: ParamVector::zeros(n),
            compressor,
            subk_layout,
            message_bytes,
            outer_step: 0,
            trace: StepTrace::default(),
            schedule,
            eval_batch,
            arch,
            task,
            cfg,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn task(&self) -> &Arc<SyntheticTask> {
        &self.task
    }

    pub fn outer_step(&self) -> usize {
        self.outer_step
    }

    pub fn is_finished(&self) -> bool {
        self.outer_step >= self.cfg.num_syncs()
    }

    /// Replica 0's parameters (all replicas agree between outer steps).
    pub fn theta(&self) -> &ParamVector<T> {
        &self.thetas[0]
    }

    pub fn replica_thetas(&self) -> &[ParamVector<T>] {
        &self.thetas
    }

    pub fn accumulators(&self) -> &[ParamVector<T>] {
        &self.accs
    }

    pub fn last_trace(&self) -> &StepTrace<T> {
        &self.trace
    }

    pub fn message_bytes(&self) -> u64 {
        self.message_bytes
    }

    pub fn compressor(&self) -> Option<&CompressorConfig> {
        self.compressor.as_ref()
    }

    pub fn eval_loss(&self) -> Result<f64, SimError> {
        Ok(self.arch.loss(&self.thetas[0], &self.eval_batch)?.as_f64())
    }

    fn numeric(&self, what: &str) -> SimError {
        SimError::NumericFailure { outer_step: self.outer_step, what: what.to_string() }
    }

    /// Runs `h` inner AdamW steps on every replica in parallel; returns each
    /// replica's mean minibatch loss.
    fn inner_loops(&mut self, base_step: usize, h: usize) -> Result<Vec<f64>, SimError> {
        let arch = &self.arch;
        let shards = &self.task.train;
        let sched = self.schedule;
        let clip = T::lit(self.cfg.train.grad_clip);
        let bs = self.cfg.train.local_batch;
        let outer_step = self.outer_step;
        self.thetas
            .par_iter_mut()
            .zip(self.adams.par_iter_mut())
            .zip(self.data_rngs.par_iter_mut())
            .enumerate()
            .map(|(r, ((theta, adam), rng))| {
                let mut sum = 0.0;
                for i in 0..h {
                    let lr = T::lit(sched.lr_at(base_step + i)?);
                    let batch = shards.sample_batch::<T>(r, bs, rng);
                    let (loss, mut g) = arch.loss_and_grad(theta, &batch)?;
                    if !loss.is_finite() || !g.is_finite() {
                        return Err(SimError::NumericFailure { outer_step, what: format!("loss on replica {r}") });
                    }
                    clip_grad_norm(&mut g, clip);
                    adam.step(theta, &g, lr)?;
                    sum += loss.as_f64();
                }
                Ok(sum / h as f64)
            })
            .collect()
    }

    /// Clipped minibatch gradient of every replica at its current parameters.
    fn replica_grads(&mut self) -> Result<(Vec<ParamVector<T>>, Vec<f64>), SimError> {
        let arch = &self.arch;
        let shards = &self.task.train;
        let clip = T::lit(self.cfg.train.grad_clip);
        let bs = self.cfg.train.local_batch;
        let outer_step = self.outer_step;
        let out: Result<Vec<_>, SimError> = self
            .thetas
            .par_iter()
            .zip(self.data_rngs.par_iter_mut())
            .enumerate()
            .map(|(r, (theta, rng))| {
                let batch = shards.sample_batch::<T>(r, bs, rng);
                let (loss, mut g) = arch.loss_and_grad(theta, &batch)?;
                if !loss.is_finite() || !g.is_finite() {
                    return Err(SimError::NumericFailure { outer_step, what: format!("gradient on replica {r}") });
                }
                clip_grad_norm(&mut g, clip);
                Ok((g, loss.as_f64()))
            })
            .collect();
        Ok(out?.into_iter().unzip())
    }

    fn verify_messages(&self, messages: &[Compressed<T>], codec: IndexCodec) -> Result<(), SimError> {
        for m in messages {
            let msg = SparseMessage::from_compressed(m, codec)?;
            let bytes = msg.serialize()?;
            if bytes.len() as u64 != self.message_bytes || SparseMessage::parse(&bytes)? != msg {
                return Err(WireError::Inconsistent("serialized message disagrees with accounting".into()).into());
            }
        }
        Ok(())
    }

    fn mean(vs: &[ParamVector<T>]) -> Result<ParamVector<T>, SimError> {
        let refs: Vec<&ParamVector<T>> = vs.iter().collect();
        Ok(ParamVector::mean_of(&refs)?)
    }

    /// Executes one outer step and returns its metrics.
    pub fn step(&mut self) -> Result<OuterRecord, SimError> {
        if self.is_finished() {
            return Err(SimError::Finished(self.outer_step));
        }
        let started = Instant::now();
        check_synchronized(&self.thetas)?;
        let h = self.cfg.train.inner_steps;
        let base_step = self.outer_step * h;
        let last_lr = self.schedule.lr_at(base_step + h - 1)?;
        let alg = self.cfg.algorithm.clone();
        let mut sent = Vec::new();
        let mut reference_beta = None;

        let (losses, deltas) = if alg.is_per_step() {
            let (grads, losses) = self.replica_grads()?;
            let lr = T::lit(last_lr);
            match &alg {
                AlgorithmConfig::AdamwDdp {} => {
                    let mut g = Self::mean(&grads)?;
                    clip_grad_norm(&mut g, T::lit(self.cfg.train.grad_clip));
                    self.adams[0].step(&mut self.thetas[0], &g, lr)?;
                    let theta = self.thetas[0].clone();
                    for t in self.thetas.iter_mut().skip(1) {
                        t.clone_from(&theta);
                    }
                }
                AlgorithmConfig::DemoLite { ef_beta, compression } => {
                    let comp = self.compressor.expect("compressed algorithm");
                    let step =
                        demo_lite_step(&mut self.thetas, &grads, &mut self.accs, T::lit(*ef_beta), lr, &comp, &mut self.select_rngs)?;
                    if self.cfg.comm.verify_wire {
                        self.verify_messages(&step.messages, compression.codec)?;
                    }
                    sent = step.messages.iter().map(|m| m.to_dense()).collect();
                    reference_beta = Some(*ef_beta);
                }
                _ => unreachable!("per-step algorithms"),
            }
            (losses, grads)
        } else {
            let start = self.thetas[0].clone();
            let losses = self.inner_loops(base_step, h)?;
            let mut deltas = Vec::with_capacity(self.thetas.len());
            for t in self.thetas.iter_mut() {
                deltas.push(start.sub(t)?);
                t.clone_from(&start);
            }
            match &alg {
                AlgorithmConfig::Diloco { outer_lr, momentum } => {
                    let mean = Self::mean(&deltas)?;
                    let dir = nesterov_direction(&mean, &mut self.momentum, T::lit(*momentum))?;
                    apply_update(&mut self.thetas, T::lit(*outer_lr), &dir)?;
                }
                AlgorithmConfig::DilocoLom { outer_lr, momentum } => {
                    let dir = lom_direction(&deltas, &mut self.accs, T::lit(*momentum))?;
                    apply_update(&mut self.thetas, T::lit(*outer_lr), &dir)?;
                    reference_beta = Some(*momentum);
                }
                AlgorithmConfig::DilocoLomSubk { outer_lr, momentum, fraction, .. } => {
                    let dir = lom_direction(&deltas, &mut self.accs, T::lit(*momentum))?;
                    apply_update(&mut self.thetas, T::lit(*outer_lr), &dir)?;
                    let layout = self.subk_layout.expect("sub-k layout");
                    for m in self.accs.iter_mut() {
                        lom_subk(m, &layout, *fraction)?;
                    }
                    reference_beta = Some(*momentum);
                }
                AlgorithmConfig::SparseLoco { outer_lr, ef_beta, compression } => {
                    let comp = self.compressor.expect("compressed algorithm");
                    let step = sparseloco_outer_step(
                        &mut self.thetas,
                        &deltas,
                        &mut self.accs,
                        T::lit(*ef_beta),
                        T::lit(*outer_lr),
                        &comp,
                        &mut self.select_rngs,
                    )?;
                    if self.cfg.comm.verify_wire {
                        self.verify_messages(&step.messages, compression.codec)?;
                    }
                    sent = step.messages.iter().map(|m| m.to_dense()).collect();
                    reference_beta = Some(*ef_beta);
                }
                AlgorithmConfig::SparseLocoNesterov { outer_lr, ef_beta, momentum, compression } => {
                    let comp = self.compressor.expect("compressed algorithm");
                    let step = sparseloco_plus_nesterov_step(
                        &mut self.thetas,
                        &deltas,
                        &mut self.accs,
                        &mut self.momentum,
                        T::lit(*ef_beta),
                        T::lit(*momentum),
                        T::lit(*outer_lr),
                        &comp,
                        &mut self.select_rngs,
                    )?;
                    if self.cfg.comm.verify_wire {
                        self.verify_messages(&step.messages, compression.codec)?;
                    }
                    sent = step.messages.iter().map(|m| m.to_dense()).collect();
                    reference_beta = Some(*ef_beta);
                }
                _ => unreachable!("local-update algorithms"),
            }
            (losses, deltas)
        };

        if !self.thetas[0].is_finite() {
            return Err(self.numeric("parameters"));
        }
        check_synchronized(&self.thetas)?;

        let (cos_ref, cos_mean) = match reference_beta {
            Some(beta) => {
                self.reference.scale_in_place(T::lit(beta));
                self.reference.add_assign(&Self::mean(&deltas)?)?;
                self.cosines()?
            }
            None => (None, None),
        };

        self.trace = StepTrace { deltas, sent };
        self.outer_step += 1;
        let every = self.cfg.train.eval_every;
        let eval_loss = if self.is_finished() || (every > 0 && self.outer_step.is_multiple_of(every)) {
            let l = self.eval_loss()?;
            if !l.is_finite() {
                return Err(self.numeric("eval loss"));
            }
            Some(l)
        } else {
            None
        };
        let mean_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        Ok(OuterRecord {
            outer_step: self.outer_step - 1,
            inner_step_global: self.outer_step * h,
            lr: last_lr,
            mean_loss,
            replica_losses: losses,
            bytes_sent_per_worker: self.message_bytes,
            cosine_to_reference: cos_ref,
            cosine_mean_accumulator: cos_mean,
            eval_loss,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }

    fn cosines(&self) -> Result<(Option<f64>, Option<f64>), SimError> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for acc in &self.accs {
            if let Ok(c) = cosine_similarity(acc, &self.reference) {
                sum += c.as_f64();
                count += 1;
            }
        }
        let per_replica = (count > 0).then(|| sum / count as f64);
        let mean_acc = Self::mean(&self.accs)?;
        let of_mean = cosine_similarity(&mean_acc, &self.reference).ok().map(|c| c.as_f64());
        Ok((per_replica, of_mean))
    }

    /// Runs all remaining outer steps.
    pub fn run(mut self) -> Result<MetricsLog, SimError> {
        let mut records = Vec::with_capacity(self.cfg.num_syncs());
        while !self.is_finished() {
            records.push(self.step()?);
        }
        Ok(self.into_log(records))
    }

    pub fn into_log(self, records: Vec<OuterRecord>) -> MetricsLog {
        MetricsLog {
            name: self.cfg.name.clone(),
            algorithm: self.cfg.algorithm.kind().to_string(),
            param_count: self.arch.param_count(),
            replicas: self.cfg.train.replicas,
            message_bytes: self.message_bytes,
            records,
        }
    }
}

/// Runs a whole configuration at its configured precision.
pub fn run_outer_loop(cfg: &RunConfig) -> Result<MetricsLog, SimError> {
    match cfg.precision {
        Precision::F32 => Simulation::<f32>::new(cfg.clone())?.run(),
        Precision::F64 => Simulation::<f64>::new(cfg.clone())?.run(),
    }
}

/// As [`run_outer_loop`] but on a pre-generated task.
pub fn run_with_task(cfg: &RunConfig, task: Arc<SyntheticTask>) -> Result<MetricsLog, SimError> {
    match cfg.precision {
        Precision::F32 => Simulation::<f32>::with_task(cfg.clone(), task)?.run(),
        Precision::F64 => Simulation::<f64>::with_task(cfg.clone(), task)?.run(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::CompressionConfig;

    pub(crate) fn tiny(alg: AlgorithmConfig) -> RunConfig {
        let mut cfg = RunConfig::with_algorithm(alg);
        cfg.precision = Precision::F64;
        cfg.model.hidden = vec![16];
        cfg.data.n_samples = 256;
        cfg.data.n_eval = 64;
        cfg.data.input_dim = 8;
        cfg.data.n_classes = 4;
        cfg.data.teacher_width = 8;
        cfg.train.replicas = 3;
        if !cfg.algorithm.is_per_step() {
            cfg.train.inner_steps = 3;
        }
        cfg.train.total_inner_steps = 12;
        cfg.train.warmup_steps = 2;
        cfg.train.local_batch = 8;
        cfg.train.inner_lr = 1e-2;
        cfg
    }

    fn sparse(chunk: usize, density: f64) -> CompressionConfig {
        CompressionConfig { chunk_size: chunk, density: Some(density), ..Default::default() }
    }

    #[test]
    fn every_algorithm_runs_and_stays_synchronized() {
        let algs = [
            AlgorithmConfig::AdamwDdp {},
            AlgorithmConfig::Diloco { outer_lr: 0.6, momentum: 0.9 },
            AlgorithmConfig::DilocoLom { outer_lr: 0.6, momentum: 0.9 },
            AlgorithmConfig::DilocoLomSubk { outer_lr: 0.6, momentum: 0.9, fraction: 0.25, chunk_size: 32 },
            AlgorithmConfig::SparseLoco { outer_lr: 1.0, ef_beta: 0.95, compression: sparse(32, 0.125) },
            AlgorithmConfig::SparseLocoNesterov { outer_lr: 1.0, ef_beta: 0.95, momentum: 0.9, compression: sparse(32, 0.125) },
            AlgorithmConfig::DemoLite { ef_beta: 0.999, compression: sparse(32, 0.125) },
        ];
        for alg in algs {
            let mut cfg = tiny(alg);
            cfg.comm.verify_wire = true;
            let log = run_outer_loop(&cfg).unwrap();
            assert_eq!(log.records.len(), cfg.num_syncs());
            assert!(log.final_eval_loss().unwrap().is_finite());
            assert!(log.records.iter().all(|r| r.bytes_sent_per_worker == log.message_bytes));
        }
    }

    #[test]
    fn deterministic_log() {
        let cfg = tiny(AlgorithmConfig::SparseLoco { outer_lr: 1.0, ef_beta: 0.95, compression: sparse(32, 0.125) });
        let a = run_outer_loop(&cfg).unwrap();
        let b = run_outer_loop(&cfg).unwrap();
        let csv = |l: &MetricsLog| {
            let mut out = Vec::new();
            l.write_csv(&mut out, false).unwrap();
            out
        };
        assert_eq!(csv(&a), csv(&b));
    }

    #[test]
    fn diloco_reports_no_cosine_and_lom_reports_one() {
        let d = run_outer_loop(&tiny(AlgorithmConfig::Diloco { outer_lr: 0.6, momentum: 0.9 })).unwrap();
        assert!(d.mean_cosines(20).is_none());
        let l = run_outer_loop(&tiny(AlgorithmConfig::DilocoLom { outer_lr: 0.6, momentum: 0.9 })).unwrap();
        let (_, of_mean) = l.mean_cosines(20).unwrap();
        assert!((of_mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_has_expected_columns() {
        let log = run_outer_loop(&tiny(AlgorithmConfig::Diloco { outer_lr: 0.6, momentum: 0.0 })).unwrap();
        let mut out = Vec::new();
        log.write_csv(&mut out, true).unwrap();
        let text = String::from_utf8(out).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "outer_step,inner_step_global,lr,mean_loss,loss_r0,loss_r1,loss_r2,bytes_sent_per_worker,cosine_to_reference,cosine_mean_accumulator,eval_loss,wall_ms"
        );
        assert_eq!(text.lines().count(), 1 + 4);
    }

    #[test]
    fn finished_run_refuses_more_steps() {
        let mut sim = Simulation::<f64>::new(tiny(AlgorithmConfig::Diloco { outer_lr: 0.6, momentum: 0.9 })).unwrap();
        while !sim.is_finished() {
            sim.step().unwrap();
        }
        assert!(matches!(sim.step(), Err(SimError::Finished(4))));
    }

    #[test]
    fn divergence_is_a_numeric_failure() {
        let mut cfg = tiny(AlgorithmConfig::Diloco { outer_lr: 1e30, momentum: 0.0 });
        cfg.precision = Precision::F32;
        cfg.train.inner_lr = 1.0;
        let err = run_outer_loop(&cfg).unwrap_err();
        assert!(matches!(err, SimError::NumericFailure { .. }), "{err}");
    }
}
