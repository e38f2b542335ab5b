//! AdamW inner optimizer, global-norm clipping and the warmup + cosine schedule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{check_len, ParamVector, Real, TensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("step {step} outside schedule range 0..={total}")]
    StepOutOfRange { step: usize, total: usize },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Scales `grad` down so that its L2 norm is at most `max_norm`.
pub fn clip_grad_norm<T: Real>(grad: &mut ParamVector<T>, max_norm: T) -> T {
    let norm = grad.norm2();
    if norm > max_norm {
        grad.scale_in_place(max_norm / norm);
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.95, eps: 1e-8, weight_decay: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState<T> {
    pub m: ParamVector<T>,
    pub v: ParamVector<T>,
    pub step: u64,
    pub config: AdamWConfig,
}

impl<T: Real> AdamWState<T> {
    pub fn new(len: usize, config: AdamWConfig) -> Self {
        Self { m: ParamVector::zeros(len), v: ParamVector::zeros(len), step: 0, config }
    }

    /// One bias-corrected AdamW update with decoupled weight decay.
    pub fn step(&mut self, params: &mut ParamVector<T>, grad: &ParamVector<T>, lr: T) -> Result<(), OptimError> {
        check_len(params.len(), grad.len())?;
        check_len(params.len(), self.m.len())?;
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let bc1 = T::one() - b1.powi(self.step as i32);
        let bc2 = T::one() - b2.powi(self.step as i32);
        let eps = T::lit(c.eps);
        let decay = T::one() - lr * T::lit(c.weight_decay);
        let p = params.as_mut_slice();
        let m = self.m.as_mut_slice();
        let v = self.v.as_mut_slice();
        for (i, &g) in grad.as_slice().iter().enumerate() {
            m[i] = b1 * m[i] + one_b1 * g;
            v[i] = b2 * v[i] + one_b2 * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] = p[i] * decay - lr * (m_hat / (v_hat.sqrt() + eps));
        }
        Ok(())
    }
}

/// Free-function form of [`AdamWState::step`].
pub fn adamw_step<T: Real>(
    params: &mut ParamVector<T>,
    grad: &ParamVector<T>,
    state: &mut AdamWState<T>,
    lr: T,
) -> Result<(), OptimError> {
    state.step(params, grad, lr)
}

/// Linear warmup to `base_lr`, then cosine decay to `min_lr` at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn new(base_lr: f64, min_lr: f64, warmup_steps: usize, total_steps: usize) -> Result<Self, OptimError> {
        if !(base_lr >= 0.0 && min_lr >= 0.0 && min_lr <= base_lr) {
            return Err(OptimError::Schedule(format!("need 0 <= min_lr <= base_lr, got {min_lr} / {base_lr}")));
        }
        if total_steps == 0 || warmup_steps >= total_steps {
            return Err(OptimError::Schedule(format!(
                "need warmup_steps < total_steps, got {warmup_steps} / {total_steps}"
            )));
        }
        Ok(Self { base_lr, min_lr, warmup_steps, total_steps })
    }

    pub fn lr_at(&self, step: usize) -> Result<f64, OptimError> {
        if step > self.total_steps {
            return Err(OptimError::StepOutOfRange { step, total: self.total_steps });
        }
        if step < self.warmup_steps {
            return Ok(self.base_lr * step as f64 / self.warmup_steps as f64);
        }
        let progress = (step - self.warmup_steps) as f64 / (self.total_steps - self.warmup_steps) as f64;
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        Ok(self.min_lr + (self.base_lr - self.min_lr) * cos)
    }
}

pub fn lr_at(schedule: &LrSchedule, step: usize) -> Result<f64, OptimError> {
    schedule.lr_at(step)
}
