//! Minibatch training with Adam and global-norm gradient clipping.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::nets::Trainable;
use super::NeuralError;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seq_len: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// 0 disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
    /// Stop after this many optimizer steps.
    pub max_steps: Option<usize>,
    /// Wall-clock limit; makes the stopping point timing dependent.
    pub time_budget: Option<Duration>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 3e-4,
            batch: 256,
            epochs: 100,
            seq_len: 150,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
            seed: 0,
            max_steps: None,
            time_budget: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean batch loss per completed (or partial final) epoch.
    pub epoch_loss: Vec<f64>,
    pub step_loss: Vec<f64>,
}

impl TrainReport {
    pub fn steps(&self) -> usize {
        self.step_loss.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr: cfg.lr, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.eps }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Rescales `grad` to norm `max_norm` if larger; returns the original norm.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Shuffled minibatch training. Single-threaded and deterministic for a
/// fixed seed and data unless `time_budget` cuts it short.
pub fn train<M: Trainable>(net: &mut M, data: &[M::Window], cfg: &TrainConfig) -> Result<TrainReport, NeuralError> {
    if data.is_empty() {
        return Err(NeuralError::EmptyDataset);
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(net.params().len(), cfg);
    let mut grad = vec![0.0; net.params().len()];
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = cfg.batch.max(1);
    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(batch) {
            if cfg.max_steps.is_some_and(|m| report.steps() >= m) || cfg.time_budget.is_some_and(|b| started.elapsed() >= b) {
                if count > 0 {
                    report.epoch_loss.push(sum / count as f64);
                }
                break 'epochs;
            }
            let items: Vec<&M::Window> = chunk.iter().map(|&i| &data[i]).collect();
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = net.batch_loss(&items, Some(&mut grad))?;
            let norm = clip_global_norm(&mut grad, cfg.clip_norm);
            if !loss.is_finite() || !norm.is_finite() {
                return Err(NeuralError::NonFiniteLoss { epoch, step: report.steps(), loss });
            }
            adam.step(net.params_mut(), &grad);
            report.step_loss.push(loss);
            sum += loss;
            count += 1;
        }
        report.epoch_loss.push(sum / count as f64);
    }
    Ok(report)
}
