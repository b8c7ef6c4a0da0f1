use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{Hst, Sample};
use super::params::Params;
use super::survival::{LossConfig, LossParts};
use super::HstError;
use crate::math;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the batch gradient to at most this norm.
    pub clip_norm: Option<f64>,
    /// Leading epochs trained with every hazard held at 0.
    pub warmup_epochs: usize,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self { epochs: 60, batch_size: 16, lr: 3e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: Some(5.0), warmup_epochs: 20, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    pub fn new(p: &Params) -> Self {
        Self { m: p.zeros_like(), v: p.zeros_like(), t: 0 }
    }

    pub fn step(&mut self, p: &mut Params, g: &Params, cfg: &OptimConfig) {
        self.t += 1;
        let g = g.flat();
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - math::pow(b1, self.t as f64);
        let c2 = 1.0 - math::pow(b2, self.t as f64);
        let mut at = 0;
        let mut m_flat = Vec::with_capacity(g.len());
        self.m.visit_mut(|_, m| {
            for x in &mut m.data {
                *x = b1 * *x + (1.0 - b1) * g[at];
                m_flat.push(*x);
                at += 1;
            }
        });
        at = 0;
        let mut v_flat = Vec::with_capacity(g.len());
        self.v.visit_mut(|_, v| {
            for x in &mut v.data {
                *x = b2 * *x + (1.0 - b2) * g[at] * g[at];
                v_flat.push(*x);
                at += 1;
            }
        });
        if cfg.lr == 0.0 {
            return;
        }
        at = 0;
        p.visit_mut(|_, w| {
            for x in &mut w.data {
                let mh = m_flat[at] / c1;
                let vh = v_flat[at] / c2;
                *x -= cfg.lr * mh / (math::sqrt(vh) + cfg.eps);
                at += 1;
            }
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub batch: usize,
    /// Batch mean of each loss component.
    pub loss: LossParts,
    pub grad_norm: f64,
}

/// Mini-batch Adam over the samples. Each epoch shuffles with a seed derived
/// from `(seed, epoch)`. The first `warmup_epochs` epochs train the
/// prediction head alone, with survival held at 1.
pub fn train(model: &mut Hst, samples: &[Sample], loss: &LossConfig, cfg: &OptimConfig) -> Result<Vec<StepRecord>, HstError> {
    if samples.is_empty() {
        return Err(HstError::NoSamples);
    }
    let mut adam = Adam::new(&model.params);
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let bs = cfg.batch_size.max(1);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut r = rng::seeded(rng::derive_seed(cfg.seed, &alloc::format!("hst-epoch{epoch}")));
        order.shuffle(&mut r);
        for (batch, chunk) in order.chunks(bs).enumerate() {
            let mut grads = model.params.zeros_like();
            let mut parts = LossParts::default();
            for &i in chunk {
                parts += model.loss_and_grad_gated(&samples[i], loss, &mut grads, epoch >= cfg.warmup_epochs)?;
            }
            let scale = 1.0 / chunk.len() as f64;
            grads.visit_mut(|_, m| m.data.iter_mut().for_each(|v| *v *= scale));
            for v in [
                &mut parts.prediction,
                &mut parts.consistency_soft,
                &mut parts.consistency_hard,
                &mut parts.earliness,
                &mut parts.total,
            ] {
                *v *= scale;
            }
            let grad_norm = grads.norm();
            if !grad_norm.is_finite() || !parts.total.is_finite() {
                return Err(HstError::NonFinite { step, param_norm: model.params.norm() });
            }
            if let Some(c) = cfg.clip_norm {
                if grad_norm > c {
                    let s = c / grad_norm;
                    grads.visit_mut(|_, m| m.data.iter_mut().for_each(|v| *v *= s));
                }
            }
            adam.step(&mut model.params, &grads, cfg);
            if !model.params.is_finite() {
                return Err(HstError::NonFinite { step, param_norm: model.params.norm() });
            }
            history.push(StepRecord { epoch, batch, loss: parts, grad_norm });
            step += 1;
        }
    }
    Ok(history)
}
