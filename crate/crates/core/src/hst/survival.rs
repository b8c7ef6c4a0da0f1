//! Survival gating and the training losses.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;

/// Prediction before the first split.
pub const PRIOR: f64 = 0.5;
pub const LOG_CLAMP: f64 = 1e-12;
pub const DEFAULT_S_MIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTrace {
    pub y: Vec<f64>,
    pub hazard: Vec<f64>,
    pub survival: Vec<f64>,
    pub combined: Vec<f64>,
    /// First split index (0-based) with survival `<= s_min`.
    pub t_die: Option<usize>,
}

/// One gating step: returns `(S(p), yhat(p))`.
pub fn survival_step(prev_s: f64, prev_yhat: f64, y: f64, hazard: f64) -> (f64, f64) {
    let s = prev_s * math::exp(-hazard);
    (s, s * y + (1.0 - s) * prev_yhat)
}

pub fn survival_trace(y: &[f64], hazard: &[f64], s_min: f64) -> SurvivalTrace {
    let mut survival = Vec::with_capacity(y.len());
    let mut combined = Vec::with_capacity(y.len());
    let (mut s, mut yh) = (1.0, PRIOR);
    let mut t_die = None;
    for (t, (yt, lt)) in y.iter().zip(hazard).enumerate() {
        (s, yh) = survival_step(s, yh, *yt, *lt);
        if t_die.is_none() && s <= s_min {
            t_die = Some(t);
        }
        survival.push(s);
        combined.push(yh);
    }
    SurvivalTrace { y: y.to_vec(), hazard: hazard.to_vec(), survival, combined, t_die }
}

/// Sign of the earliness term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EarlinessMode {
    /// `loss^E = -S(t)`: taken literally, training keeps survival high.
    Literal,
    /// `loss^E = +S(t)`: training pushes survival down.
    Shrink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub gamma1: f64,
    pub gamma2: f64,
    pub c_pos: f64,
    pub c_neg: f64,
    pub earliness: EarlinessMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { gamma1: 1.0, gamma2: 0.1, c_pos: 1.0, c_neg: 1.0, earliness: EarlinessMode::Shrink }
    }
}

impl LossConfig {
    /// `C± = N / (2 N_class)`.
    pub fn balanced(mut self, positives: usize, negatives: usize) -> Self {
        let n = (positives + negatives) as f64;
        self.c_pos = if positives > 0 { n / (2.0 * positives as f64) } else { 1.0 };
        self.c_neg = if negatives > 0 { n / (2.0 * negatives as f64) } else { 1.0 };
        self
    }
}

/// Loss components, each already weighted by `sqrt(t) * C±` and summed over splits.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub prediction: f64,
    pub consistency_soft: f64,
    pub consistency_hard: f64,
    pub earliness: f64,
    pub total: f64,
}

impl core::ops::AddAssign for LossParts {
    fn add_assign(&mut self, o: Self) {
        self.prediction += o.prediction;
        self.consistency_soft += o.consistency_soft;
        self.consistency_hard += o.consistency_hard;
        self.earliness += o.earliness;
        self.total += o.total;
    }
}

pub fn prediction_loss(yhat: f64, malicious: bool) -> f64 {
    if malicious {
        -math::ln(yhat.max(LOG_CLAMP))
    } else {
        -math::ln((1.0 - yhat).max(LOG_CLAMP))
    }
}

fn prediction_grad(yhat: f64, malicious: bool) -> f64 {
    if malicious {
        if yhat > LOG_CLAMP {
            -1.0 / yhat
        } else {
            0.0
        }
    } else if 1.0 - yhat > LOG_CLAMP {
        1.0 / (1.0 - yhat)
    } else {
        0.0
    }
}

/// 1 when the hard decisions of consecutive predictions disagree.
pub fn consistency_hard(yhat: f64, prev: f64) -> f64 {
    if (yhat - 0.5) * (prev - 0.5) >= 0.0 {
        0.0
    } else {
        1.0
    }
}

/// Hinge surrogate `max(0, -(yhat - 0.5)(prev - 0.5))`.
pub fn consistency_soft(yhat: f64, prev: f64) -> f64 {
    (-(yhat - 0.5) * (prev - 0.5)).max(0.0)
}

/// Losses of one trace and their gradients with respect to each split's
/// raw prediction `y_t` and hazard `lambda_t`.
pub fn losses(trace: &SurvivalTrace, malicious: bool, cfg: &LossConfig) -> (LossParts, Vec<f64>, Vec<f64>) {
    let n = trace.y.len();
    let c = if malicious { cfg.c_pos } else { cfg.c_neg };
    let e_sign = match cfg.earliness {
        EarlinessMode::Literal => -1.0,
        EarlinessMode::Shrink => 1.0,
    };
    let mut parts = LossParts::default();
    let mut g_yhat = vec![0.0; n];
    let mut g_s = vec![0.0; n];
    for t in 0..n {
        let w = math::sqrt((t + 1) as f64) * c;
        let yh = trace.combined[t];
        let prev = if t == 0 { PRIOR } else { trace.combined[t - 1] };
        let lp = prediction_loss(yh, malicious);
        let lc = consistency_soft(yh, prev);
        let le = e_sign * trace.survival[t];
        parts.prediction += w * lp;
        parts.consistency_soft += w * lc;
        parts.consistency_hard += w * consistency_hard(yh, prev);
        parts.earliness += w * le;
        parts.total += w * (lp + cfg.gamma1 * lc + cfg.gamma2 * le);

        g_yhat[t] += w * prediction_grad(yh, malicious);
        if lc > 0.0 {
            g_yhat[t] += w * cfg.gamma1 * -(prev - 0.5);
            if t > 0 {
                g_yhat[t - 1] += w * cfg.gamma1 * -(yh - 0.5);
            }
        }
        g_s[t] += w * cfg.gamma2 * e_sign;
    }

    // reverse through yhat_t = S_t y_t + (1 - S_t) yhat_{t-1}, S_t = S_{t-1} e^{-lambda_t}
    let mut g_y = vec![0.0; n];
    let mut g_l = vec![0.0; n];
    for t in (0..n).rev() {
        let s = trace.survival[t];
        let prev = if t == 0 { PRIOR } else { trace.combined[t - 1] };
        let gyh = g_yhat[t];
        g_y[t] = gyh * s;
        let gs = g_s[t] + gyh * (trace.y[t] - prev);
        if t > 0 {
            g_yhat[t - 1] += gyh * (1.0 - s);
            g_s[t - 1] += gs * math::exp(-trace.hazard[t]);
        }
        g_l[t] = -gs * s;
    }
    (parts, g_y, g_l)
}
