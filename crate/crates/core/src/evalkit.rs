//! Classification metrics over time splits and spy-based reliable negatives.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;
use crate::rng;

/// Hard decision boundary on predicted probabilities.
pub const DECISION_BOUNDARY: f64 = 0.5;

pub fn decide(p: f64) -> bool {
    p > DECISION_BOUNDARY
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub prec: f64,
    pub rec: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Accuracy, precision, recall and F1 with 0/0 taken as 0.
pub fn standard_metrics(pred: &[bool], truth: &[bool]) -> Metrics {
    assert_eq!(pred.len(), truth.len(), "prediction and label counts differ");
    let (mut tp, mut fp, mut fneg, mut correct) = (0, 0, 0, 0);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
        if p == t {
            correct += 1;
        }
    }
    let prec = ratio(tp, tp + fp);
    let rec = ratio(tp, tp + fneg);
    let f1 = ratio(2 * tp, 2 * tp + fp + fneg);
    Metrics { acc: ratio(correct, pred.len()), prec, rec, f1 }
}

pub fn binary_f1(pred: &[bool], truth: &[bool]) -> f64 {
    standard_metrics(pred, truth).f1
}

/// Early-weighted F1: weights `1/sqrt(i)` for splits `i = 1..N`.
pub fn f1_early(f1: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (k, v) in f1.iter().enumerate() {
        let w = 1.0 / math::sqrt((k + 1) as f64);
        num += w * v;
        den += w;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Consistency-weighted F1 over splits `i = 1..N-1` with weights `sqrt(i)`.
///
/// `agreement[i]` is the fraction of series whose hard decisions at splits
/// `i` and `i+1` agree (0 or 1 for a single series).
pub fn f1_consistent(f1: &[f64], agreement: &[f64]) -> f64 {
    let n = f1.len().saturating_sub(1).min(agreement.len());
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..n {
        let w = math::sqrt((k + 1) as f64);
        num += w * f1[k] * agreement[k];
        den += w;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Per consecutive split pair, the fraction of series whose decisions agree.
/// `series[a][i]` is the probability of series `a` at split `i`.
pub fn agreement_rates(series: &[Vec<f64>]) -> Vec<f64> {
    let n = series.iter().map(Vec::len).min().unwrap_or(0);
    (0..n.saturating_sub(1))
        .map(|i| {
            let agree = series.iter().filter(|s| decide(s[i]) == decide(s[i + 1])).count();
            ratio(agree, series.len())
        })
        .collect()
}

/// Per-split metrics of many series; `series[a][i]` as in [`agreement_rates`].
pub fn split_metrics(series: &[Vec<f64>], truth: &[bool]) -> Vec<Metrics> {
    let n = series.iter().map(Vec::len).min().unwrap_or(0);
    (0..n)
        .map(|i| {
            let pred: Vec<bool> = series.iter().map(|s| decide(s[i])).collect();
            standard_metrics(&pred, truth)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub acc: f64,
    pub prec: f64,
    pub rec: f64,
    pub f1: f64,
    pub f1_early: f64,
    pub f1_consistent: f64,
}

/// Mean of the per-split metrics plus the early and consistency scores.
pub fn summarize(series: &[Vec<f64>], truth: &[bool]) -> (Vec<Metrics>, Summary) {
    let per = split_metrics(series, truth);
    let n = per.len().max(1) as f64;
    let f1s: Vec<f64> = per.iter().map(|m| m.f1).collect();
    let s = Summary {
        acc: per.iter().map(|m| m.acc).sum::<f64>() / n,
        prec: per.iter().map(|m| m.prec).sum::<f64>() / n,
        rec: per.iter().map(|m| m.rec).sum::<f64>() / n,
        f1: f1s.iter().sum::<f64>() / n,
        f1_early: f1_early(&f1s),
        f1_consistent: f1_consistent(&f1s, &agreement_rates(series)),
    };
    (per, s)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpyError {
    #[error("{positives} positives give no spy at fraction {fraction}")]
    TooFewPositives { positives: usize, fraction: String },
    #[error("no unlabeled instances")]
    NoUnlabeled,
    #[error("scorer returned {got} scores for {expected} instances")]
    ScoreCount { got: usize, expected: usize },
    #[error("all scores are identical; use different features or another classifier")]
    ConstantScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpyRun {
    pub fraction: f64,
    pub spies: Vec<usize>,
    /// (instance, score) for every unlabeled instance and spy.
    pub scores: Vec<(usize, f64)>,
    pub threshold: f64,
    pub reliable_negatives: Vec<usize>,
}

/// `floor(fraction * positives)`.
pub fn spy_count(positives: usize, fraction: f64) -> usize {
    math::floor(fraction * positives as f64 + 1e-9) as usize
}

/// Pick spies from `positives`, let `train_and_score(train_pos, negative_pool)`
/// fit a scorer and return one score per negative-pool entry, then cut the
/// unlabeled scores where the unlabeled cumulative share grows fastest
/// relative to the spies' share.
pub fn select_reliable_negatives<F>(
    positives: &[usize],
    unlabeled: &[usize],
    fraction: f64,
    seed: u64,
    mut train_and_score: F,
) -> Result<SpyRun, SpyError>
where
    F: FnMut(&[usize], &[usize]) -> Vec<f64>,
{
    let k = spy_count(positives.len(), fraction);
    if k == 0 {
        return Err(SpyError::TooFewPositives { positives: positives.len(), fraction: alloc::format!("{fraction}") });
    }
    if unlabeled.is_empty() {
        return Err(SpyError::NoUnlabeled);
    }
    let mut shuffled = positives.to_vec();
    shuffled.shuffle(&mut rng::seeded(rng::derive_seed(seed, "spies")));
    let spies: BTreeSet<usize> = shuffled[..k].iter().copied().collect();
    let train_pos: Vec<usize> = positives.iter().copied().filter(|p| !spies.contains(p)).collect();
    let pool: Vec<usize> = unlabeled.iter().copied().chain(spies.iter().copied()).collect();
    let scores = train_and_score(&train_pos, &pool);
    if scores.len() != pool.len() {
        return Err(SpyError::ScoreCount { got: scores.len(), expected: pool.len() });
    }
    let (su, ss) = scores.split_at(unlabeled.len());
    let threshold = spy_threshold(su, ss)?;
    let reliable_negatives = unlabeled.iter().zip(su).filter(|(_, s)| **s < threshold).map(|(u, _)| *u).collect();
    Ok(SpyRun {
        fraction,
        spies: spies.into_iter().collect(),
        scores: pool.into_iter().zip(scores).collect(),
        threshold,
        reliable_negatives,
    })
}

/// Cut between the distinct score `s_k` maximising
/// `dCU(s_k) - dCS(s_k)` (increments of the unlabeled and spy empirical CDFs)
/// and the next distinct score; ties go to the lowest score.
pub fn spy_threshold(unlabeled: &[f64], spies: &[f64]) -> Result<f64, SpyError> {
    let mut levels: Vec<f64> = unlabeled.iter().chain(spies).copied().collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    if levels.len() < 2 {
        return Err(SpyError::ConstantScores);
    }
    let share = |xs: &[f64], v: f64| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().filter(|x| **x == v).count() as f64 / xs.len() as f64
        }
    };
    let mut best = (0usize, f64::NEG_INFINITY);
    for (k, &v) in levels.iter().enumerate() {
        let d = share(unlabeled, v) - share(spies, v);
        if d > best.1 {
            best = (k, d);
        }
    }
    let k = best.0;
    Ok(match levels.get(k + 1) {
        Some(next) => levels[k] + (next - levels[k]) / 2.0,
        None => levels[k] + 1.0,
    })
}
