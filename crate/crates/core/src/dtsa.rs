//! Decision-tree feature selection and augmentation.
//!
//! Lists hold base feature names (`group.feature`). A base feature's
//! importance is the sum of the importances of its schema columns.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dtree::{balanced_weights, DecisionTree, TrainConfig, TreeError};
use crate::evalkit;
use crate::featureset::{FeatureSchema, Stat};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DtsaError {
    #[error("augmentation threshold {0} outside (0, 1)")]
    Theta(f64),
    #[error("no sessions requested")]
    NoSessions,
    #[error("need both classes in training and validation data")]
    OneClass,
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureLists {
    pub augment: BTreeSet<String>,
    pub reserve: BTreeSet<String>,
    pub delete: BTreeSet<String>,
}

impl FeatureLists {
    /// Every seed feature reserved, nothing augmented or deleted.
    pub fn initial() -> Self {
        let reserve = FeatureSchema::seed().bases().into_iter().map(String::from).collect();
        Self { reserve, ..Self::default() }
    }

    pub fn is_disjoint(&self) -> bool {
        self.augment.is_disjoint(&self.reserve)
            && self.augment.is_disjoint(&self.delete)
            && self.reserve.is_disjoint(&self.delete)
    }
}

/// Index-level result of thresholding one importance vector.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Classification {
    pub augment: Vec<usize>,
    pub reserve: Vec<usize>,
    pub delete: Vec<usize>,
}

/// Split features by importance relative to the maximum: `>= theta * max`
/// augments, positive but below reserves, zero deletes. Entries with
/// `augmentable[j] == false` that clear the bar are reserved instead.
pub fn classify_features(importance: &[f64], theta: f64, augmentable: &[bool]) -> Result<Classification, DtsaError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(DtsaError::Theta(theta));
    }
    let max = importance.iter().copied().fold(0.0, f64::max);
    let bar = theta * max;
    let mut c = Classification::default();
    for (j, &s) in importance.iter().enumerate() {
        if s <= 0.0 {
            c.delete.push(j);
        } else if s >= bar && augmentable.get(j).copied().unwrap_or(false) {
            c.augment.push(j);
        } else {
            c.reserve.push(j);
        }
    }
    Ok(c)
}

/// Columns of the raw layout selected by `lists`: mean-style columns of
/// reserved and augmented features plus max/min/std of augmented ones.
pub fn apply_lists(lists: &FeatureLists) -> FeatureSchema {
    FeatureSchema::from_raw_filter(|c| {
        if lists.delete.contains(&c.base) {
            return false;
        }
        match c.stat {
            Stat::Raw | Stat::Avg => lists.augment.contains(&c.base) || lists.reserve.contains(&c.base),
            Stat::Max | Stat::Min | Stat::Std => lists.augment.contains(&c.base),
        }
    })
}

/// Sum column importances per base feature, in schema base order.
pub fn base_importance(schema: &FeatureSchema, importance: &[f64]) -> Vec<(String, f64)> {
    let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
    for (c, v) in schema.columns.iter().zip(importance) {
        *sums.entry(c.base.as_str()).or_default() += v;
    }
    schema.bases().into_iter().map(|b| (String::from(b), sums[b])).collect()
}

fn augmentable_base(schema: &FeatureSchema, base: &str) -> bool {
    schema.columns.iter().any(|c| c.base == base && c.augmentable())
}

/// Next lists from the best session's importance. Augmentation persists
/// until a feature is deleted; deletion is permanent.
pub fn update_lists(
    lists: &FeatureLists,
    schema: &FeatureSchema,
    importance: &[f64],
    theta: f64,
) -> Result<FeatureLists, DtsaError> {
    let bases = base_importance(schema, importance);
    let values: Vec<f64> = bases.iter().map(|(_, v)| *v).collect();
    let raw = FeatureSchema::raw();
    let aug: Vec<bool> = bases.iter().map(|(b, _)| augmentable_base(&raw, b)).collect();
    let c = classify_features(&values, theta, &aug)?;
    let mut next = FeatureLists { delete: lists.delete.clone(), ..FeatureLists::default() };
    for j in c.delete {
        next.delete.insert(bases[j].0.clone());
    }
    for j in c.augment {
        next.augment.insert(bases[j].0.clone());
    }
    for j in c.reserve {
        let name = &bases[j].0;
        if lists.augment.contains(name) {
            next.augment.insert(name.clone());
        } else {
            next.reserve.insert(name.clone());
        }
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DtsaConfig {
    pub theta: f64,
    pub sessions: usize,
    pub max_rounds: usize,
    pub validation_fraction: f64,
    /// Tree settings; empty class weights mean balanced weights from the
    /// training split.
    pub tree: TrainConfig,
    pub seed: u64,
}

impl Default for DtsaConfig {
    fn default() -> Self {
        Self { theta: 0.5, sessions: 10, max_rounds: 10, validation_fraction: 0.2, tree: TrainConfig::default(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub schema_width: usize,
    pub session_scores: Vec<f64>,
    pub average: f64,
    pub best: f64,
    pub best_session: usize,
    /// Lists derived from the best session of this round.
    pub lists: FeatureLists,
    pub adopted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtsaReport {
    pub rounds: Vec<RoundReport>,
    pub degenerate: bool,
    pub stop_reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtsaOutcome {
    pub lists: FeatureLists,
    pub report: DtsaReport,
    /// Best tree of the last adopted round, with the schema it was trained on.
    pub best_tree: Option<(FeatureSchema, DecisionTree)>,
}

/// Fixed stratified split; returns (train, validation) row indices.
pub fn stratified_split(y: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut rng = rng::seeded(rng::derive_seed(seed, "dtsa-split"));
    let classes: BTreeSet<usize> = y.iter().copied().collect();
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for c in classes {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        idx.shuffle(&mut rng);
        let mut k = crate::math::floor(fraction * idx.len() as f64 + 0.5) as usize;
        if idx.len() >= 2 {
            k = k.clamp(1, idx.len() - 1);
        }
        val.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn project(rows: &[Vec<f64>], idx: &[usize], schema: &FeatureSchema) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| schema.project(&rows[i])).collect()
}

/// Run the selection loop on raw 212-column samples `x` with binary labels.
///
/// Round 1 always runs. A later round's lists are adopted when its average
/// validation F1 is at least the previous average; the loop continues only
/// on strict improvement.
pub fn run_dtsa(x: &[Vec<f64>], y: &[usize], cfg: &DtsaConfig) -> Result<DtsaOutcome, DtsaError> {
    if cfg.sessions == 0 {
        return Err(DtsaError::NoSessions);
    }
    let (train, val) = stratified_split(y, cfg.validation_fraction, cfg.seed);
    let y_train: Vec<usize> = train.iter().map(|&i| y[i]).collect();
    let y_val: Vec<bool> = val.iter().map(|&i| y[i] == 1).collect();
    if !y_train.contains(&0) || !y_train.contains(&1) || !y_val.contains(&true) || !y_val.contains(&false) {
        return Err(DtsaError::OneClass);
    }
    let mut tree_cfg = cfg.tree.clone();
    if tree_cfg.class_weights.is_empty() {
        tree_cfg.class_weights = balanced_weights(&y_train, 2);
    }

    let mut lists = FeatureLists::initial();
    let mut best_tree = None;
    let mut rounds = Vec::new();
    let mut previous = 0.0;
    let mut degenerate = false;
    let stop_reason;
    let mut round = 1;
    loop {
        let schema = apply_lists(&lists);
        let xt = project(x, &train, &schema);
        let xv = project(x, &val, &schema);
        let mut scores = Vec::with_capacity(cfg.sessions);
        let mut best: Option<(usize, f64, DecisionTree)> = None;
        for s in 0..cfg.sessions {
            let mut r = rng::seeded(rng::derive_seed(cfg.seed, &format!("dtsa-round{round}-session{s}")));
            let mut counts = vec![0.0; train.len()];
            for _ in 0..train.len() {
                counts[r.gen_range(0..train.len())] += 1.0;
            }
            let tree = DecisionTree::fit_weighted(&xt, &y_train, Some(&counts), &tree_cfg)?;
            let pred: Vec<bool> = xv.iter().map(|v| evalkit::decide(tree.predict(v).unwrap_or(0.0))).collect();
            let score = evalkit::binary_f1(&pred, &y_val);
            if best.as_ref().is_none_or(|b| score > b.1) {
                best = Some((s, score, tree));
            }
            scores.push(score);
        }
        let average = scores.iter().sum::<f64>() / scores.len() as f64;
        let (best_session, best_score, tree) = best.expect("at least one session");
        let proposed = if tree.max_importance() > 0.0 {
            Some(update_lists(&lists, &schema, tree.importance(), cfg.theta)?)
        } else {
            None
        };
        let adopted = proposed.is_some() && (round == 1 || average >= previous);
        rounds.push(RoundReport {
            round,
            schema_width: schema.width(),
            session_scores: scores,
            average,
            best: best_score,
            best_session,
            lists: proposed.clone().unwrap_or_else(|| lists.clone()),
            adopted,
        });
        let Some(proposed) = proposed else {
            degenerate = true;
            stop_reason = format!("round {round}: best tree has no split");
            break;
        };
        if adopted {
            lists = proposed;
            best_tree = Some((schema, tree));
        }
        if round > 1 && average <= previous {
            stop_reason = if adopted {
                format!("round {round}: average score did not improve")
            } else {
                format!("round {round}: average score dropped")
            };
            break;
        }
        if round >= cfg.max_rounds {
            stop_reason = format!("round limit {} reached", cfg.max_rounds);
            break;
        }
        previous = average;
        round += 1;
    }
    Ok(DtsaOutcome { lists, report: DtsaReport { rounds, degenerate, stop_reason }, best_tree })
}
