//! CART classification tree with Gini impurity and sample weights.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("no training samples")]
    Empty,
    #[error("sample {row} has width {got}, expected {expected}")]
    Width { row: usize, got: usize, expected: usize },
    #[error("non-finite value in sample {row}, feature {feature}")]
    NonFinite { row: usize, feature: usize },
    #[error("{labels} labels for {samples} samples")]
    LabelCount { labels: usize, samples: usize },
    #[error("input width {got} does not match tree width {expected}")]
    WidthMismatch { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Per-class weight, indexed by label. Empty means uniform.
    pub class_weights: Vec<f64>,
    /// Seed for callers that resample; fitting itself is deterministic.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { max_depth: 8, min_samples_split: 10, class_weights: Vec::new(), seed: 0 }
    }
}

/// `N / (n_classes * N_c)` for every class present; absent classes get 0.
pub fn balanced_weights(y: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &c in y {
        counts[c] += 1;
    }
    let present = counts.iter().filter(|c| **c > 0).count().max(1);
    counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { y.len() as f64 / (present as f64 * c as f64) })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    /// Weighted class distribution of the training samples reaching the leaf.
    Leaf { distribution: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub n_features: usize,
    pub n_classes: usize,
    /// Root is node 0. Samples with `x[feature] <= threshold` go left.
    pub nodes: Vec<Node>,
    pub importance: Vec<f64>,
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total) * (c / total)).sum::<f64>()
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    w: &'a [f64],
    n_classes: usize,
    cfg: &'a TrainConfig,
    nodes: Vec<Node>,
    gains: Vec<f64>,
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn distribution(&self, idx: &[usize]) -> (Vec<f64>, f64) {
        let mut d = vec![0.0; self.n_classes];
        for &i in idx {
            d[self.y[i]] += self.w[i];
        }
        let total = d.iter().sum();
        (d, total)
    }

    fn best_split(&self, idx: &[usize], parent: &[f64], total: f64) -> Option<Best> {
        let parent_impurity = gini(parent, total) * total;
        let mut best: Option<Best> = None;
        let mut order = idx.to_vec();
        let mut left = vec![0.0; self.n_classes];
        let mut right = vec![0.0; self.n_classes];
        for f in 0..self.x[idx[0]].len() {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            left.iter_mut().for_each(|v| *v = 0.0);
            right.copy_from_slice(parent);
            let mut wl = 0.0;
            for k in 0..order.len() - 1 {
                let i = order[k];
                left[self.y[i]] += self.w[i];
                right[self.y[i]] -= self.w[i];
                wl += self.w[i];
                let (v, next) = (self.x[i][f], self.x[order[k + 1]][f]);
                if v == next {
                    continue;
                }
                let wr = total - wl;
                let gain = parent_impurity - gini(&left, wl) * wl - gini(&right, wr) * wr;
                let gain = gain.max(0.0);
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = v + (next - v) / 2.0;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(Best { feature: f, threshold, gain });
                }
            }
        }
        best
    }

    /// Returns the node id and the total gain of the subtree.
    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> (usize, f64) {
        let (dist, total) = self.distribution(&idx);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { distribution: normalize(&dist, total) });
        let pure = dist.iter().filter(|c| **c > 0.0).count() <= 1;
        if pure || depth >= self.cfg.max_depth || idx.len() < self.cfg.min_samples_split.max(2) {
            return (id, 0.0);
        }
        let Some(best) = self.best_split(&idx, &dist, total) else {
            return (id, 0.0);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][best.feature] <= best.threshold);
        let mark = self.nodes.len();
        let (left, gl) = self.grow(l, depth + 1);
        let (right, gr) = self.grow(r, depth + 1);
        let subtree = best.gain + gl + gr;
        if subtree <= 0.0 {
            // zero-gain splits are kept only when something below them pays off
            self.nodes.truncate(mark);
            return (id, 0.0);
        }
        self.nodes[id] = Node::Split { feature: best.feature, threshold: best.threshold, left, right };
        self.gains[best.feature] += best.gain;
        (id, subtree)
    }
}

fn normalize(d: &[f64], total: f64) -> Vec<f64> {
    if total > 0.0 {
        d.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; d.len()]
    }
}

fn validate(x: &[Vec<f64>], y: &[usize]) -> Result<usize, TreeError> {
    if x.is_empty() {
        return Err(TreeError::Empty);
    }
    if x.len() != y.len() {
        return Err(TreeError::LabelCount { labels: y.len(), samples: x.len() });
    }
    let width = x[0].len();
    for (row, s) in x.iter().enumerate() {
        if s.len() != width {
            return Err(TreeError::Width { row, got: s.len(), expected: width });
        }
        if let Some(feature) = s.iter().position(|v| !v.is_finite()) {
            return Err(TreeError::NonFinite { row, feature });
        }
    }
    Ok(width)
}

impl DecisionTree {
    /// Fit on labels `0..n_classes`; binary data uses 0 = negative, 1 = positive.
    pub fn fit(x: &[Vec<f64>], y: &[usize], cfg: &TrainConfig) -> Result<Self, TreeError> {
        Self::fit_weighted(x, y, None, cfg)
    }

    /// Fit with extra per-sample multiplicities (for example bootstrap counts).
    pub fn fit_weighted(
        x: &[Vec<f64>],
        y: &[usize],
        multiplicity: Option<&[f64]>,
        cfg: &TrainConfig,
    ) -> Result<Self, TreeError> {
        let width = validate(x, y)?;
        let n_classes = y.iter().max().map_or(2, |m| (m + 1).max(2)).max(cfg.class_weights.len());
        let w: Vec<f64> = y
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let cw = cfg.class_weights.get(c).copied().unwrap_or(1.0);
                cw * multiplicity.map_or(1.0, |m| m[i])
            })
            .collect();
        let idx: Vec<usize> = (0..x.len()).filter(|&i| w[i] > 0.0).collect();
        let mut b = Builder { x, y, w: &w, n_classes, cfg, nodes: Vec::new(), gains: vec![0.0; width] };
        if idx.is_empty() {
            b.nodes.push(Node::Leaf { distribution: vec![0.0; n_classes] });
        } else {
            b.grow(idx, 0);
        }
        let total: f64 = b.gains.iter().sum();
        let importance = if total > 0.0 { b.gains.iter().map(|g| g / total).collect() } else { vec![0.0; width] };
        Ok(Self { n_features: width, n_classes, nodes: b.nodes, importance })
    }

    fn leaf(&self, x: &[f64]) -> Result<&[f64], TreeError> {
        if x.len() != self.n_features {
            return Err(TreeError::WidthMismatch { got: x.len(), expected: self.n_features });
        }
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { distribution } => return Ok(distribution),
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Class distribution of the leaf reached by `x`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<&[f64], TreeError> {
        self.leaf(x)
    }

    /// Positive-class (label 1) fraction of the leaf reached by `x`.
    pub fn predict(&self, x: &[f64]) -> Result<f64, TreeError> {
        Ok(self.leaf(x)?.get(1).copied().unwrap_or(0.0))
    }

    /// Most likely class; ties go to the lowest label.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize, TreeError> {
        let d = self.leaf(x)?;
        let mut best = 0;
        for (k, v) in d.iter().enumerate() {
            if *v > d[best] {
                best = k;
            }
        }
        Ok(best)
    }

    pub fn importance(&self) -> &[f64] {
        &self.importance
    }

    /// Largest importance entry (0 for a stump).
    pub fn max_importance(&self) -> f64 {
        self.importance.iter().copied().fold(0.0, f64::max)
    }

    pub fn split_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> TrainConfig {
        TrainConfig { min_samples_split: 2, ..TrainConfig::default() }
    }

    #[test]
    fn separable_single_feature() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..10).map(|i| usize::from(i >= 5)).collect();
        let t = DecisionTree::fit(&x, &y, &cfg()).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(t.importance, vec![1.0]);
        assert_eq!(t.predict(&[4.4]).unwrap(), 0.0);
        assert_eq!(t.predict(&[4.6]).unwrap(), 1.0);
    }

    #[test]
    fn single_class_is_a_stump() {
        let x = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let t = DecisionTree::fit(&x, &[0, 0], &cfg()).unwrap();
        assert_eq!(t.split_count(), 0);
        assert_eq!(t.importance, vec![0.0, 0.0]);
        assert_eq!(t.max_importance(), 0.0);
        assert_eq!(t.predict(&[9.0, 9.0]).unwrap(), 0.0);
    }

    #[test]
    fn duplicate_column_lower_index_wins() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![0.0, i as f64, i as f64]).collect();
        let y: Vec<usize> = (0..8).map(|i| usize::from(i >= 3)).collect();
        let t = DecisionTree::fit(&x, &y, &cfg()).unwrap();
        assert_eq!(t.importance, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn balanced_xor_still_separates() {
        // every root split has zero gain; the zero-gain root split is kept
        // because the level below separates perfectly
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let y = vec![0, 1, 1, 0];
        let t = DecisionTree::fit(&x, &y, &TrainConfig { max_depth: 2, ..cfg() }).unwrap();
        for (s, l) in x.iter().zip(&y) {
            assert_eq!(t.predict_class(s).unwrap(), *l);
        }
        assert!((t.importance.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(t.importance, vec![0.0, 1.0]);
    }

    #[test]
    fn unbalanced_xor_uses_both_features() {
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]];
        let y = vec![0, 1, 1, 0, 0];
        let t = DecisionTree::fit(&x, &y, &TrainConfig { max_depth: 2, ..cfg() }).unwrap();
        assert!(t.importance.iter().all(|v| *v > 0.0));
        assert!((t.importance.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (s, l) in x.iter().zip(&y) {
            assert_eq!(t.predict_class(s).unwrap(), *l);
        }
    }

    #[test]
    fn hand_built_tree_trace() {
        let t = DecisionTree {
            n_features: 2,
            n_classes: 2,
            nodes: vec![
                Node::Split { feature: 0, threshold: 1.5, left: 1, right: 2 },
                Node::Leaf { distribution: vec![0.9, 0.1] },
                Node::Split { feature: 1, threshold: -1.0, left: 3, right: 4 },
                Node::Leaf { distribution: vec![0.25, 0.75] },
                Node::Leaf { distribution: vec![0.0, 1.0] },
            ],
            importance: vec![0.5, 0.5],
        };
        assert_eq!(t.predict(&[1.5, 100.0]).unwrap(), 0.1);
        assert_eq!(t.predict(&[2.0, -1.0]).unwrap(), 0.75);
        assert_eq!(t.predict(&[2.0, 0.0]).unwrap(), 1.0);
        assert_eq!(t.predict(&[2.0]), Err(TreeError::WidthMismatch { got: 1, expected: 2 }));
    }

    #[test]
    fn class_weights_shift_leaves() {
        // one feature value shared by 3 negatives and 1 positive
        let x = vec![vec![0.0]; 4];
        let y = vec![0, 0, 0, 1];
        let t = DecisionTree::fit(&x, &y, &TrainConfig { class_weights: vec![1.0, 3.0], ..cfg() }).unwrap();
        assert_eq!(t.predict(&[0.0]).unwrap(), 0.5);
        assert_eq!(balanced_weights(&y, 2), vec![4.0 / 6.0, 2.0]);
    }

    #[test]
    fn multiclass() {
        let x: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..9).map(|i| i / 3).collect();
        let t = DecisionTree::fit(&x, &y, &cfg()).unwrap();
        assert_eq!(t.n_classes, 3);
        for (s, l) in x.iter().zip(&y) {
            assert_eq!(t.predict_class(s).unwrap(), *l);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(DecisionTree::fit(&[], &[], &cfg()), Err(TreeError::Empty));
        let x = vec![vec![1.0], vec![1.0, 2.0]];
        assert!(matches!(DecisionTree::fit(&x, &[0, 1], &cfg()), Err(TreeError::Width { row: 1, .. })));
        let x = vec![vec![f64::NAN]];
        assert!(matches!(DecisionTree::fit(&x, &[0], &cfg()), Err(TreeError::NonFinite { .. })));
    }

    #[test]
    fn json_round_trip() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64).sin(), (i as f64 * 0.37).cos()]).collect();
        let y: Vec<usize> = (0..20).map(|i| usize::from(i % 3 == 0)).collect();
        let t = DecisionTree::fit(&x, &y, &cfg()).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        let back: DecisionTree = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }

    /// Recompute each split's weighted impurity decrease from the samples
    /// routed to it.
    fn oracle_importance(t: &DecisionTree, x: &[Vec<f64>], y: &[usize]) -> Vec<f64> {
        let mut gains = vec![0.0; t.n_features];
        let g = |rows: &[usize]| {
            let n = rows.len() as f64;
            let mut c = vec![0.0; t.n_classes];
            for &r in rows {
                c[y[r]] += 1.0;
            }
            if n == 0.0 {
                0.0
            } else {
                n * (1.0 - c.iter().map(|v| (v / n) * (v / n)).sum::<f64>())
            }
        };
        let mut stack = vec![(0usize, (0..x.len()).collect::<Vec<_>>())];
        while let Some((at, rows)) = stack.pop() {
            if let Node::Split { feature, threshold, left, right } = &t.nodes[at] {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][*feature] <= *threshold);
                gains[*feature] += g(&rows) - g(&l) - g(&r);
                stack.push((*left, l));
                stack.push((*right, r));
            }
        }
        let total: f64 = gains.iter().sum();
        gains.iter().map(|v| if total > 0.0 { v / total } else { 0.0 }).collect()
    }

    fn dataset() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
        (5usize..40, 1usize..5).prop_flat_map(|(n, d)| {
            (
                proptest::collection::vec(proptest::collection::vec(0i32..6, d), n),
                proptest::collection::vec(0usize..2, n),
            )
                .prop_map(|(x, y)| (x.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect(), y))
        })
    }

    proptest! {
        #[test]
        fn importance_matches_oracle_and_sums_to_one((x, y) in dataset()) {
            let t = DecisionTree::fit(&x, &y, &cfg()).unwrap();
            let o = oracle_importance(&t, &x, &y);
            for (a, b) in t.importance.iter().zip(&o) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            let s: f64 = t.importance.iter().sum();
            if t.split_count() > 0 {
                prop_assert!((s - 1.0).abs() < 1e-9);
            } else {
                prop_assert_eq!(s, 0.0);
            }
            prop_assert!(t.importance.iter().all(|v| *v >= 0.0));
        }

        #[test]
        fn sample_order_does_not_matter((x, y) in dataset(), rot in 0usize..40) {
            let t = DecisionTree::fit(&x, &y, &cfg()).unwrap();
            let k = rot % x.len();
            let mut xr = x.clone();
            let mut yr = y.clone();
            xr.rotate_left(k);
            yr.rotate_left(k);
            xr.reverse();
            yr.reverse();
            let u = DecisionTree::fit(&xr, &yr, &cfg()).unwrap();
            prop_assert_eq!(t.split_count(), u.split_count());
            for s in &x {
                prop_assert_eq!(t.predict(s).unwrap(), u.predict(s).unwrap());
            }
        }

        #[test]
        fn training_replay_on_full_tree((x, y) in dataset()) {
            let c = TrainConfig { max_depth: 64, min_samples_split: 2, ..TrainConfig::default() };
            let t = DecisionTree::fit(&x, &y, &c).unwrap();
            for (s, l) in x.iter().zip(&y) {
                // leaves are pure unless identical points carry different labels
                let dup_conflict = x.iter().zip(&y).any(|(o, m)| o == s && m != l);
                if !dup_conflict {
                    prop_assert_eq!(t.predict(s).unwrap(), *l as f64);
                }
            }
        }
    }
}
