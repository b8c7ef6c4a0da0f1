//! Status proposal: change-ratio segmentation, segment vectors and
//! density-clustered global statuses.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dtree::{DecisionTree, TrainConfig, TreeError};
use crate::math;

pub const CHANGE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpmError {
    #[error("no feature sequences")]
    NoSequences,
    #[error("split threshold {0} outside (0, 1)")]
    Theta(f64),
    #[error("all {points} segment vectors are noise at eps {eps}, min_pts {min_pts}; retune eps or min_pts")]
    AllNoise { points: usize, eps: f64, min_pts: usize },
    #[error("vector width {got}, expected {expected}")]
    Width { got: usize, expected: usize },
    #[error("segmentation covers {covered} hours, sequence has {len}")]
    Horizon { covered: usize, len: usize },
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeProfile {
    pub ratios: Vec<f64>,
}

impl ChangeProfile {
    pub fn peak(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

/// `C_j` = mean over sequences and features of `|f_j - f_{j-1}| / (|f_{j-1}| + eps)`, `C_0 = 0`.
/// `seqs[a][t][k]`.
pub fn change_profile(seqs: &[Vec<Vec<f64>>]) -> Result<ChangeProfile, SpmError> {
    let len = seqs.iter().map(Vec::len).min().ok_or(SpmError::NoSequences)?;
    let mut ratios = vec![0.0; len];
    for (j, r) in ratios.iter_mut().enumerate().skip(1) {
        let (mut sum, mut n) = (0.0, 0usize);
        for s in seqs {
            for (a, b) in s[j - 1].iter().zip(&s[j]) {
                sum += (b - a).abs() / (a.abs() + CHANGE_EPS);
                n += 1;
            }
        }
        *r = if n == 0 { 0.0 } else { sum / n as f64 };
    }
    Ok(ChangeProfile { ratios })
}

/// Segment boundaries `[0, s_1, ..., horizon]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    pub boundaries: Vec<usize>,
}

impl Segmentation {
    pub fn single(horizon: usize) -> Self {
        Self { boundaries: vec![0, horizon] }
    }

    pub fn horizon(&self) -> usize {
        *self.boundaries.last().unwrap_or(&0)
    }

    pub fn len(&self) -> usize {
        self.boundaries.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Half-open `[b, e)` hour ranges.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        self.boundaries.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Index of the segment containing hour `t`.
    pub fn segment_of(&self, t: usize) -> usize {
        self.boundaries.partition_point(|&b| b <= t).saturating_sub(1).min(self.len().saturating_sub(1))
    }
}

/// Hours `j` with `C_j > theta * C^H`, accepted greedily by descending
/// `C_j` (ties to the earlier hour) when every segment stays at least
/// `min_len` hours long.
pub fn split_points(profile: &ChangeProfile, theta: f64, min_len: usize) -> Result<Segmentation, SpmError> {
    split_points_capped(profile, theta, min_len, None)
}

/// [`split_points`] keeping at most `max_segments` segments; candidates are
/// admitted in order of decreasing `C_j`.
pub fn split_points_capped(
    profile: &ChangeProfile,
    theta: f64,
    min_len: usize,
    max_segments: Option<usize>,
) -> Result<Segmentation, SpmError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(SpmError::Theta(theta));
    }
    let horizon = profile.ratios.len();
    let peak = profile.peak();
    if peak <= 0.0 {
        return Ok(Segmentation::single(horizon));
    }
    let mut cand: Vec<usize> = (1..horizon).filter(|&j| profile.ratios[j] > theta * peak).collect();
    cand.sort_by(|&a, &b| profile.ratios[b].total_cmp(&profile.ratios[a]).then(a.cmp(&b)));
    let mut kept = vec![0, horizon];
    let cap = max_segments.unwrap_or(usize::MAX).max(1);
    for j in cand {
        if kept.len() > cap {
            break;
        }
        if kept.iter().all(|&k| j.abs_diff(k) >= min_len.max(1)) {
            kept.push(j);
        }
    }
    kept.sort_unstable();
    Ok(Segmentation { boundaries: kept })
}

pub fn slice_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows.first().map_or(0, Vec::len);
    let mut m = vec![0.0; d];
    for r in rows {
        for (a, v) in m.iter_mut().zip(r) {
            *a += v;
        }
    }
    let n = rows.len().max(1) as f64;
    m.iter_mut().for_each(|v| *v /= n);
    m
}

/// Importance times the slice's time-mean (divisor = number of rows).
pub fn segment_vector(rows: &[Vec<f64>], importance: &[f64]) -> Vec<f64> {
    slice_mean(rows).iter().zip(importance).map(|(m, s)| m * s).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Population std; 0 is stored as 1.
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn fit(points: &[Vec<f64>]) -> Self {
        let d = points.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; d];
        let mut std = vec![1.0; d];
        let mut col = Vec::with_capacity(points.len());
        for k in 0..d {
            col.clear();
            col.extend(points.iter().map(|p| p[k]));
            let (m, s) = math::mean_std(&col);
            mean[k] = m;
            std[k] = if s > 0.0 { s } else { 1.0 };
        }
        Self { mean, std }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(self.mean.iter().zip(&self.std)).map(|(x, (m, s))| (x - m) / s).collect()
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }
}

/// DBSCAN label for a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Noise,
    Cluster(usize),
}

fn region(points: &[Vec<f64>], i: usize, eps: f64) -> Vec<usize> {
    (0..points.len()).filter(|&j| math::euclidean(&points[i], &points[j]) <= eps).collect()
}

/// Sequential DBSCAN; `min_pts` counts the point itself. Clusters are
/// numbered in discovery order and a border point joins the first cluster
/// that reaches it.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<Label> {
    let mut labels: Vec<Option<Label>> = vec![None; points.len()];
    let mut next = 0;
    for i in 0..points.len() {
        if labels[i].is_some() {
            continue;
        }
        let n = region(points, i, eps);
        if n.len() < min_pts {
            labels[i] = Some(Label::Noise);
            continue;
        }
        let c = next;
        next += 1;
        labels[i] = Some(Label::Cluster(c));
        let mut queue: VecDeque<usize> = n.into_iter().filter(|&q| q != i).collect();
        while let Some(q) = queue.pop_front() {
            match labels[q] {
                Some(Label::Noise) => {
                    labels[q] = Some(Label::Cluster(c));
                    continue;
                }
                Some(Label::Cluster(_)) => continue,
                None => {}
            }
            labels[q] = Some(Label::Cluster(c));
            let nq = region(points, q, eps);
            if nq.len() >= min_pts {
                queue.extend(nq);
            }
        }
    }
    labels.into_iter().map(|l| l.unwrap_or(Label::Noise)).collect()
}

/// Sorted distances to the `k`-th nearest other point.
pub fn k_distances(points: &[Vec<f64>], k: usize) -> Vec<f64> {
    let mut out: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> =
                points.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, q)| math::euclidean(p, q)).collect();
            d.sort_by(f64::total_cmp);
            d.get(k.saturating_sub(1).min(d.len().saturating_sub(1))).copied().unwrap_or(0.0)
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Elbow of the sorted k-distance curve: the point farthest from the chord
/// between its first and last entries.
pub fn elbow_eps(points: &[Vec<f64>], k: usize) -> f64 {
    let d = k_distances(points, k);
    if d.len() < 3 {
        return d.last().copied().unwrap_or(0.0);
    }
    let n = (d.len() - 1) as f64;
    let (y0, y1) = (d[0], d[d.len() - 1]);
    let span = y1 - y0;
    if span <= 0.0 {
        return y1;
    }
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, v) in d.iter().enumerate() {
        // normalized coordinates; the curve is convex so the gap below the chord is the distance
        let x = i as f64 / n;
        let y = (v - y0) / span;
        let gap = x - y;
        if gap > best.1 {
            best = (i, gap);
        }
    }
    d[best.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpmConfig {
    pub theta_split: f64,
    pub min_len: usize,
    /// `None` picks eps from the k-distance elbow.
    pub eps: Option<f64>,
    pub min_pts: usize,
    /// Upper bound on the number of segments; `None` keeps every split.
    pub max_segments: Option<usize>,
    pub segment_tree: TrainConfig,
    pub status_tree: TrainConfig,
}

impl Default for SpmConfig {
    fn default() -> Self {
        Self {
            theta_split: 0.3,
            min_len: 2,
            eps: None,
            min_pts: 5,
            max_segments: None,
            segment_tree: TrainConfig { max_depth: 6, min_samples_split: 10, ..TrainConfig::default() },
            status_tree: TrainConfig { max_depth: 12, min_samples_split: 2, ..TrainConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusCatalog {
    pub segmentation: Segmentation,
    /// Per-segment importance vector of that segment's tree.
    pub segment_importance: Vec<Vec<f64>>,
    pub norm: NormStats,
    pub eps: f64,
    pub min_pts: usize,
    /// Cluster means of the normalized members; status id = index.
    pub centers: Vec<Vec<f64>>,
    pub status_tree: DecisionTree,
    /// Sizes of each cluster and of the noise set.
    pub cluster_sizes: Vec<usize>,
    pub noise_count: usize,
}

impl StatusCatalog {
    /// Number of statuses `K`.
    pub fn status_count(&self) -> usize {
        self.centers.len()
    }

    /// Id reserved for DBSCAN noise.
    pub fn noise_id(&self) -> usize {
        self.centers.len()
    }

    pub fn width(&self) -> usize {
        self.norm.width()
    }

    /// Segment vector of `rows[b..e]` for segment `j` (unnormalized).
    pub fn segment_vector(&self, j: usize, rows: &[Vec<f64>]) -> Vec<f64> {
        segment_vector(rows, &self.segment_importance[j])
    }

    /// Segment vectors of a full sequence, one per segment.
    pub fn sequence_vectors(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SpmError> {
        if rows.len() < self.segmentation.horizon() {
            return Err(SpmError::Horizon { covered: self.segmentation.horizon(), len: rows.len() });
        }
        Ok(self.segmentation.segments().iter().enumerate().map(|(j, &(b, e))| self.segment_vector(j, &rows[b..e])).collect())
    }

    /// Status id from the status tree plus the distance to that status's center.
    pub fn assign_status(&self, vector: &[f64]) -> Result<(usize, f64), SpmError> {
        if vector.len() != self.width() {
            return Err(SpmError::Width { got: vector.len(), expected: self.width() });
        }
        let z = self.norm.apply(vector);
        let id = self.status_tree.predict_class(&z)?;
        Ok((id, math::euclidean(&z, &self.centers[id])))
    }

    pub fn nearest_center(&self, vector: &[f64]) -> usize {
        let z = self.norm.apply(vector);
        let mut best = (0, f64::INFINITY);
        for (k, c) in self.centers.iter().enumerate() {
            let d = math::euclidean(&z, c);
            if d < best.1 {
                best = (k, d);
            }
        }
        best.0
    }
}

/// Cluster normalized vectors and fit the status tree.
pub fn cluster_statuses(
    normalized: &[Vec<f64>],
    eps: f64,
    min_pts: usize,
    tree_cfg: &TrainConfig,
) -> Result<(Vec<Vec<f64>>, Vec<Label>, DecisionTree), SpmError> {
    let labels = dbscan(normalized, eps, min_pts);
    let k = labels.iter().filter_map(|l| if let Label::Cluster(c) = l { Some(c + 1) } else { None }).max().unwrap_or(0);
    if k == 0 {
        return Err(SpmError::AllNoise { points: normalized.len(), eps, min_pts });
    }
    let d = normalized[0].len();
    let mut centers = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (p, l) in normalized.iter().zip(&labels) {
        if let Label::Cluster(c) = *l {
            counts[c] += 1;
            for (a, v) in centers[c].iter_mut().zip(p) {
                *a += v;
            }
            x.push(p.clone());
            y.push(c);
        }
    }
    for (c, n) in centers.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|v| *v /= *n as f64);
    }
    let mut cfg = tree_cfg.clone();
    cfg.class_weights.clear();
    let tree = DecisionTree::fit(&x, &y, &cfg)?;
    Ok((centers, labels, tree))
}

/// Fit the catalog on training sequences `seqs[a][t][k]` with binary labels.
pub fn fit_catalog(
    segmentation: Segmentation,
    seqs: &[Vec<Vec<f64>>],
    labels: &[usize],
    cfg: &SpmConfig,
) -> Result<StatusCatalog, SpmError> {
    if seqs.is_empty() {
        return Err(SpmError::NoSequences);
    }
    for s in seqs {
        if s.len() < segmentation.horizon() {
            return Err(SpmError::Horizon { covered: segmentation.horizon(), len: s.len() });
        }
    }
    let segments = segmentation.segments();
    let mut segment_importance = Vec::with_capacity(segments.len());
    let mut pool = Vec::with_capacity(seqs.len() * segments.len());
    for &(b, e) in &segments {
        let means: Vec<Vec<f64>> = seqs.iter().map(|s| slice_mean(&s[b..e])).collect();
        let tree = DecisionTree::fit(&means, labels, &cfg.segment_tree)?;
        for m in &means {
            pool.push(m.iter().zip(tree.importance()).map(|(a, s)| a * s).collect::<Vec<f64>>());
        }
        segment_importance.push(tree.importance().to_vec());
    }
    let norm = NormStats::fit(&pool);
    let normalized: Vec<Vec<f64>> = pool.iter().map(|p| norm.apply(p)).collect();
    let eps = cfg.eps.unwrap_or_else(|| elbow_eps(&normalized, cfg.min_pts.saturating_sub(1).max(1)));
    let (centers, dlabels, status_tree) = cluster_statuses(&normalized, eps, cfg.min_pts, &cfg.status_tree)?;
    let mut cluster_sizes = vec![0; centers.len()];
    let mut noise_count = 0;
    for l in &dlabels {
        match l {
            Label::Cluster(c) => cluster_sizes[*c] += 1,
            Label::Noise => noise_count += 1,
        }
    }
    Ok(StatusCatalog {
        segmentation,
        segment_importance,
        norm,
        eps,
        min_pts: cfg.min_pts,
        centers,
        status_tree,
        cluster_sizes,
        noise_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, seeded};
    use proptest::prelude::*;

    #[test]
    fn constant_sequences_have_flat_profile() {
        let seqs = vec![vec![vec![3.0, 1.0]; 10]; 2];
        let p = change_profile(&seqs).unwrap();
        assert!(p.ratios.iter().all(|r| *r == 0.0));
        assert_eq!(split_points(&p, 0.3, 2).unwrap(), Segmentation::single(10));
    }

    #[test]
    fn doubling_spike() {
        let mut s = vec![vec![1.0]; 10];
        for r in s.iter_mut().skip(5) {
            r[0] = 2.0;
        }
        let p = change_profile(&[s]).unwrap();
        let arg = (0..10).max_by(|&a, &b| p.ratios[a].total_cmp(&p.ratios[b])).unwrap();
        assert_eq!(arg, 5);
        assert_eq!(split_points(&p, 0.5, 2).unwrap().boundaries, vec![0, 5, 10]);
    }

    #[test]
    fn capped_split_keeps_strongest() {
        let mut r = vec![0.0; 20];
        for (j, v) in [(3, 0.5), (6, 0.9), (10, 1.0), (14, 0.7), (17, 0.6)] {
            r[j] = v;
        }
        let p = ChangeProfile { ratios: r };
        assert_eq!(split_points(&p, 0.3, 2).unwrap().boundaries, vec![0, 3, 6, 10, 14, 17, 20]);
        assert_eq!(split_points_capped(&p, 0.3, 2, Some(3)).unwrap().boundaries, vec![0, 6, 10, 20]);
        assert_eq!(split_points_capped(&p, 0.3, 2, Some(1)).unwrap().boundaries, vec![0, 20]);
        assert_eq!(split_points_capped(&p, 0.3, 2, Some(50)).unwrap(), split_points(&p, 0.3, 2).unwrap());
    }

    #[test]
    fn two_address_profile() {
        let a = vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![2.0, 4.0]];
        let b = vec![vec![4.0, 2.0], vec![2.0, 2.0], vec![2.0, 3.0]];
        let p = change_profile(&[a, b]).unwrap();
        let e = CHANGE_EPS;
        let c1 = (1.0 / (1.0 + e) + 0.0 + 2.0 / (4.0 + e) + 0.0) / 4.0;
        let c2 = (0.0 + 4.0 / e + 0.0 + 1.0 / (2.0 + e)) / 4.0;
        assert_eq!(p.ratios[0], 0.0);
        assert!((p.ratios[1] - c1).abs() < 1e-12);
        assert!((p.ratios[2] - c2).abs() / c2 < 1e-12);
    }

    #[test]
    fn adjacent_spikes_merge() {
        let mut r = vec![0.0; 20];
        r[5] = 1.0;
        r[6] = 2.0;
        let s = split_points(&ChangeProfile { ratios: r.clone() }, 0.3, 2).unwrap();
        assert_eq!(s.boundaries, vec![0, 6, 20]);
        r[1] = 5.0;
        let s = split_points(&ChangeProfile { ratios: r }, 0.1, 2).unwrap();
        assert_eq!(s.boundaries, vec![0, 6, 20]);
    }

    #[test]
    fn segment_lookup() {
        let s = Segmentation { boundaries: vec![0, 5, 9, 20] };
        assert_eq!(s.segment_of(0), 0);
        assert_eq!(s.segment_of(4), 0);
        assert_eq!(s.segment_of(5), 1);
        assert_eq!(s.segment_of(19), 2);
        assert_eq!(s.segments(), vec![(0, 5), (5, 9), (9, 20)]);
    }

    #[test]
    fn segment_vector_examples() {
        let rows = vec![vec![1.0, 4.0], vec![3.0, 8.0]];
        assert_eq!(segment_vector(&rows, &[1.0, 1.0]), vec![2.0, 6.0]);
        assert_eq!(segment_vector(&rows, &[0.0, 1.0]), vec![0.0, 6.0]);
        assert_eq!(segment_vector(&rows, &[0.5, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn normalization_is_idempotent() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * i) as f64, 7.0]).collect();
        let n = NormStats::fit(&pts);
        let z: Vec<Vec<f64>> = pts.iter().map(|p| n.apply(p)).collect();
        let n2 = NormStats::fit(&z);
        for p in &z {
            for (a, b) in n2.apply(p).iter().zip(p) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    fn blobs(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = seeded(seed);
        (0..n)
            .map(|i| {
                let c = if i % 2 == 0 { 0.0 } else { 10.0 };
                vec![c + 0.3 * normal(&mut r), c + 0.3 * normal(&mut r)]
            })
            .collect()
    }

    #[test]
    fn two_blobs_two_statuses() {
        let pts = blobs(200, 4);
        let (centers, labels, tree) = cluster_statuses(&pts, 1.0, 4, &SpmConfig::default().status_tree).unwrap();
        assert_eq!(centers.len(), 2);
        assert!(labels.iter().all(|l| *l != Label::Noise));
        for (p, l) in pts.iter().zip(&labels) {
            assert_eq!(Label::Cluster(tree.predict_class(p).unwrap()), *l);
        }
    }

    #[test]
    fn identical_points_one_status() {
        let pts = vec![vec![2.0, -1.0]; 6];
        let (centers, _, _) = cluster_statuses(&pts, 0.1, 3, &TrainConfig::default()).unwrap();
        assert_eq!(centers, vec![vec![2.0, -1.0]]);
    }

    #[test]
    fn isolated_point_is_noise() {
        let mut pts = vec![vec![0.0], vec![0.1], vec![0.2], vec![0.15]];
        pts.push(vec![50.0]);
        let l = dbscan(&pts, 0.5, 3);
        assert_eq!(l[4], Label::Noise);
        assert!(l[..4].iter().all(|x| *x == Label::Cluster(0)));
        let err = cluster_statuses(&[vec![0.0], vec![9.0]], 0.5, 3, &TrainConfig::default());
        assert!(matches!(err, Err(SpmError::AllNoise { .. })));
    }

    #[test]
    fn elbow_separates_scales() {
        let pts = blobs(100, 8);
        let eps = elbow_eps(&pts, 3);
        assert!(eps > 0.05 && eps < 5.0, "eps {eps}");
    }

    fn catalog_fixture() -> (StatusCatalog, Vec<Vec<Vec<f64>>>) {
        let mut r = seeded(11);
        let mut seqs = Vec::new();
        let mut labels = Vec::new();
        for a in 0..60 {
            let mal = a % 3 == 0;
            let rows: Vec<Vec<f64>> = (0..20)
                .map(|t| {
                    let level = if mal && t >= 10 { 5.0 } else { 1.0 };
                    vec![level + 0.05 * normal(&mut r), 3.0 + 0.05 * normal(&mut r)]
                })
                .collect();
            seqs.push(rows);
            labels.push(usize::from(mal));
        }
        let profile = change_profile(&seqs).unwrap();
        let seg = split_points(&profile, 0.3, 2).unwrap();
        let cfg = SpmConfig { eps: Some(0.5), min_pts: 3, ..SpmConfig::default() };
        (fit_catalog(seg, &seqs, &labels, &cfg).unwrap(), seqs)
    }

    #[test]
    fn catalog_round_trip_and_assignment() {
        let (cat, seqs) = catalog_fixture();
        assert_eq!(cat.segmentation.boundaries, vec![0, 10, 20]);
        assert!(cat.status_count() >= 2);
        for c in 0..cat.status_count() {
            // a center in normalized space maps back through the stats
            let raw: Vec<f64> = cat.centers[c].iter().zip(cat.norm.mean.iter().zip(&cat.norm.std)).map(|(z, (m, s))| z * s + m).collect();
            assert_eq!(cat.assign_status(&raw).unwrap().0, c);
        }
        let vs = cat.sequence_vectors(&seqs[0]).unwrap();
        assert_eq!(vs.len(), 2);
        let (_, d) = cat.assign_status(&[1e6, -1e6]).unwrap();
        assert!(d > 1.0);
        assert!(cat.assign_status(&[1.0]).is_err());
        let s = serde_json::to_string(&cat).unwrap();
        let back: StatusCatalog = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cat);
    }

    proptest! {
        #[test]
        fn splits_tile_the_horizon(r in proptest::collection::vec(0.0f64..10.0, 2..80), theta in 0.05f64..0.95, min_len in 1usize..5) {
            let s = split_points(&ChangeProfile { ratios: r.clone() }, theta, min_len).unwrap();
            prop_assert_eq!(s.boundaries[0], 0);
            prop_assert_eq!(s.horizon(), r.len());
            for w in s.boundaries.windows(2) {
                prop_assert!(w[1] > w[0]);
            }
            let covered: usize = s.segments().iter().map(|(b, e)| e - b).sum();
            prop_assert_eq!(covered, r.len());
            for t in 0..r.len() {
                let (b, e) = s.segments()[s.segment_of(t)];
                prop_assert!(b <= t && t < e);
            }
        }
    }
}
