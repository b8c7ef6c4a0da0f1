//! Reference implementations shared by the integration tests: a random UTXO
//! graph generator, an exhaustive path enumerator and a quadratic DBSCAN.

#![allow(dead_code)]

use std::collections::BTreeMap;

use chainwatch_core::pathtrace::{Direction, PathKind, TraceConfig};
use chainwatch_core::spm::Label;
use chainwatch_core::{InputRef, OutputRef, Transaction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random graph with strictly increasing timestamps. Inputs spend whole
/// unspent outputs of earlier transactions; about a quarter of the
/// transactions are coinbases.
pub fn random_graph(seed: u64, max_txs: usize) -> Vec<Transaction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_txs);
    let mut utxo: Vec<(String, String, u64)> = Vec::new();
    let mut txs = Vec::with_capacity(n);
    let mut t = 1_600_000_000i64;
    for k in 0..n {
        t += rng.gen_range(1..8 * 3600);
        let id = format!("tx{k:03}");
        let mut inputs = Vec::new();
        if !utxo.is_empty() && rng.gen_bool(0.75) {
            for _ in 0..rng.gen_range(1..=3usize) {
                if utxo.is_empty() {
                    break;
                }
                let (source_tx, address, amount) = utxo.swap_remove(rng.gen_range(0..utxo.len()));
                inputs.push(InputRef { source_tx, address, amount });
            }
        }
        let total: u64 = if inputs.is_empty() { rng.gen_range(10..1000) } else { inputs.iter().map(|i| i.amount).sum() };
        let spend = total - rng.gen_range(0..=total / 10);
        let n_out = rng.gen_range(1..=3usize).min(spend as usize).max(1);
        let mut cuts: Vec<u64> = (1..n_out).map(|_| rng.gen_range(1..spend)).collect();
        cuts.sort_unstable();
        cuts.dedup();
        let mut outputs = Vec::new();
        let mut prev = 0;
        for c in cuts.into_iter().chain([spend]) {
            let address = format!("a{}", rng.gen_range(0..12));
            outputs.push(OutputRef { address: address.clone(), amount: c - prev });
            utxo.push((id.clone(), address, c - prev));
            prev = c;
        }
        txs.push(Transaction { id, timestamp: t, inputs, outputs });
    }
    txs
}

/// Random trace settings with spans short enough to bind on [`random_graph`].
pub fn random_trace_config(seed: u64) -> TraceConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    TraceConfig {
        lt_theta: [0.3, 0.5, 0.7][rng.gen_range(0..3)],
        lt_span: rng.gen_range(1..6) * 24 * 3600,
        st_floor: [0.05, 0.1, 0.2][rng.gen_range(0..3)],
        st_span: rng.gen_range(6..48) * 3600,
        branch_cap: usize::MAX,
    }
}

/// One chain as `(tx id, cumulative score)` pairs from the origin outward.
pub type Chain = Vec<(String, f64)>;

/// Every maximal chain from `origin`, enumerated depth first straight from
/// the transaction records.
pub fn oracle_paths(txs: &[Transaction], origin: &str, kind: PathKind, cfg: &TraceConfig) -> Vec<Chain> {
    let by_id: BTreeMap<&str, &Transaction> = txs.iter().map(|t| (t.id.as_str(), t)).collect();
    let o = by_id[origin];
    let threshold = |depth: usize| -> f64 {
        match kind {
            PathKind::LtBk | PathKind::LtFr => cfg.lt_theta,
            // max(floor, min(floor(h / 2), 0.9))
            PathKind::StBk | PathKind::StFr => cfg.st_floor.max(((depth / 2) as f64).min(0.9)),
        }
    };
    let span = match kind {
        PathKind::LtBk | PathKind::LtFr => cfg.lt_span,
        PathKind::StBk | PathKind::StFr => cfg.st_span,
    };
    let backward = kind.direction() == Direction::Backward;

    let children = |tx: &Transaction| -> Vec<(&Transaction, f64)> {
        let mut out = Vec::new();
        if backward {
            let total: u64 = tx.inputs.iter().map(|i| i.amount).sum();
            let mut from: BTreeMap<&str, u64> = BTreeMap::new();
            for i in &tx.inputs {
                *from.entry(i.source_tx.as_str()).or_default() += i.amount;
            }
            for (src, amount) in from {
                if let Some(s) = by_id.get(src) {
                    out.push((*s, amount as f64 / total as f64));
                }
            }
        } else {
            let total: u64 = tx.outputs.iter().map(|o| o.amount).sum();
            for c in txs {
                let amount: u64 = c.inputs.iter().filter(|i| i.source_tx == tx.id).map(|i| i.amount).sum();
                if amount > 0 {
                    out.push((c, amount as f64 / total as f64));
                }
            }
        }
        out
    };

    fn walk<'a>(
        chain: &mut Vec<(&'a Transaction, f64)>,
        out: &mut Vec<Chain>,
        children: &dyn Fn(&'a Transaction) -> Vec<(&'a Transaction, f64)>,
        keep: &dyn Fn(&Transaction, f64, usize) -> bool,
    ) {
        let (tx, score) = *chain.last().unwrap();
        let depth = chain.len() - 1;
        let mut extended = false;
        for (c, prop) in children(tx) {
            let s = prop * score;
            if chain.iter().any(|(t, _)| t.id == c.id) || !keep(c, s, depth) {
                continue;
            }
            extended = true;
            chain.push((c, s));
            walk(chain, out, children, keep);
            chain.pop();
        }
        if !extended {
            out.push(chain.iter().map(|(t, s)| (t.id.clone(), *s)).collect());
        }
    }

    let keep = |c: &Transaction, s: f64, depth: usize| -> bool {
        let within = if backward { o.timestamp - c.timestamp <= span } else { c.timestamp - o.timestamp <= span };
        within && s >= threshold(depth)
    };
    let mut out = Vec::new();
    walk(&mut vec![(o, 1.0)], &mut out, &children, &keep);
    out.sort_by(|a, b| a.iter().map(|h| &h.0).cmp(b.iter().map(|h| &h.0)));
    out
}

/// Clustered random points in the plane.
pub fn random_points(seed: u64, max_points: usize) -> (Vec<Vec<f64>>, f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_points);
    let centers: Vec<(f64, f64)> = (0..rng.gen_range(1..6)).map(|_| (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0))).collect();
    let points = (0..n)
        .map(|_| {
            if rng.gen_bool(0.15) {
                vec![rng.gen_range(-12.0..12.0), rng.gen_range(-12.0..12.0)]
            } else {
                let (cx, cy) = centers[rng.gen_range(0..centers.len())];
                let r: f64 = rng.gen_range(0.0..2.0);
                let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                vec![cx + r * a.cos(), cy + r * a.sin()]
            }
        })
        .collect();
    (points, rng.gen_range(0.2..1.5), rng.gen_range(2..8))
}

/// Quadratic DBSCAN from the definitions: cores have at least `min_pts`
/// points (themselves included) within `eps`, clusters are the connected
/// components of cores, numbered by their lowest core index, and a border
/// point belongs to the lowest-numbered cluster with a core neighbor.
pub fn reference_dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<Label> {
    let n = points.len();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let near: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| dist(&points[i], &points[j]) <= eps).collect()).collect();
    let core: Vec<bool> = near.iter().map(|v| v.len() >= min_pts).collect();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in (0..n).filter(|&i| core[i]) {
        for &j in near[i].iter().filter(|&&j| core[j]) {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            parent[a.max(b)] = a.min(b);
        }
    }
    // roots are the lowest core index of each component
    let mut order: BTreeMap<usize, usize> = BTreeMap::new();
    for i in (0..n).filter(|&i| core[i]) {
        let r = find(&mut parent, i);
        let next = order.len();
        order.entry(r).or_insert(next);
    }
    (0..n)
        .map(|i| {
            if core[i] {
                Label::Cluster(order[&find(&mut parent, i)])
            } else {
                near[i]
                    .iter()
                    .filter(|&&j| core[j])
                    .map(|&j| order[&find(&mut parent, j)])
                    .min()
                    .map_or(Label::Noise, Label::Cluster)
            }
        })
        .collect()
}

/// Labels renumbered by first appearance, so equal partitions compare equal.
pub fn canonical(labels: &[Label]) -> Vec<Option<usize>> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| match l {
            Label::Noise => None,
            Label::Cluster(c) => {
                let next = map.len();
                Some(*map.entry(*c).or_insert(next))
            }
        })
        .collect()
}
