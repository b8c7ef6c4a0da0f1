//! Asset transfer paths.
//!
//! A trace starts at an origin transaction and expands level by level: a
//! backward trace follows the transactions that funded the current frontier
//! (influence pairs), a forward trace follows the transactions that spent it
//! (trust pairs). A child is kept when its cumulative activation score
//! (product of shares along the chain) reaches the threshold of the current
//! hop and it lies within the time span of the origin. The result is an
//! expansion tree whose root-to-leaf chains are the transfer paths.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::txgraph::{AddressIndex, GraphError, Transaction, TxGraph, TxIdx};

pub const DAY: i64 = 24 * crate::HOUR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Backward,
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    Long,
    Short,
}

/// The four path sets of an address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PathKind {
    LtBk,
    StBk,
    LtFr,
    StFr,
}

impl PathKind {
    pub const ALL: [PathKind; 4] = [PathKind::LtBk, PathKind::StBk, PathKind::LtFr, PathKind::StFr];

    pub fn direction(self) -> Direction {
        match self {
            PathKind::LtBk | PathKind::StBk => Direction::Backward,
            PathKind::LtFr | PathKind::StFr => Direction::Forward,
        }
    }

    pub fn term(self) -> Term {
        match self {
            PathKind::LtBk | PathKind::LtFr => Term::Long,
            PathKind::StBk | PathKind::StFr => Term::Short,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PathKind::LtBk => "LT-BK",
            PathKind::StBk => "ST-BK",
            PathKind::LtFr => "LT-FR",
            PathKind::StFr => "ST-FR",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label() == s)
    }
}

impl fmt::Display for PathKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Unfloored short-term schedule `min(floor(h / 2), 0.9)`.
pub fn st_threshold_literal(hop: usize) -> f64 {
    math::floor(hop as f64 / 2.0).min(0.9)
}

/// Short-term schedule with a positive floor; the literal schedule is zero
/// for the first two hops, which would activate every pair.
pub fn st_threshold(hop: usize, floor: f64) -> f64 {
    st_threshold_literal(hop).max(floor)
}

/// Activation threshold as a function of the hop index (origin = hop 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    Constant(f64),
    ShortTerm { floor: f64 },
}

impl Threshold {
    pub fn at(&self, hop: usize) -> f64 {
        match *self {
            Threshold::Constant(t) => t,
            Threshold::ShortTerm { floor } => st_threshold(hop, floor),
        }
    }
}

/// Inputs contributing at least `theta` of the transaction's input amount.
pub fn influence_pairs(tx: &Transaction, theta: f64) -> Vec<(usize, f64)> {
    let total = tx.input_total();
    if total == 0 {
        return Vec::new();
    }
    tx.inputs
        .iter()
        .enumerate()
        .map(|(k, i)| (k, i.amount as f64 / total as f64))
        .filter(|&(_, share)| share >= theta)
        .collect()
}

/// Outputs receiving at least `theta` of the transaction's output amount.
pub fn trust_pairs(tx: &Transaction, theta: f64) -> Vec<(usize, f64)> {
    let total = tx.output_total();
    if total == 0 {
        return Vec::new();
    }
    tx.outputs
        .iter()
        .enumerate()
        .map(|(k, o)| (k, o.amount as f64 / total as f64))
        .filter(|&(_, share)| share >= theta)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceConfig {
    pub lt_theta: f64,
    pub lt_span: i64,
    pub st_floor: f64,
    pub st_span: i64,
    /// Maximum number of live hops per expansion level.
    pub branch_cap: usize,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self { lt_theta: 0.5, lt_span: 365 * DAY, st_floor: 0.1, st_span: DAY, branch_cap: 64 }
    }
}

impl TraceConfig {
    pub fn params(&self, kind: PathKind) -> TraceParams {
        match kind.term() {
            Term::Long => TraceParams {
                direction: kind.direction(),
                term: Term::Long,
                threshold: Threshold::Constant(self.lt_theta),
                span: self.lt_span,
                branch_cap: self.branch_cap,
            },
            Term::Short => TraceParams {
                direction: kind.direction(),
                term: Term::Short,
                threshold: Threshold::ShortTerm { floor: self.st_floor },
                span: self.st_span,
                branch_cap: self.branch_cap,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceParams {
    pub direction: Direction,
    pub term: Term,
    pub threshold: Threshold,
    /// Maximum distance in seconds between a hop and the origin.
    pub span: i64,
    pub branch_cap: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathNode {
    pub tx: TxIdx,
    pub parent: Option<usize>,
    pub depth: usize,
    pub score: f64,
    pub timestamp: i64,
}

/// Expansion tree of one origin transaction.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTree {
    pub direction: Direction,
    pub term: Term,
    pub nodes: Vec<PathNode>,
    /// Earliest timestamp among candidates dropped by the branch cap.
    pub truncated_from: Option<i64>,
}

/// One step of a transfer path. The origin hop has no predecessor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathHop {
    pub predecessor: Option<TxIdx>,
    pub score: f64,
    pub tx: TxIdx,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferPath {
    pub hops: Vec<PathHop>,
    pub direction: Direction,
    pub term: Term,
    pub truncated: bool,
    /// Maximum depth (in transactions) of the expansion; equals the hop
    /// count unless the expansion was truncated.
    pub height: usize,
}

impl TransferPath {
    pub fn hop_count(&self) -> usize {
        self.hops.len()
    }

    pub fn tx_ids<'g>(&self, graph: &'g TxGraph) -> Vec<&'g str> {
        self.hops.iter().map(|h| graph.tx(h.tx).id.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub address: String,
    pub kind: PathKind,
    pub paths: Vec<TransferPath>,
    pub as_of: i64,
}

impl PathTree {
    /// Expand from `origin`. With `as_of`, transactions later than it are
    /// never visited.
    pub fn trace(graph: &TxGraph, origin: TxIdx, params: &TraceParams, as_of: Option<i64>) -> PathTree {
        let origin_time = graph.tx(origin).timestamp;
        let mut nodes = alloc::vec![PathNode {
            tx: origin,
            parent: None,
            depth: 0,
            score: 1.0,
            timestamp: origin_time,
        }];
        let mut truncated_from: Option<i64> = None;
        let mut frontier: Vec<usize> = alloc::vec![0];
        let mut hop = 0usize;

        while !frontier.is_empty() {
            let theta = params.threshold.at(hop);
            let mut candidates: Vec<PathNode> = Vec::new();
            for &n in &frontier {
                let node = nodes[n];
                let (links, denom) = match params.direction {
                    Direction::Backward => (graph.sources(node.tx), graph.tx(node.tx).input_total()),
                    Direction::Forward => (graph.spenders(node.tx), graph.tx(node.tx).output_total()),
                };
                if denom == 0 {
                    continue;
                }
                for link in links {
                    let t = graph.tx(link.tx).timestamp;
                    let within = match params.direction {
                        Direction::Backward => origin_time - t <= params.span,
                        Direction::Forward => t - origin_time <= params.span,
                    };
                    if !within || as_of.is_some_and(|a| t > a) {
                        continue;
                    }
                    let prop = (link.amount as f64 / denom as f64).min(1.0);
                    let score = prop * node.score;
                    if score < theta || on_chain(&nodes, n, link.tx) {
                        continue;
                    }
                    candidates.push(PathNode { tx: link.tx, parent: Some(n), depth: node.depth + 1, score, timestamp: t });
                }
            }
            if candidates.len() > params.branch_cap {
                match params.direction {
                    Direction::Forward => candidates.sort_by(|a, b| {
                        a.timestamp.cmp(&b.timestamp).then(a.parent.cmp(&b.parent)).then(a.tx.cmp(&b.tx))
                    }),
                    Direction::Backward => candidates.sort_by(|a, b| {
                        b.timestamp.cmp(&a.timestamp).then(a.parent.cmp(&b.parent)).then(a.tx.cmp(&b.tx))
                    }),
                }
                let dropped_min = candidates[params.branch_cap..].iter().map(|c| c.timestamp).min();
                truncated_from = match (truncated_from, dropped_min) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
                candidates.truncate(params.branch_cap);
            }
            frontier.clear();
            for c in candidates {
                frontier.push(nodes.len());
                nodes.push(c);
            }
            hop += 1;
        }

        PathTree { direction: params.direction, term: params.term, nodes, truncated_from }
    }

    /// Maximal root-to-leaf chains among nodes with timestamp `<= as_of`.
    pub fn chains(&self, as_of: Option<i64>) -> Vec<TransferPath> {
        let visible = |n: &PathNode| as_of.is_none_or(|a| n.timestamp <= a);
        if self.nodes.is_empty() || !visible(&self.nodes[0]) {
            return Vec::new();
        }
        let mut has_child = alloc::vec![false; self.nodes.len()];
        let mut max_depth = 0;
        for node in self.nodes.iter().filter(|n| visible(n)) {
            if let Some(p) = node.parent {
                has_child[p] = true;
            }
            max_depth = max_depth.max(node.depth);
        }
        let truncated = match (self.truncated_from, as_of) {
            (None, _) => false,
            (Some(_), None) => true,
            (Some(t), Some(a)) => t <= a,
        };

        let mut out = Vec::new();
        for (k, node) in self.nodes.iter().enumerate() {
            if !visible(node) || has_child[k] {
                continue;
            }
            let mut hops = Vec::with_capacity(node.depth + 1);
            let mut cur = Some(k);
            while let Some(c) = cur {
                let n = &self.nodes[c];
                hops.push(PathHop { predecessor: n.parent.map(|p| self.nodes[p].tx), score: n.score, tx: n.tx });
                cur = n.parent;
            }
            hops.reverse();
            let height = if truncated { max_depth + 1 } else { hops.len() };
            out.push(TransferPath { hops, direction: self.direction, term: self.term, truncated, height });
        }
        out
    }
}

fn on_chain(nodes: &[PathNode], mut at: usize, tx: TxIdx) -> bool {
    loop {
        if nodes[at].tx == tx {
            return true;
        }
        match nodes[at].parent {
            Some(p) => at = p,
            None => return false,
        }
    }
}

fn paths_from(graph: &TxGraph, origin_id: &str, params: &TraceParams) -> Result<Vec<TransferPath>, GraphError> {
    let origin = graph.lookup(origin_id)?;
    Ok(PathTree::trace(graph, origin, params, None).chains(None))
}

/// Backward paths of `origin_id`; `params.direction` is forced to backward.
pub fn backward_paths(graph: &TxGraph, origin_id: &str, params: &TraceParams) -> Result<Vec<TransferPath>, GraphError> {
    paths_from(graph, origin_id, &TraceParams { direction: Direction::Backward, ..*params })
}

/// Forward paths of `origin_id`; `params.direction` is forced to forward.
pub fn forward_paths(graph: &TxGraph, origin_id: &str, params: &TraceParams) -> Result<Vec<TransferPath>, GraphError> {
    paths_from(graph, origin_id, &TraceParams { direction: Direction::Forward, ..*params })
}

/// The LT-BK, ST-BK, LT-FR and ST-FR path sets of `address`, using only
/// transactions with timestamp `<= as_of`. Backward sets originate from the
/// address's receive transactions, forward sets from its spend transactions.
pub fn extract_path_sets(
    graph: &TxGraph,
    index: &AddressIndex,
    address: &str,
    as_of: i64,
    cfg: &TraceConfig,
) -> [PathSet; 4] {
    PathKind::ALL.map(|kind| {
        let mut paths = Vec::new();
        if let Some(activity) = index.get(address) {
            let origins = match kind.direction() {
                Direction::Backward => &activity.receive,
                Direction::Forward => &activity.spend,
            };
            let params = cfg.params(kind);
            for &o in origins.iter().filter(|&&o| graph.tx(o).timestamp <= as_of) {
                paths.extend(PathTree::trace(graph, o, &params, Some(as_of)).chains(Some(as_of)));
            }
        }
        PathSet { address: address.into(), kind, paths, as_of }
    })
}
