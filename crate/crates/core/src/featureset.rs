//! Hourly address and path features.
//!
//! Raw layout (212 columns): the 16 address features, then for each of the
//! LT-BK, ST-BK, LT-FR, ST-FR path sets the path count followed by
//! max/min/avg/std of the 12 per-path features (49 columns per set).

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::pathtrace::{Direction, PathKind, PathTree, TraceConfig, TransferPath};
use crate::txgraph::{AddressIndex, TxGraph, TxIdx};
use crate::HOUR;

pub const ADDRESS_FEATURES: usize = 16;
pub const PATH_FEATURES: usize = 12;
pub const SET_FEATURES: usize = 1 + 4 * PATH_FEATURES;
pub const RAW_WIDTH: usize = ADDRESS_FEATURES + 4 * SET_FEATURES;
pub const DEFAULT_HORIZON: usize = 200;

pub const ADDRESS_FEATURE_NAMES: [&str; ADDRESS_FEATURES] = [
    "balance",
    "spend_count",
    "receive_count",
    "spend_receive_ratio",
    "spend_count_1h",
    "receive_count_1h",
    "spend_receive_ratio_1h",
    "max_spends_per_hour",
    "max_receives_per_hour",
    "zero_amount_spends",
    "zero_amount_receives",
    "max_spend_hour",
    "max_receive_hour",
    "max_hour_gap",
    "active_hours",
    "activity_rate",
];

pub const PATH_FEATURE_NAMES: [&str; PATH_FEATURES] = [
    "hop_count",
    "height",
    "max_input_amount",
    "min_input_amount",
    "max_output_amount",
    "min_output_amount",
    "max_input_count",
    "min_input_count",
    "max_output_count",
    "min_output_count",
    "max_score",
    "min_score",
];

pub const PATH_COUNT: &str = "path_count";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "AF")]
    Address,
    #[serde(rename = "LT-BK")]
    LtBk,
    #[serde(rename = "ST-BK")]
    StBk,
    #[serde(rename = "LT-FR")]
    LtFr,
    #[serde(rename = "ST-FR")]
    StFr,
}

impl Group {
    pub fn path(kind: PathKind) -> Self {
        match kind {
            PathKind::LtBk => Group::LtBk,
            PathKind::StBk => Group::StBk,
            PathKind::LtFr => Group::LtFr,
            PathKind::StFr => Group::StFr,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Group::Address => "AF",
            Group::LtBk => "LT-BK",
            Group::StBk => "ST-BK",
            Group::LtFr => "LT-FR",
            Group::StFr => "ST-FR",
        }
    }

    fn set_offset(self) -> Option<usize> {
        let k = match self {
            Group::Address => return None,
            Group::LtBk => 0,
            Group::StBk => 1,
            Group::LtFr => 2,
            Group::StFr => 3,
        };
        Some(ADDRESS_FEATURES + k * SET_FEATURES)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stat {
    Raw,
    Max,
    Min,
    Avg,
    Std,
}

impl Stat {
    pub const AGGREGATES: [Stat; 4] = [Stat::Max, Stat::Min, Stat::Avg, Stat::Std];

    pub fn label(self) -> &'static str {
        match self {
            Stat::Raw => "raw",
            Stat::Max => "max",
            Stat::Min => "min",
            Stat::Avg => "avg",
            Stat::Std => "std",
        }
    }
}

/// One schema column bound to a position of the raw 212-column row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    /// Base feature name (`group.feature`) shared by the statistics of one feature.
    pub base: String,
    pub group: Group,
    pub stat: Stat,
    pub raw_index: usize,
}

impl Column {
    /// Path features other than the path count can be augmented with
    /// max/min/std columns.
    pub fn augmentable(&self) -> bool {
        self.group != Group::Address && self.stat != Stat::Raw
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub id: String,
    pub columns: Vec<Column>,
}

fn fnv(s: &str, mut h: u64) -> u64 {
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn raw_columns() -> Vec<Column> {
    let mut cols = Vec::with_capacity(RAW_WIDTH);
    for (k, name) in ADDRESS_FEATURE_NAMES.iter().enumerate() {
        cols.push(Column {
            name: format!("AF.{name}"),
            base: format!("AF.{name}"),
            group: Group::Address,
            stat: Stat::Raw,
            raw_index: k,
        });
    }
    for kind in PathKind::ALL {
        let g = Group::path(kind);
        let off = g.set_offset().unwrap_or_default();
        cols.push(Column {
            name: format!("{}.{PATH_COUNT}", g.label()),
            base: format!("{}.{PATH_COUNT}", g.label()),
            group: g,
            stat: Stat::Raw,
            raw_index: off,
        });
        for (f, name) in PATH_FEATURE_NAMES.iter().enumerate() {
            for (s, stat) in Stat::AGGREGATES.iter().enumerate() {
                cols.push(Column {
                    name: format!("{}.{name}.{}", g.label(), stat.label()),
                    base: format!("{}.{name}", g.label()),
                    group: g,
                    stat: *stat,
                    raw_index: off + 1 + f * 4 + s,
                });
            }
        }
    }
    cols
}

impl FeatureSchema {
    pub fn new(columns: Vec<Column>) -> Self {
        let mut h = 0xcbf2_9ce4_8422_2325;
        for c in &columns {
            h = fnv(&c.name, h);
            h = fnv(";", h);
        }
        Self { id: format!("w{}-{h:016x}", columns.len()), columns }
    }

    /// All 212 raw columns.
    pub fn raw() -> Self {
        Self::new(raw_columns())
    }

    /// Address features plus the path count and the mean of every path
    /// feature for each path set (16 + 13 * 4 = 68 columns).
    pub fn seed() -> Self {
        Self::new(raw_columns().into_iter().filter(|c| matches!(c.stat, Stat::Raw | Stat::Avg)).collect())
    }

    /// Seed columns restricted to address features (the address-only baseline).
    pub fn address_only() -> Self {
        Self::new(raw_columns().into_iter().filter(|c| c.group == Group::Address).collect())
    }

    /// Seed columns of the given groups.
    pub fn seed_groups(groups: &[Group]) -> Self {
        Self::new(Self::seed().columns.into_iter().filter(|c| groups.contains(&c.group)).collect())
    }

    /// Every raw column whose base is listed, in raw order.
    pub fn from_raw_filter(mut keep: impl FnMut(&Column) -> bool) -> Self {
        Self::new(raw_columns().into_iter().filter(|c| keep(c)).collect())
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    /// Distinct base feature names, in column order.
    pub fn bases(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.columns.iter().filter(|c| seen.insert(c.base.as_str())).map(|c| c.base.as_str()).collect()
    }

    pub fn project(&self, raw: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|c| raw[c.raw_index]).collect()
    }

    /// Expand back to the raw layout; dropped columns become zero.
    pub fn unproject(&self, values: &[f64]) -> Vec<f64> {
        let mut raw = vec![0.0; RAW_WIDTH];
        for (c, v) in self.columns.iter().zip(values) {
            raw[c.raw_index] = *v;
        }
        raw
    }
}

/// Hourly feature matrix of one address.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub address: String,
    /// Activation timestamp (first on-chain appearance); `None` if inactive.
    pub start: Option<i64>,
    /// `horizon` rows of raw features.
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    hour: usize,
    time: i64,
    received: Option<u64>,
    spent: Option<u64>,
}

fn address_events(graph: &TxGraph, index: &AddressIndex, address: &str, start: i64) -> Vec<(TxIdx, Event)> {
    let Some(activity) = index.get(address) else {
        return Vec::new();
    };
    let mut txs: Vec<TxIdx> = activity.receive.iter().chain(&activity.spend).copied().collect();
    txs.sort_by(|a, b| graph.time_order(*a, *b));
    txs.dedup();
    txs.into_iter()
        .map(|i| {
            let tx = graph.tx(i);
            let hour = ((tx.timestamp - start).max(0) / HOUR) as usize;
            (i, Event { hour, time: tx.timestamp, received: tx.received_by(address), spent: tx.spent_by(address) })
        })
        .collect()
}

/// Last timestamp belonging to hour `t` of an address activated at `start`.
pub fn hour_cutoff(start: i64, t: usize) -> i64 {
    start + (t as i64 + 1) * HOUR - 1
}

#[derive(Debug, Clone, Default)]
struct AddressAccumulator {
    received: u128,
    spent: u128,
    spend_count: usize,
    receive_count: usize,
    zero_spends: usize,
    zero_receives: usize,
    per_hour_spends: Vec<usize>,
    per_hour_receives: Vec<usize>,
    active: BTreeSet<usize>,
}

impl AddressAccumulator {
    fn push(&mut self, e: &Event) {
        if self.per_hour_spends.len() <= e.hour {
            self.per_hour_spends.resize(e.hour + 1, 0);
            self.per_hour_receives.resize(e.hour + 1, 0);
        }
        if let Some(v) = e.received {
            self.received += u128::from(v);
            self.receive_count += 1;
            self.per_hour_receives[e.hour] += 1;
            if v == 0 {
                self.zero_receives += 1;
            }
        }
        if let Some(v) = e.spent {
            self.spent += u128::from(v);
            self.spend_count += 1;
            self.per_hour_spends[e.hour] += 1;
            if v == 0 {
                self.zero_spends += 1;
            }
        }
        self.active.insert(e.hour);
    }

    fn row(&self, t: usize) -> [f64; ADDRESS_FEATURES] {
        let ratio = |s: usize, r: usize| if r == 0 { 0.0 } else { s as f64 / r as f64 };
        let at = |v: &[usize]| v.get(t).copied().unwrap_or(0);
        // earliest hour holding the maximum count, 0 when there are none
        let argmax = |v: &[usize]| {
            let mut best = (0usize, 0usize);
            for (h, &c) in v.iter().enumerate().take(t + 1) {
                if c > best.1 {
                    best = (h, c);
                }
            }
            best
        };
        let (spend_hour, max_spends) = argmax(&self.per_hour_spends);
        let (receive_hour, max_receives) = argmax(&self.per_hour_receives);
        let balance = if self.received >= self.spent { (self.received - self.spent) as f64 } else { 0.0 };
        let spends_1h = at(&self.per_hour_spends);
        let receives_1h = at(&self.per_hour_receives);
        [
            balance,
            self.spend_count as f64,
            self.receive_count as f64,
            ratio(self.spend_count, self.receive_count),
            spends_1h as f64,
            receives_1h as f64,
            ratio(spends_1h, receives_1h),
            max_spends as f64,
            max_receives as f64,
            self.zero_spends as f64,
            self.zero_receives as f64,
            spend_hour as f64,
            receive_hour as f64,
            spend_hour as f64 - receive_hour as f64,
            self.active.len() as f64,
            self.active.len() as f64 / (t + 1) as f64,
        ]
    }
}

/// The 16 address features at hour `t` since activation.
pub fn address_features(graph: &TxGraph, index: &AddressIndex, address: &str, t: usize) -> [f64; ADDRESS_FEATURES] {
    let Some(start) = index.activation(graph, address) else {
        return [0.0; ADDRESS_FEATURES];
    };
    let mut acc = AddressAccumulator::default();
    for (_, e) in address_events(graph, index, address, start) {
        if e.time <= hour_cutoff(start, t) {
            acc.push(&e);
        }
    }
    acc.row(t)
}

/// The 12 per-path features.
pub fn path_features(graph: &TxGraph, path: &TransferPath) -> [f64; PATH_FEATURES] {
    let mut in_amt = (f64::NEG_INFINITY, f64::INFINITY);
    let mut out_amt = in_amt;
    let mut in_qty = in_amt;
    let mut out_qty = in_amt;
    let mut score = in_amt;
    let upd = |r: &mut (f64, f64), v: f64| {
        r.0 = r.0.max(v);
        r.1 = r.1.min(v);
    };
    for hop in &path.hops {
        let tx = graph.tx(hop.tx);
        upd(&mut in_amt, tx.input_total() as f64);
        upd(&mut out_amt, tx.output_total() as f64);
        upd(&mut in_qty, tx.inputs.len() as f64);
        upd(&mut out_qty, tx.outputs.len() as f64);
        upd(&mut score, hop.score);
    }
    if path.hops.is_empty() {
        return [0.0; PATH_FEATURES];
    }
    [
        path.hops.len() as f64,
        path.height as f64,
        in_amt.0,
        in_amt.1,
        out_amt.0,
        out_amt.1,
        in_qty.0,
        in_qty.1,
        out_qty.0,
        out_qty.1,
        score.0,
        score.1,
    ]
}

/// Path count followed by max/min/avg/std (population) of each per-path feature.
pub fn aggregate_path_features(per_path: &[[f64; PATH_FEATURES]]) -> [f64; SET_FEATURES] {
    let mut out = [0.0; SET_FEATURES];
    if per_path.is_empty() {
        return out;
    }
    out[0] = per_path.len() as f64;
    let mut col = Vec::with_capacity(per_path.len());
    for f in 0..PATH_FEATURES {
        col.clear();
        col.extend(per_path.iter().map(|p| p[f]));
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        let (avg, std) = math::mean_std(&col);
        let base = 1 + f * 4;
        out[base] = max;
        out[base + 1] = min;
        out[base + 2] = avg;
        out[base + 3] = std;
    }
    out
}

pub fn path_set_features(graph: &TxGraph, paths: &[TransferPath]) -> [f64; SET_FEATURES] {
    let per: Vec<[f64; PATH_FEATURES]> = paths.iter().map(|p| path_features(graph, p)).collect();
    aggregate_path_features(&per)
}

/// Concatenate address features and the four path-set blocks into a raw row.
pub fn raw_row(af: &[f64; ADDRESS_FEATURES], sets: &[[f64; SET_FEATURES]; 4]) -> Vec<f64> {
    let mut row = Vec::with_capacity(RAW_WIDTH);
    row.extend_from_slice(af);
    for s in sets {
        row.extend_from_slice(s);
    }
    row
}

struct OriginTrees {
    kind: PathKind,
    /// (origin timestamp, tree) in time order.
    trees: Vec<(i64, PathTree)>,
}

/// Full hourly raw feature matrix over `horizon` hours.
///
/// Row `t` uses only transactions with timestamp before the end of hour `t`.
/// Backward trees do not depend on the observation time; forward trees are
/// traced once to the end of the horizon and viewed at each hour, which
/// matches tracing at that hour directly.
pub fn feature_sequence(
    graph: &TxGraph,
    index: &AddressIndex,
    address: &str,
    horizon: usize,
    cfg: &TraceConfig,
) -> FeatureSequence {
    let Some(start) = index.activation(graph, address) else {
        return FeatureSequence { address: address.into(), start: None, rows: vec![vec![0.0; RAW_WIDTH]; horizon] };
    };
    let end = hour_cutoff(start, horizon.saturating_sub(1));
    let events = address_events(graph, index, address, start);
    let activity = index.get(address).cloned().unwrap_or_default();

    let sets: Vec<OriginTrees> = PathKind::ALL
        .iter()
        .map(|&kind| {
            let params = cfg.params(kind);
            let origins = match kind.direction() {
                Direction::Backward => &activity.receive,
                Direction::Forward => &activity.spend,
            };
            let trees = origins
                .iter()
                .filter(|&&o| graph.tx(o).timestamp <= end)
                .map(|&o| {
                    let as_of = (kind.direction() == Direction::Forward).then_some(end);
                    (graph.tx(o).timestamp, PathTree::trace(graph, o, &params, as_of))
                })
                .collect();
            OriginTrees { kind, trees }
        })
        .collect();

    // Hours at which some path set can change.
    let mut change_hours = BTreeSet::new();
    for s in &sets {
        for (_, tree) in &s.trees {
            for n in &tree.nodes {
                if n.timestamp <= end {
                    change_hours.insert(((n.timestamp - start).max(0) / HOUR) as usize);
                }
            }
            if let Some(t) = tree.truncated_from {
                if t <= end {
                    change_hours.insert(((t - start).max(0) / HOUR) as usize);
                }
            }
        }
    }

    let mut rows = Vec::with_capacity(horizon);
    let mut acc = AddressAccumulator::default();
    let mut next_event = 0;
    let mut set_feats = [[0.0; SET_FEATURES]; 4];
    for t in 0..horizon {
        let cutoff = hour_cutoff(start, t);
        while next_event < events.len() && events[next_event].1.time <= cutoff {
            acc.push(&events[next_event].1);
            next_event += 1;
        }
        if change_hours.contains(&t) {
            for (k, s) in sets.iter().enumerate() {
                let mut per = Vec::new();
                for (origin_time, tree) in &s.trees {
                    if *origin_time > cutoff {
                        break;
                    }
                    let view = (s.kind.direction() == Direction::Forward).then_some(cutoff);
                    per.extend(tree.chains(view).iter().map(|p| path_features(graph, p)));
                }
                set_feats[k] = aggregate_path_features(&per);
            }
        }
        rows.push(raw_row(&acc.row(t), &set_feats));
    }
    FeatureSequence { address: address.into(), start: Some(start), rows }
}
