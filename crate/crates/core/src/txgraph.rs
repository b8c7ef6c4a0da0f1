//! UTXO transaction graph: records, id lookup, address index and the
//! pro-rata input/output pairing inside a single transaction.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Position of a transaction inside a [`TxGraph`].
pub type TxIdx = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRef {
    pub source_tx: String,
    pub address: String,
    pub amount: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRef {
    pub address: String,
    pub amount: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: String,
    pub timestamp: i64,
    #[serde(default)]
    pub inputs: Vec<InputRef>,
    pub outputs: Vec<OutputRef>,
}

impl Transaction {
    /// Coinbase-style sources have no inputs and terminate backward traces.
    pub fn is_coinbase(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_total(&self) -> u64 {
        self.inputs.iter().map(|i| i.amount).sum()
    }

    pub fn output_total(&self) -> u64 {
        self.outputs.iter().map(|o| o.amount).sum()
    }

    pub fn fee(&self) -> u64 {
        self.input_total().saturating_sub(self.output_total())
    }

    /// Amount this transaction pays to `address`, or `None` if the address
    /// is not among its outputs.
    pub fn received_by(&self, address: &str) -> Option<u64> {
        let mut seen = false;
        let mut total = 0;
        for o in self.outputs.iter().filter(|o| o.address == address) {
            seen = true;
            total += o.amount;
        }
        seen.then_some(total)
    }

    /// Amount `address` contributes as an input, or `None` if absent.
    pub fn spent_by(&self, address: &str) -> Option<u64> {
        let mut seen = false;
        let mut total = 0;
        for i in self.inputs.iter().filter(|i| i.address == address) {
            seen = true;
            total += i.amount;
        }
        seen.then_some(total)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("duplicate transaction id `{0}`")]
    DuplicateId(String),
    #[error("transaction `{0}` has no outputs")]
    EmptyOutputs(String),
    #[error("transaction `{0}` spends from itself")]
    SelfReference(String),
    #[error("transaction `{tx}` (t={tx_time}) spends from later transaction `{source_tx}` (t={source_time})")]
    TemporalOrder {
        tx: String,
        tx_time: i64,
        source_tx: String,
        source_time: i64,
    },
    #[error("unknown transaction `{0}`")]
    UnknownTx(String),
}

/// Aggregated flow between two transactions of the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    pub tx: TxIdx,
    pub amount: u64,
}

/// Immutable transaction graph with O(log n) id lookup and precomputed
/// parent (source) and child (spender) links.
#[derive(Debug, Clone, Default)]
pub struct TxGraph {
    txs: Vec<Transaction>,
    by_id: BTreeMap<String, TxIdx>,
    sources: Vec<Vec<Link>>,
    spenders: Vec<Vec<Link>>,
    external: BTreeSet<String>,
}

impl TxGraph {
    /// Build a graph. Inputs pointing at ids that are not part of the set
    /// are recorded as external sources rather than rejected.
    pub fn from_transactions(txs: Vec<Transaction>) -> Result<Self, GraphError> {
        let mut by_id = BTreeMap::new();
        for (idx, tx) in txs.iter().enumerate() {
            if tx.outputs.is_empty() {
                return Err(GraphError::EmptyOutputs(tx.id.clone()));
            }
            if by_id.insert(tx.id.clone(), idx).is_some() {
                return Err(GraphError::DuplicateId(tx.id.clone()));
            }
        }

        let mut sources = Vec::with_capacity(txs.len());
        let mut spenders: Vec<Vec<Link>> = alloc::vec![Vec::new(); txs.len()];
        let mut external = BTreeSet::new();
        for (idx, tx) in txs.iter().enumerate() {
            let mut links: Vec<Link> = Vec::new();
            for input in &tx.inputs {
                match by_id.get(&input.source_tx) {
                    Some(&src) => {
                        if src == idx {
                            return Err(GraphError::SelfReference(tx.id.clone()));
                        }
                        let source = &txs[src];
                        if source.timestamp > tx.timestamp {
                            return Err(GraphError::TemporalOrder {
                                tx: tx.id.clone(),
                                tx_time: tx.timestamp,
                                source_tx: source.id.clone(),
                                source_time: source.timestamp,
                            });
                        }
                        match links.iter_mut().find(|l| l.tx == src) {
                            Some(l) => l.amount += input.amount,
                            None => links.push(Link { tx: src, amount: input.amount }),
                        }
                    }
                    None => {
                        external.insert(input.source_tx.clone());
                    }
                }
            }
            for l in &links {
                spenders[l.tx].push(Link { tx: idx, amount: l.amount });
            }
            sources.push(links);
        }
        for list in &mut spenders {
            list.sort_by(|a, b| {
                txs[a.tx]
                    .timestamp
                    .cmp(&txs[b.tx].timestamp)
                    .then_with(|| txs[a.tx].id.cmp(&txs[b.tx].id))
            });
        }

        Ok(Self { txs, by_id, sources, spenders, external })
    }

    pub fn len(&self) -> usize {
        self.txs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txs.is_empty()
    }

    pub fn tx(&self, idx: TxIdx) -> &Transaction {
        &self.txs[idx]
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.txs
    }

    pub fn index_of(&self, id: &str) -> Option<TxIdx> {
        self.by_id.get(id).copied()
    }

    pub fn lookup(&self, id: &str) -> Result<TxIdx, GraphError> {
        self.index_of(id).ok_or_else(|| GraphError::UnknownTx(id.into()))
    }

    /// In-graph transactions funding `idx`, aggregated per source, in input order.
    pub fn sources(&self, idx: TxIdx) -> &[Link] {
        &self.sources[idx]
    }

    /// Later transactions spending outputs of `idx`, ordered by (time, id).
    pub fn spenders(&self, idx: TxIdx) -> &[Link] {
        &self.spenders[idx]
    }

    /// Source transaction ids referenced by inputs but absent from the graph.
    pub fn external_sources(&self) -> &BTreeSet<String> {
        &self.external
    }

    pub fn is_external(&self, id: &str) -> bool {
        self.external.contains(id)
    }

    /// Orders transaction indices by (timestamp, id).
    pub fn time_order(&self, a: TxIdx, b: TxIdx) -> core::cmp::Ordering {
        self.txs[a]
            .timestamp
            .cmp(&self.txs[b].timestamp)
            .then_with(|| self.txs[a].id.cmp(&self.txs[b].id))
    }
}

/// Receive (`T_in`) and spend (`T_out`) transaction lists of one address.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AddressActivity {
    pub receive: Vec<TxIdx>,
    pub spend: Vec<TxIdx>,
}

#[derive(Debug, Clone, Default)]
pub struct AddressIndex {
    map: BTreeMap<String, AddressActivity>,
}

impl AddressIndex {
    /// Index raw appearances: every output address gets a receive entry and
    /// every input address a spend entry, sorted by (timestamp, tx id).
    pub fn build(graph: &TxGraph) -> Self {
        let mut map: BTreeMap<String, AddressActivity> = BTreeMap::new();
        for (idx, tx) in graph.transactions().iter().enumerate() {
            for o in &tx.outputs {
                let entry = map.entry(o.address.clone()).or_default();
                if entry.receive.last() != Some(&idx) {
                    entry.receive.push(idx);
                }
            }
            for i in &tx.inputs {
                let entry = map.entry(i.address.clone()).or_default();
                if entry.spend.last() != Some(&idx) {
                    entry.spend.push(idx);
                }
            }
        }
        for activity in map.values_mut() {
            activity.receive.sort_by(|a, b| graph.time_order(*a, *b));
            activity.receive.dedup();
            activity.spend.sort_by(|a, b| graph.time_order(*a, *b));
            activity.spend.dedup();
        }
        Self { map }
    }

    pub fn get(&self, address: &str) -> Option<&AddressActivity> {
        self.map.get(address)
    }

    pub fn addresses(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// First on-chain appearance of the address.
    pub fn activation(&self, graph: &TxGraph, address: &str) -> Option<i64> {
        let a = self.map.get(address)?;
        let r = a.receive.first().map(|&i| graph.tx(i).timestamp);
        let s = a.spend.first().map(|&i| graph.tx(i).timestamp);
        match (r, s) {
            (Some(r), Some(s)) => Some(r.min(s)),
            (r, s) => r.or(s),
        }
    }

    /// Number of (receive, spend) transactions with timestamp `<= t`.
    pub fn counts_up_to(&self, graph: &TxGraph, address: &str, t: i64) -> (usize, usize) {
        match self.map.get(address) {
            None => (0, 0),
            Some(a) => {
                let upto = |list: &[TxIdx]| list.partition_point(|&i| graph.tx(i).timestamp <= t);
                (upto(&a.receive), upto(&a.spend))
            }
        }
    }
}

/// One (input, output) edge of the complete bipartite graph of a transaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransactionPair {
    pub input_index: usize,
    pub output_index: usize,
    pub amount: u64,
    pub input_share: f64,
    pub output_share: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pairs {
    pub pairs: Vec<TransactionPair>,
    /// Set when either side totals zero; `pairs` is then empty.
    pub degenerate: bool,
}

/// Split `total` into integer parts proportional to `weights` using the
/// largest-remainder rule (ties to the lower index). Parts sum to `total`.
pub fn largest_remainder(total: u64, weights: &[u64]) -> Vec<u64> {
    let wsum: u128 = weights.iter().map(|&w| u128::from(w)).sum();
    if wsum == 0 {
        return alloc::vec![0; weights.len()];
    }
    let mut parts = Vec::with_capacity(weights.len());
    let mut rems = Vec::with_capacity(weights.len());
    let mut assigned: u128 = 0;
    for (k, &w) in weights.iter().enumerate() {
        let num = u128::from(total) * u128::from(w);
        let q = num / wsum;
        assigned += q;
        parts.push(q as u64);
        rems.push((num % wsum, k));
    }
    let mut left = (u128::from(total) - assigned) as usize;
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, k) in &rems {
        if left == 0 {
            break;
        }
        parts[k] += 1;
        left -= 1;
    }
    parts
}

/// All `|I| x |J|` pairs of a transaction under pro-rata splitting.
///
/// The transferable amount `min(sum inputs, sum outputs)` is first split
/// across inputs and then each input's quota across outputs, both with the
/// largest-remainder rule, so the pair amounts add up exactly.
pub fn transaction_pairs(tx: &Transaction) -> Pairs {
    let in_total = tx.input_total();
    let out_total = tx.output_total();
    if in_total == 0 || out_total == 0 {
        return Pairs { pairs: Vec::new(), degenerate: true };
    }
    let transferable = in_total.min(out_total);
    let in_amounts: Vec<u64> = tx.inputs.iter().map(|i| i.amount).collect();
    let out_amounts: Vec<u64> = tx.outputs.iter().map(|o| o.amount).collect();
    let quotas = largest_remainder(transferable, &in_amounts);

    let mut pairs = Vec::with_capacity(in_amounts.len() * out_amounts.len());
    for (i, &quota) in quotas.iter().enumerate() {
        let split = largest_remainder(quota, &out_amounts);
        for (j, &amount) in split.iter().enumerate() {
            pairs.push(TransactionPair {
                input_index: i,
                output_index: j,
                amount,
                input_share: in_amounts[i] as f64 / in_total as f64,
                output_share: out_amounts[j] as f64 / out_total as f64,
            });
        }
    }
    Pairs { pairs, degenerate: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn tx(id: &str, t: i64, inputs: &[(&str, &str, u64)], outputs: &[(&str, u64)]) -> Transaction {
        Transaction {
            id: id.into(),
            timestamp: t,
            inputs: inputs
                .iter()
                .map(|(s, a, v)| InputRef { source_tx: s.to_string(), address: a.to_string(), amount: *v })
                .collect(),
            outputs: outputs.iter().map(|(a, v)| OutputRef { address: a.to_string(), amount: *v }).collect(),
        }
    }

    #[test]
    fn empty_graph() {
        let g = TxGraph::from_transactions(Vec::new()).unwrap();
        assert!(g.is_empty());
        assert!(AddressIndex::build(&g).is_empty());
    }

    #[test]
    fn chain_resolves_sources() {
        let g = TxGraph::from_transactions(vec![
            tx("A", 0, &[], &[("x", 100)]),
            tx("B", 10, &[("A", "x", 100)], &[("y", 100)]),
            tx("C", 20, &[("B", "y", 100)], &[("z", 90)]),
        ])
        .unwrap();
        let c = g.lookup("C").unwrap();
        let b = g.lookup("B").unwrap();
        assert_eq!(g.sources(c), &[Link { tx: b, amount: 100 }]);
        assert_eq!(g.spenders(b), &[Link { tx: c, amount: 100 }]);
        assert_eq!(g.tx(c).fee(), 10);
        assert!(g.tx(g.lookup("A").unwrap()).is_coinbase());
    }

    #[test]
    fn dangling_inputs_are_external() {
        let g = TxGraph::from_transactions(vec![tx("B", 10, &[("ghost", "x", 5)], &[("y", 5)])]).unwrap();
        assert!(g.is_external("ghost"));
        assert!(g.sources(0).is_empty());
    }

    #[test]
    fn rejects_duplicates_and_time_travel() {
        let dup = TxGraph::from_transactions(vec![tx("A", 0, &[], &[("x", 1)]), tx("A", 1, &[], &[("x", 1)])]);
        assert_eq!(dup.unwrap_err(), GraphError::DuplicateId("A".into()));
        let back = TxGraph::from_transactions(vec![
            tx("A", 50, &[], &[("x", 1)]),
            tx("B", 10, &[("A", "x", 1)], &[("y", 1)]),
        ]);
        assert!(matches!(back.unwrap_err(), GraphError::TemporalOrder { .. }));
        let no_out = TxGraph::from_transactions(vec![tx("A", 0, &[], &[])]);
        assert_eq!(no_out.unwrap_err(), GraphError::EmptyOutputs("A".into()));
    }

    #[test]
    fn address_index_receive_then_spend() {
        let g = TxGraph::from_transactions(vec![
            tx("tx1", 10, &[], &[("X", 100)]),
            tx("tx2", 20, &[("tx1", "X", 100)], &[("Y", 100)]),
        ])
        .unwrap();
        let idx = AddressIndex::build(&g);
        let x = idx.get("X").unwrap();
        assert_eq!(x.receive, vec![0]);
        assert_eq!(x.spend, vec![1]);
        let y = idx.get("Y").unwrap();
        assert_eq!((y.receive.len(), y.spend.len()), (1, 0));
        assert_eq!(idx.activation(&g, "X"), Some(10));
    }

    #[test]
    fn equal_timestamps_order_by_id() {
        let g = TxGraph::from_transactions(vec![
            tx("b", 5, &[], &[("X", 1)]),
            tx("a", 5, &[], &[("X", 1)]),
        ])
        .unwrap();
        let idx = AddressIndex::build(&g);
        let ids: Vec<&str> = idx.get("X").unwrap().receive.iter().map(|&i| g.tx(i).id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b"]);
    }

    #[test]
    fn single_pair() {
        let p = transaction_pairs(&tx("t", 0, &[("s", "a", 100)], &[("b", 100)]));
        assert_eq!(p.pairs.len(), 1);
        assert_eq!(p.pairs[0].amount, 100);
        assert_eq!((p.pairs[0].input_share, p.pairs[0].output_share), (1.0, 1.0));
    }

    #[test]
    fn figure_shares() {
        let p = transaction_pairs(&tx("t", 0, &[("s1", "a", 5), ("s2", "b", 70), ("s3", "c", 25)], &[("o", 100)]));
        let shares: Vec<f64> = p.pairs.iter().map(|p| p.input_share).collect();
        assert_eq!(shares, vec![0.05, 0.70, 0.25]);
        let p = transaction_pairs(&tx("t", 0, &[("s", "a", 100)], &[("x", 20), ("y", 70), ("z", 10)]));
        let shares: Vec<f64> = p.pairs.iter().map(|p| p.output_share).collect();
        assert_eq!(shares, vec![0.20, 0.70, 0.10]);
    }

    #[test]
    fn zero_totals_are_degenerate() {
        let p = transaction_pairs(&tx("t", 0, &[("s", "a", 0)], &[("x", 0)]));
        assert!(p.degenerate && p.pairs.is_empty());
        let coinbase = transaction_pairs(&tx("t", 0, &[], &[("x", 10)]));
        assert!(coinbase.degenerate);
    }

    fn arb_tx() -> impl Strategy<Value = Transaction> {
        (
            proptest::collection::vec(0u64..1_000_000, 1..6),
            proptest::collection::vec(0u64..1_000_000, 1..6),
        )
            .prop_map(|(ins, outs)| Transaction {
                id: "t".into(),
                timestamp: 0,
                inputs: ins
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| InputRef { source_tx: alloc::format!("s{k}"), address: "a".into(), amount: v })
                    .collect(),
                outputs: outs.iter().map(|&v| OutputRef { address: "o".into(), amount: v }).collect(),
            })
    }

    proptest! {
        #[test]
        fn pro_rata_conservation(t in arb_tx()) {
            let p = transaction_pairs(&t);
            let (i, o) = (t.input_total(), t.output_total());
            if i == 0 || o == 0 {
                prop_assert!(p.degenerate);
            } else {
                prop_assert_eq!(p.pairs.len(), t.inputs.len() * t.outputs.len());
                let total: u64 = p.pairs.iter().map(|p| p.amount).sum();
                prop_assert_eq!(total, i.min(o));
                let in_share: f64 = p.pairs.iter().filter(|p| p.output_index == 0).map(|p| p.input_share).sum();
                prop_assert!((in_share - 1.0).abs() < 1e-9);
                let out_share: f64 = p.pairs.iter().filter(|p| p.input_index == 0).map(|p| p.output_share).sum();
                prop_assert!((out_share - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn largest_remainder_is_exact(total in 0u64..10_000_000, w in proptest::collection::vec(0u64..1000, 1..8)) {
            let parts = largest_remainder(total, &w);
            if w.iter().any(|&x| x > 0) {
                prop_assert_eq!(parts.iter().sum::<u64>(), total);
            }
        }
    }
}
