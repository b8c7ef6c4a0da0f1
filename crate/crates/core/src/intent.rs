//! Status n-gram comparison between malicious and regular intention
//! sequences.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub const DEFAULT_TOP: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramDiff {
    pub gram: Vec<usize>,
    pub malicious: f64,
    pub regular: f64,
    /// `malicious - regular`
    pub diff: f64,
}

/// Relative frequency of every n-gram across the sequences: count divided by
/// the total number of n-grams of that length.
pub fn ngram_frequencies(sequences: &[&[usize]], n: usize) -> BTreeMap<Vec<usize>, f64> {
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut total = 0usize;
    if n > 0 {
        for s in sequences {
            for w in s.windows(n) {
                *counts.entry(w.to_vec()).or_default() += 1;
                total += 1;
            }
        }
    }
    counts.into_iter().map(|(k, c)| (k, c as f64 / total as f64)).collect()
}

/// Frequency difference per n-gram, sorted by descending `|diff|`, then by
/// gram; at most `top` entries.
pub fn ngram_diffs(malicious: &[&[usize]], regular: &[&[usize]], n: usize, top: usize) -> Vec<NgramDiff> {
    let fm = ngram_frequencies(malicious, n);
    let fr = ngram_frequencies(regular, n);
    let mut keys: Vec<&Vec<usize>> = fm.keys().chain(fr.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut out: Vec<NgramDiff> = keys
        .into_iter()
        .map(|k| {
            let m = fm.get(k).copied().unwrap_or(0.0);
            let r = fr.get(k).copied().unwrap_or(0.0);
            NgramDiff { gram: k.clone(), malicious: m, regular: r, diff: m - r }
        })
        .collect();
    out.sort_by(|a, b| b.diff.abs().total_cmp(&a.diff.abs()).then_with(|| a.gram.cmp(&b.gram)));
    out.truncate(top);
    out
}

/// Diff tables for n = 1, 2, 3.
pub fn intent_tables(malicious: &[&[usize]], regular: &[&[usize]], top: usize) -> Vec<(usize, Vec<NgramDiff>)> {
    (1..=3).map(|n| (n, ngram_diffs(malicious, regular, n, top))).collect()
}
