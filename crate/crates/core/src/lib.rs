//! Early malicious-address detection on UTXO transaction graphs.
//!
//! The crate is `no_std` and only needs an allocator. It covers the whole
//! analytical path of the detector:
//!
//! * [`txgraph`]: transaction model, address index, pro-rata transaction pairs
//! * [`pathtrace`]: backward/forward asset transfer paths (long and short term)
//! * [`featureset`]: hourly address and path features, feature schemas
//! * [`dtree`]: CART classifier with impurity-based importance
//! * [`dtsa`]: decision-tree feature selection and augmentation loop
//! * [`spm`]: segmentation, segment vectors, DBSCAN statuses
//! * [`hst`]: hierarchical survival transformer with reverse-mode gradients
//! * [`evalkit`]: metrics and spy-based reliable negatives
//! * [`intent`]: status n-gram comparison between classes
//!
//! File formats, synthetic data and the command line live in the companion
//! `chainwatch` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dtree;
pub mod dtsa;
pub mod evalkit;
pub mod featureset;
pub mod hst;
pub mod intent;
pub mod math;
pub mod pathtrace;
pub mod rng;
pub mod spm;
pub mod txgraph;

pub use txgraph::{AddressIndex, GraphError, InputRef, OutputRef, Transaction, TxGraph};

/// Seconds in one observation step.
pub const HOUR: i64 = 3600;
