//! Hierarchical survival transformer.
//!
//! Three attention encoders run over the segments seen so far: a feature
//! level over step-attention pooled hourly rows, a segment level over the
//! bridged segment vectors, and a status level over bridged status
//! embeddings. Their mean output drives a raw prediction `y` and a hazard
//! `lambda`; survival gating combines them into the running prediction.
//! Gradients are hand-written and checked against finite differences.

pub mod layers;
pub mod model;
pub mod params;
pub mod survival;
pub mod tensor;
pub mod train;

use thiserror::Error;

pub use layers::SegmentInput;
pub use model::{first_consistent, gradient_check, Hst, Sample, StreamOutput};
pub use params::{HstConfig, Params};
pub use survival::{EarlinessMode, LossConfig, LossParts, SurvivalTrace, DEFAULT_S_MIN};
pub use train::{train, Adam, OptimConfig, StepRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HstError {
    #[error("status {id} has no embedding (table has {rows} rows)")]
    Status { id: usize, rows: usize },
    #[error("input width {got} exceeds model width {max}")]
    Width { got: usize, max: usize },
    #[error("segment without rows")]
    EmptySegment,
    #[error("sample without segments")]
    NoSegments,
    #[error("no training samples")]
    NoSamples,
    #[error("non-finite loss or parameters at step {step} (parameter norm {param_norm})")]
    NonFinite { step: usize, param_norm: f64 },
}

#[cfg(test)]
mod tests;
