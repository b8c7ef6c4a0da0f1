use std::path::{Path, PathBuf};

use chainwatch_core::dtree::TrainConfig;
use chainwatch_core::hst::{EarlinessMode, LossConfig, OptimConfig, DEFAULT_S_MIN};
use chainwatch_core::pathtrace::TraceConfig;
use chainwatch_core::spm::SpmConfig;
use serde::{Deserialize, Serialize};

use crate::synth::SynthSpec;
use crate::PipelineError;

/// Which feature columns feed the segment and model stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    /// Lists learned by the selection loop.
    Selected,
    /// The 68 seed columns.
    Seed,
    /// The 16 address features only.
    AddressOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    pub mode: FeatureMode,
    pub theta: f64,
    pub sessions: usize,
    pub max_rounds: usize,
    pub validation_fraction: f64,
    pub tree: TrainConfig,
    /// Hours between the rows each address contributes to selection.
    pub sample_every: usize,
    /// Fraction of labeled addresses held out for evaluation.
    pub test_fraction: f64,
    /// Share of positives planted as spies; 0 disables reliable negatives.
    pub spy_fraction: f64,
    pub spy_tree: TrainConfig,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            mode: FeatureMode::Selected,
            theta: 0.5,
            sessions: 10,
            max_rounds: 10,
            validation_fraction: 0.2,
            tree: TrainConfig::default(),
            sample_every: 24,
            test_fraction: 0.3,
            spy_fraction: 0.15,
            spy_tree: TrainConfig { max_depth: 6, min_samples_split: 10, ..TrainConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub heads: usize,
    pub blocks: usize,
    pub positional: bool,
    pub loss: LossConfig,
    pub optim: OptimConfig,
    /// Apply `N / (2 N_class)` class weights to the loss.
    pub balance_classes: bool,
    pub s_min: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            heads: 2,
            blocks: 1,
            positional: false,
            loss: LossConfig { earliness: EarlinessMode::Shrink, ..LossConfig::default() },
            optim: OptimConfig::default(),
            balance_classes: true,
            s_min: DEFAULT_S_MIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Transaction file; defaults to `<out>/data/transactions.jsonl`.
    pub transactions: Option<PathBuf>,
    /// Label file; defaults to `<out>/data/labels.csv`.
    pub labels: Option<PathBuf>,
    pub horizon: usize,
    pub interval_hours: usize,
    pub trace: TraceConfig,
    pub select: SelectConfig,
    pub segment: SpmConfig,
    pub model: ModelConfig,
    pub synth: SynthSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            transactions: None,
            labels: None,
            horizon: 200,
            interval_hours: 1,
            trace: TraceConfig::default(),
            select: SelectConfig::default(),
            segment: SpmConfig { theta_split: 0.1, max_segments: Some(8), ..SpmConfig::default() },
            model: ModelConfig::default(),
            synth: SynthSpec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.into()));
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        if self.interval_hours != 1 {
            return bad("only a 1-hour interval is supported");
        }
        if !(0.0..1.0).contains(&self.select.test_fraction) {
            return bad("select.test_fraction must be in [0, 1)");
        }
        if self.model.heads == 0 {
            return bad("model.heads must be positive");
        }
        Ok(())
    }

    pub fn transactions_path(&self, out: &Path) -> PathBuf {
        self.transactions.clone().unwrap_or_else(|| out.join("data").join("transactions.jsonl"))
    }

    pub fn labels_path(&self, out: &Path) -> PathBuf {
        self.labels.clone().unwrap_or_else(|| out.join("data").join("labels.csv"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips() {
        let mut c = PipelineConfig::default();
        c.segment.eps = Some(0.7);
        c.select.mode = FeatureMode::AddressOnly;
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&text).unwrap(), c);
    }

    #[test]
    fn partial_documents_take_defaults() {
        let c: PipelineConfig = serde_json::from_str(r#"{"seed": 3, "model": {"heads": 4}}"#).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.model.heads, 4);
        assert_eq!(c.horizon, 200);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sed": 3}"#).is_err());
    }
}
