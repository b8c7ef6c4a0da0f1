//! Stage runner. Every stage reads declared artifacts under the output
//! directory, writes its own directory, and records a manifest with input
//! and output hashes, the configuration and the seed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chainwatch_core::dtree::{balanced_weights, DecisionTree};
use chainwatch_core::dtsa::{self, apply_lists, run_dtsa, DtsaConfig};
use chainwatch_core::evalkit::{self, decide, select_reliable_negatives, SpyRun, Summary};
use chainwatch_core::featureset::{feature_sequence, hour_cutoff, FeatureSchema};
use chainwatch_core::hst::{self, Hst, HstConfig, Sample, SegmentInput};
use chainwatch_core::intent;
use chainwatch_core::math;
use chainwatch_core::pathtrace::extract_path_sets;
use chainwatch_core::rng::derive_seed;
use chainwatch_core::spm::{change_profile, fit_catalog, split_points_capped, NormStats, StatusCatalog};
use chainwatch_core::txgraph::{AddressIndex, TxGraph};
use serde::{Deserialize, Serialize};

use crate::config::{FeatureMode, PipelineConfig};
use crate::formats::{self, num, Checkpoint, FeatureTable, Label, SchemaManifest};
use crate::{synth, PipelineError};

/// Stage names in execution order.
pub const STAGES: [&str; 9] = ["ingest", "paths", "features", "select", "segment", "train", "predict", "eval", "report"];

/// The artifact whose presence marks a stage as done.
fn marker(stage: &str) -> &'static str {
    match stage {
        "ingest" => "ingest/addresses.csv",
        "paths" => "paths/paths.csv",
        "features" => "features/raw.csv",
        "select" => "select/split.csv",
        "segment" => "segment/catalog.json",
        "train" => "train/checkpoint.json",
        "predict" => "predict/addresses.csv",
        "eval" => "eval/summary.json",
        _ => "report/report.txt",
    }
}

/// Upstream stages each stage needs, in order.
fn upstream(stage: &str) -> &'static [&'static str] {
    match stage {
        "paths" | "features" => &["ingest"],
        "select" => &["ingest", "features"],
        "segment" => &["ingest", "features", "select"],
        "train" => &["ingest", "features", "select", "segment"],
        "predict" => &["ingest", "features", "select", "segment", "train"],
        "eval" | "report" => &["ingest", "features", "select", "segment", "train", "predict"],
        _ => &[],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub config: PipelineConfig,
}

/// Role of an address after the select stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitEntry {
    pub address: String,
    pub malicious: bool,
    pub test: bool,
    /// `labeled` or `reliable-negative`.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogFile {
    pub schema_id: String,
    /// z-score of signed-log features.
    pub transform: NormStats,
    pub catalog: StatusCatalog,
}

/// Per-address prediction summary.
#[derive(Debug, Clone, PartialEq)]
pub struct AddressPrediction {
    pub address: String,
    pub malicious: bool,
    pub t_die: Option<usize>,
    pub t_fc: Option<usize>,
    pub statuses: Vec<usize>,
    pub intention: Vec<usize>,
    pub hourly: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub addresses: usize,
    pub malicious: usize,
    pub hours: usize,
    pub summary: Summary,
    /// Mean count of hard-decision changes between consecutive hours.
    pub mean_flips: f64,
    /// Hour-by-hour decision at the last hour.
    pub final_metrics: evalkit::Metrics,
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub out: PathBuf,
}

fn join_ids(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
}

fn parse_ids(s: &str) -> Vec<usize> {
    s.split('-').filter(|p| !p.is_empty()).filter_map(|p| p.parse().ok()).collect()
}

fn opt(v: Option<usize>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

impl Pipeline {
    pub fn new(config: PipelineConfig, out: impl Into<PathBuf>) -> Self {
        Self { config, out: out.into() }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn key(&self, p: &Path) -> String {
        p.strip_prefix(&self.out).unwrap_or(p).to_string_lossy().replace('\\', "/")
    }

    fn require(&self, stage: &str) -> Result<(), PipelineError> {
        for up in upstream(stage) {
            let p = self.path(marker(up));
            if !p.exists() {
                return Err(PipelineError::MissingStage { stage: up.to_string(), artifact: p });
            }
        }
        Ok(())
    }

    fn manifest(&self, stage: &str, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<(), PipelineError> {
        let hash = |ps: &[PathBuf]| -> Result<BTreeMap<String, String>, PipelineError> {
            ps.iter().map(|p| Ok((self.key(p), formats::sha256_file(p)?))).collect()
        };
        let m = Manifest {
            stage: stage.into(),
            seed: self.config.seed,
            inputs: hash(inputs)?,
            outputs: hash(outputs)?,
            config: self.config.clone(),
        };
        formats::write_json(&self.path(&format!("{stage}/manifest.json")), &m)
    }

    fn reset(&self, stage: &str) -> Result<(), PipelineError> {
        let dir = self.path(stage);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))
    }

    /// Generate the synthetic dataset into `out/data`; `addresses` rescales
    /// the configured archetype counts.
    pub fn synth(&self, addresses: Option<usize>) -> Result<synth::SynthData, PipelineError> {
        self.config.validate()?;
        self.reset("data")?;
        let spec = addresses.map_or_else(|| self.config.synth.clone(), |n| self.config.synth.scaled(n));
        let data = synth::generate(&spec, self.config.seed);
        let tp = self.path("data/transactions.jsonl");
        formats::write_transactions(&tp, &data.transactions)?;
        let lp = self.path("data/labels.csv");
        formats::write_labels(&lp, &data.labels)?;
        let ap = self.path("data/archetypes.csv");
        formats::write_csv(
            &ap,
            &["address", "archetype", "activation", "bulk_hour"],
            data.targets.iter().map(|t| {
                [
                    t.address.clone(),
                    t.archetype.name().to_string(),
                    t.activation.to_string(),
                    t.bulk_hour.map_or(String::new(), |h| h.to_string()),
                ]
            }),
        )?;
        self.manifest("data", &[], &[tp, lp, ap])?;
        Ok(data)
    }

    /// Run one stage by name, or every stage for `all`.
    pub fn run(&self, stage: &str) -> Result<(), PipelineError> {
        self.config.validate()?;
        match stage {
            "all" => STAGES.iter().try_for_each(|s| self.run(s)),
            "ingest" => self.ingest(),
            "paths" => self.paths(),
            "features" => self.features(),
            "select" => self.select(),
            "segment" => self.segment(),
            "train" => self.train(),
            "predict" => self.predict(),
            "eval" => self.eval(),
            "report" => self.report(),
            other => Err(PipelineError::Config(format!("unknown stage `{other}`"))),
        }
    }

    fn graph(&self) -> Result<(TxGraph, AddressIndex, PathBuf), PipelineError> {
        let p = self.config.transactions_path(&self.out);
        let txs = formats::read_transactions(&p)?;
        let g = TxGraph::from_transactions(txs).map_err(|e| PipelineError::Data(e.to_string()))?;
        let idx = AddressIndex::build(&g);
        Ok((g, idx, p))
    }

    /// `(address, label, activation)` from the ingest stage.
    fn addresses(&self) -> Result<Vec<(String, Label, Option<i64>)>, PipelineError> {
        let p = self.path(marker("ingest"));
        let (_, rows) = formats::read_csv(&p)?;
        rows.into_iter()
            .enumerate()
            .map(|(i, r)| {
                let bad = |m: String| PipelineError::Parse { path: p.clone(), line: i + 2, message: m };
                let label = r.get(1).ok_or_else(|| bad("missing label".into()))?.parse().map_err(bad)?;
                let act = match r.get(2).map(String::as_str) {
                    Some("") | None => None,
                    Some(s) => Some(s.parse().map_err(|_| PipelineError::Parse { path: p.clone(), line: i + 2, message: "bad activation".into() })?),
                };
                Ok((r[0].clone(), label, act))
            })
            .collect()
    }

    fn ingest(&self) -> Result<(), PipelineError> {
        self.reset("ingest")?;
        let (g, idx, txp) = self.graph()?;
        let lp = self.config.labels_path(&self.out);
        let mut labels = formats::read_labels(&lp)?;
        labels.sort();
        let mut seen = BTreeSet::new();
        for (a, _) in &labels {
            if !seen.insert(a.clone()) {
                return Err(PipelineError::Data(format!("address `{a}` labeled twice")));
            }
        }
        let rows: Vec<Vec<String>> = labels
            .iter()
            .map(|(a, l)| {
                let act = idx.activation(&g, a);
                let (r, s) = idx.get(a).map_or((0, 0), |x| (x.receive.len(), x.spend.len()));
                vec![a.clone(), l.to_string(), act.map_or(String::new(), |v| v.to_string()), r.to_string(), s.to_string()]
            })
            .collect();
        let out = self.path(marker("ingest"));
        formats::write_csv(&out, &["address", "label", "activation", "receives", "spends"], rows)?;
        let count = |l: Label| labels.iter().filter(|x| x.1 == l).count();
        let summary = serde_json::json!({
            "transactions": g.len(),
            "external_sources": g.external_sources().len(),
            "addresses": labels.len(),
            "malicious": count(Label::Malicious),
            "regular": count(Label::Regular),
            "unlabeled": count(Label::Unlabeled),
        });
        let sp = self.path("ingest/summary.json");
        formats::write_json(&sp, &summary)?;
        self.manifest("ingest", &[txp, lp], &[out, sp])
    }

    fn paths(&self) -> Result<(), PipelineError> {
        self.require("paths")?;
        self.reset("paths")?;
        let (g, idx, txp) = self.graph()?;
        let mut rows = Vec::new();
        for (addr, label, act) in self.addresses()? {
            let (Some(start), false) = (act, label == Label::Unlabeled) else { continue };
            let as_of = hour_cutoff(start, self.config.horizon - 1);
            for set in extract_path_sets(&g, &idx, &addr, as_of, &self.config.trace) {
                for (pi, path) in set.paths.iter().enumerate() {
                    for (hi, hop) in path.hops.iter().enumerate() {
                        rows.push(vec![
                            addr.clone(),
                            set.kind.label().to_string(),
                            pi.to_string(),
                            hi.to_string(),
                            g.tx(hop.tx).id.clone(),
                            num(hop.score),
                            path.truncated.to_string(),
                        ]);
                    }
                }
            }
        }
        let out = self.path(marker("paths"));
        formats::write_csv(&out, &["address", "kind", "path_index", "hop_index", "tx_id", "score", "truncated"], rows)?;
        self.manifest("paths", &[txp, self.path(marker("ingest"))], &[out])
    }

    fn features(&self) -> Result<(), PipelineError> {
        self.require("features")?;
        self.reset("features")?;
        let (g, idx, txp) = self.graph()?;
        let mut table = FeatureTable::new();
        for (addr, _, act) in self.addresses()? {
            if act.is_none() {
                continue;
            }
            let seq = feature_sequence(&g, &idx, &addr, self.config.horizon, &self.config.trace);
            table.insert(addr, seq.rows);
        }
        let out = self.path(marker("features"));
        let raw = FeatureSchema::raw();
        formats::write_features(&out, &raw, &table)?;
        let sp = self.path("features/schema.json");
        formats::write_json(&sp, &SchemaManifest::of(&raw))?;
        self.manifest("features", &[txp, self.path(marker("ingest"))], &[out, sp])
    }

    fn raw_features(&self) -> Result<FeatureTable, PipelineError> {
        let t = formats::read_features(&self.path(marker("features")), FeatureSchema::raw().width())?;
        for (a, rows) in &t {
            if rows.len() != self.config.horizon {
                return Err(PipelineError::Data(format!("{a}: {} feature rows, expected {}", rows.len(), self.config.horizon)));
            }
        }
        Ok(t)
    }

    fn select(&self) -> Result<(), PipelineError> {
        self.require("select")?;
        self.reset("select")?;
        let cfg = &self.config.select;
        let h = self.config.horizon;
        let table = self.raw_features()?;
        let addrs: Vec<(String, Label)> =
            self.addresses()?.into_iter().filter(|(a, _, _)| table.contains_key(a)).map(|(a, l, _)| (a, l)).collect();
        let labeled: Vec<&(String, Label)> = addrs.iter().filter(|x| x.1 != Label::Unlabeled).collect();
        let y: Vec<usize> = labeled.iter().map(|x| usize::from(x.1 == Label::Malicious)).collect();
        if !y.contains(&1) || !y.contains(&0) {
            return Err(PipelineError::Data("need both malicious and regular labels".into()));
        }
        let (train_idx, test_idx) = dtsa::stratified_split(&y, cfg.test_fraction, derive_seed(self.config.seed, "holdout"));
        let mut split: Vec<SplitEntry> = Vec::new();
        for (i, test) in train_idx.iter().map(|&i| (i, false)).chain(test_idx.iter().map(|&i| (i, true))) {
            split.push(SplitEntry { address: labeled[i].0.clone(), malicious: y[i] == 1, test, source: "labeled".into() });
        }

        // reliable negatives from the unlabeled pool
        let seed_schema = FeatureSchema::seed();
        let last = |a: &str| seed_schema.project(&table[a][h - 1]);
        let unlabeled: Vec<&str> = addrs.iter().filter(|x| x.1 == Label::Unlabeled).map(|x| x.0.as_str()).collect();
        let positive_names: Vec<String> =
            split.iter().filter(|e| e.malicious && !e.test).map(|e| e.address.clone()).collect();
        let positives: Vec<&str> = positive_names.iter().map(String::as_str).collect();
        let mut spy_doc = serde_json::Value::Null;
        if cfg.spy_fraction > 0.0 && !unlabeled.is_empty() {
            let items: Vec<Vec<f64>> = positives.iter().chain(&unlabeled).map(|a| last(a)).collect();
            let pos_ids: Vec<usize> = (0..positives.len()).collect();
            let unl_ids: Vec<usize> = (positives.len()..items.len()).collect();
            let mut fit_error = None;
            let run = select_reliable_negatives(
                &pos_ids,
                &unl_ids,
                cfg.spy_fraction,
                derive_seed(self.config.seed, "spy"),
                |train_pos, pool| {
                    let mut x: Vec<Vec<f64>> = train_pos.iter().map(|&i| items[i].clone()).collect();
                    x.extend(pool.iter().map(|&i| items[i].clone()));
                    let yy: Vec<usize> = (0..x.len()).map(|k| usize::from(k < train_pos.len())).collect();
                    let mut tc = cfg.spy_tree.clone();
                    tc.class_weights = balanced_weights(&yy, 2);
                    match DecisionTree::fit(&x, &yy, &tc) {
                        Ok(t) => pool.iter().map(|&i| t.predict(&items[i]).unwrap_or(1.0)).collect(),
                        Err(e) => {
                            fit_error = Some(e.to_string());
                            Vec::new()
                        }
                    }
                },
            );
            match run {
                Ok(run) => {
                    for &u in &run.reliable_negatives {
                        split.push(SplitEntry {
                            address: unlabeled[u - positives.len()].to_string(),
                            malicious: false,
                            test: false,
                            source: "reliable-negative".into(),
                        });
                    }
                    spy_doc = spy_json(&run, &positives, &unlabeled);
                }
                Err(e) => {
                    spy_doc = serde_json::json!({ "skipped": fit_error.unwrap_or_else(|| e.to_string()) });
                }
            }
        }
        split.sort_by(|a, b| a.address.cmp(&b.address));

        let mut outputs = Vec::new();
        let schema = match cfg.mode {
            FeatureMode::Seed => FeatureSchema::seed(),
            FeatureMode::AddressOnly => FeatureSchema::address_only(),
            FeatureMode::Selected => {
                let mut hours: Vec<usize> = vec![0];
                let step = cfg.sample_every.max(1);
                hours.extend((1..=h / step).map(|k| k * step - 1).filter(|&t| t > 0 && t < h));
                let (mut x, mut yy) = (Vec::new(), Vec::new());
                for e in split.iter().filter(|e| !e.test) {
                    for &t in &hours {
                        x.push(table[&e.address][t].clone());
                        yy.push(usize::from(e.malicious));
                    }
                }
                let dcfg = DtsaConfig {
                    theta: cfg.theta,
                    sessions: cfg.sessions,
                    max_rounds: cfg.max_rounds,
                    validation_fraction: cfg.validation_fraction,
                    tree: cfg.tree.clone(),
                    seed: derive_seed(self.config.seed, "dtsa"),
                };
                let outcome = run_dtsa(&x, &yy, &dcfg).map_err(|e| PipelineError::Data(e.to_string()))?;
                let rp = self.path("select/dtsa.json");
                formats::write_json(&rp, &outcome.report)?;
                let lp = self.path("select/lists.json");
                formats::write_json(&lp, &outcome.lists)?;
                outputs.extend([rp, lp]);
                apply_lists(&outcome.lists)
            }
        };
        if schema.width() == 0 {
            return Err(PipelineError::Data("feature selection removed every column".into()));
        }
        let sp = self.path("select/split.csv");
        formats::write_csv(
            &sp,
            &["address", "label", "role", "source"],
            split.iter().map(|e| {
                [
                    e.address.clone(),
                    if e.malicious { "malicious" } else { "regular" }.to_string(),
                    if e.test { "test" } else { "train" }.to_string(),
                    e.source.clone(),
                ]
            }),
        )?;
        let schp = self.path("select/schema.json");
        formats::write_json(&schp, &SchemaManifest::of(&schema))?;
        let spyp = self.path("select/spy.json");
        formats::write_json(&spyp, &spy_doc)?;
        outputs.extend([sp, schp, spyp]);
        self.manifest("select", &[self.path(marker("ingest")), self.path(marker("features"))], &outputs)
    }

    fn split(&self) -> Result<Vec<SplitEntry>, PipelineError> {
        let (_, rows) = formats::read_csv(&self.path(marker("select")))?;
        Ok(rows
            .into_iter()
            .map(|r| SplitEntry { address: r[0].clone(), malicious: r[1] == "malicious", test: r[2] == "test", source: r[3].clone() })
            .collect())
    }

    fn schema(&self) -> Result<FeatureSchema, PipelineError> {
        formats::read_json::<SchemaManifest>(&self.path("select/schema.json"))?.schema()
    }

    fn segment(&self) -> Result<(), PipelineError> {
        self.require("segment")?;
        self.reset("segment")?;
        let table = self.raw_features()?;
        let schema = self.schema()?;
        let train: Vec<SplitEntry> = self.split()?.into_iter().filter(|e| !e.test).collect();
        let projected: Vec<Vec<Vec<f64>>> =
            train.iter().map(|e| table[&e.address].iter().map(|r| schema.project(r)).collect()).collect();
        let logged: Vec<Vec<f64>> = projected.iter().flatten().map(|r| signed_log(r)).collect();
        let transform = NormStats::fit(&logged);
        let model_rows: Vec<Vec<Vec<f64>>> =
            projected.iter().map(|s| s.iter().map(|r| transform.apply(&signed_log(r))).collect()).collect();
        let spm_err = |e: chainwatch_core::spm::SpmError| PipelineError::Data(e.to_string());
        let profile = change_profile(&unit_log(&projected)).map_err(spm_err)?;
        let seg = split_points_capped(&profile, self.config.segment.theta_split, self.config.segment.min_len, self.config.segment.max_segments).map_err(spm_err)?;
        let labels: Vec<usize> = train.iter().map(|e| usize::from(e.malicious)).collect();
        let catalog = fit_catalog(seg, &model_rows, &labels, &self.config.segment).map_err(spm_err)?;
        let file = CatalogFile { schema_id: schema.id.clone(), transform, catalog };
        let cp = self.path(marker("segment"));
        formats::write_json(&cp, &file)?;
        let space = ModelSpace { schema, file };
        let mut rows = Vec::new();
        for (e, seq) in train.iter().zip(&model_rows) {
            for (j, s) in space.statuses(seq)?.into_iter().enumerate() {
                rows.push([e.address.clone(), j.to_string(), s.to_string()]);
            }
        }
        let stp = self.path("segment/statuses.csv");
        formats::write_csv(&stp, &["address", "segment", "status"], rows)?;
        let pp = self.path("segment/profile.csv");
        formats::write_csv(
            &pp,
            &["hour", "change"],
            profile.ratios.iter().enumerate().map(|(t, c)| [t.to_string(), num(*c)]),
        )?;
        self.manifest(
            "segment",
            &[self.path(marker("features")), self.path(marker("select")), self.path("select/schema.json")],
            &[cp, stp, pp],
        )
    }

    fn space(&self) -> Result<ModelSpace, PipelineError> {
        let schema = self.schema()?;
        let file: CatalogFile = formats::read_json(&self.path(marker("segment")))?;
        if file.schema_id != schema.id {
            return Err(PipelineError::Data("catalog was built for another schema; rerun segment".into()));
        }
        Ok(ModelSpace { schema, file })
    }

    fn train(&self) -> Result<(), PipelineError> {
        self.require("train")?;
        self.reset("train")?;
        let table = self.raw_features()?;
        let space = self.space()?;
        let train: Vec<SplitEntry> = self.split()?.into_iter().filter(|e| !e.test).collect();
        let mc = &self.config.model;
        let cfg = HstConfig {
            positional: mc.positional,
            ..HstConfig::new(space.schema.width(), mc.heads, mc.blocks, space.file.catalog.status_count() + 1)
        };
        let mut model = Hst::new(cfg, derive_seed(self.config.seed, "model"));
        let mut samples = Vec::with_capacity(train.len());
        for e in &train {
            let rows = space.model_rows(&table[&e.address]);
            samples.push(Sample { segments: space.segments(&model, &rows)?, malicious: e.malicious });
        }
        let pos = train.iter().filter(|e| e.malicious).count();
        let loss = if mc.balance_classes { mc.loss.clone().balanced(pos, train.len() - pos) } else { mc.loss.clone() };
        let optim = hst::OptimConfig { seed: derive_seed(self.config.seed, "train"), ..mc.optim.clone() };
        let history = hst::train(&mut model, &samples, &loss, &optim).map_err(|e| match e {
            hst::HstError::NonFinite { .. } => PipelineError::Numeric(e.to_string()),
            other => PipelineError::Data(other.to_string()),
        })?;
        let cp = self.path(marker("train"));
        formats::write_json(&cp, &Checkpoint::of(&model))?;
        let hp = self.path("train/history.csv");
        formats::write_csv(
            &hp,
            &["step", "epoch", "batch", "total", "prediction", "consistency_soft", "consistency_hard", "earliness", "grad_norm"],
            history.iter().enumerate().map(|(i, r)| {
                [
                    i.to_string(),
                    r.epoch.to_string(),
                    r.batch.to_string(),
                    num(r.loss.total),
                    num(r.loss.prediction),
                    num(r.loss.consistency_soft),
                    num(r.loss.consistency_hard),
                    num(r.loss.earliness),
                    num(r.grad_norm),
                ]
            }),
        )?;
        self.manifest(
            "train",
            &[
                self.path(marker("features")),
                self.path(marker("select")),
                self.path("select/schema.json"),
                self.path(marker("segment")),
            ],
            &[cp, hp],
        )
    }

    fn predict(&self) -> Result<(), PipelineError> {
        self.require("predict")?;
        self.reset("predict")?;
        let table = self.raw_features()?;
        let space = self.space()?;
        let model = formats::read_json::<Checkpoint>(&self.path(marker("train")))?.model()?;
        let test: Vec<SplitEntry> = self.split()?.into_iter().filter(|e| e.test).collect();
        let mut hourly = Vec::new();
        let mut summary = Vec::new();
        for e in &test {
            let p = space.predict(&model, &table[&e.address], self.config.model.s_min)?;
            for (t, (y, s)) in p.hourly.iter().zip(&p.hourly_survival).enumerate() {
                hourly.push([e.address.clone(), t.to_string(), num(*y), num(*s)]);
            }
            let seg = &space.file.catalog.segmentation;
            let upto = p.t_die.map_or(p.statuses.len(), |t| (seg.segment_of(t) + 1).min(p.statuses.len()));
            summary.push([
                e.address.clone(),
                if e.malicious { "malicious" } else { "regular" }.to_string(),
                opt(p.t_die),
                opt(p.t_fc),
                join_ids(&p.statuses),
                join_ids(&p.statuses[..upto]),
            ]);
        }
        let hp = self.path("predict/hourly.csv");
        formats::write_csv(&hp, &["address", "hour", "yhat", "survival"], hourly)?;
        let ap = self.path(marker("predict"));
        formats::write_csv(&ap, &["address", "label", "t_die", "t_fc", "statuses", "intention"], summary)?;
        self.manifest(
            "predict",
            &[
                self.path(marker("features")),
                self.path(marker("select")),
                self.path("select/schema.json"),
                self.path(marker("segment")),
                self.path(marker("train")),
            ],
            &[hp, ap],
        )
    }

    /// Predictions of the test addresses, read back from the predict stage.
    pub fn predictions(&self) -> Result<Vec<AddressPrediction>, PipelineError> {
        let ap = self.path(marker("predict"));
        let (_, rows) = formats::read_csv(&ap)?;
        let hp = self.path("predict/hourly.csv");
        let (_, hrows) = formats::read_csv(&hp)?;
        let mut series: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (i, r) in hrows.iter().enumerate() {
            series.entry(r[0].clone()).or_default().push(formats::parse_num(&hp, i + 2, &r[2])?);
        }
        let parse_opt = |s: &str| s.parse::<usize>().ok();
        Ok(rows
            .into_iter()
            .map(|r| AddressPrediction {
                hourly: series.remove(&r[0]).unwrap_or_default(),
                address: r[0].clone(),
                malicious: r[1] == "malicious",
                t_die: parse_opt(&r[2]),
                t_fc: parse_opt(&r[3]),
                statuses: parse_ids(&r[4]),
                intention: parse_ids(&r[5]),
            })
            .collect())
    }

    fn eval(&self) -> Result<(), PipelineError> {
        self.require("eval")?;
        self.reset("eval")?;
        let preds = self.predictions()?;
        let h = preds.iter().map(|p| p.hourly.len()).min().unwrap_or(0);
        let truth: Vec<bool> = preds.iter().map(|p| p.malicious).collect();
        let series: Vec<Vec<f64>> = preds.iter().map(|p| p.hourly[..h].to_vec()).collect();
        let (per, summary) = evalkit::summarize(&series, &truth);
        let mut rows: Vec<Vec<String>> = per
            .iter()
            .enumerate()
            .map(|(t, m)| vec![t.to_string(), num(m.acc), num(m.prec), num(m.rec), num(m.f1), String::new(), String::new()])
            .collect();
        rows.push(vec![
            "mean".into(),
            num(summary.acc),
            num(summary.prec),
            num(summary.rec),
            num(summary.f1),
            num(summary.f1_early),
            num(summary.f1_consistent),
        ]);
        let mp = self.path("eval/metrics.csv");
        formats::write_csv(&mp, &["split", "acc", "prec", "rec", "f1", "f1_early", "f1_consistent"], rows)?;
        let flips: usize = preds
            .iter()
            .map(|p| p.hourly.windows(2).filter(|w| decide(w[0]) != decide(w[1])).count())
            .sum();
        let final_metrics = per.last().copied().unwrap_or_default();
        let doc = EvalSummary {
            addresses: preds.len(),
            malicious: truth.iter().filter(|t| **t).count(),
            hours: h,
            summary,
            mean_flips: if preds.is_empty() { 0.0 } else { flips as f64 / preds.len() as f64 },
            final_metrics,
        };
        let sp = self.path(marker("eval"));
        formats::write_json(&sp, &doc)?;
        self.manifest("eval", &[self.path(marker("predict")), self.path("predict/hourly.csv")], &[mp, sp])
    }

    fn report(&self) -> Result<(), PipelineError> {
        self.require("report")?;
        self.reset("report")?;
        let preds = self.predictions()?;
        let mal: Vec<&[usize]> = preds.iter().filter(|p| p.malicious).map(|p| p.intention.as_slice()).collect();
        let reg: Vec<&[usize]> = preds.iter().filter(|p| !p.malicious).map(|p| p.intention.as_slice()).collect();
        let tables = intent::intent_tables(&mal, &reg, intent::DEFAULT_TOP);
        let mut text = String::new();
        if !preds.is_empty() {
            let _ = writeln!(text, "addresses: {} ({} malicious)", preds.len(), mal.len());
            let _ = writeln!(text, "\naddress      label      t_die  t_fc  final  intention");
            for p in &preds {
                let _ = writeln!(
                    text,
                    "{:<12} {:<10} {:>5}  {:>4}  {:.3}  {}",
                    p.address,
                    if p.malicious { "malicious" } else { "regular" },
                    opt(p.t_die),
                    opt(p.t_fc),
                    p.hourly.last().copied().unwrap_or(hst::survival::PRIOR),
                    join_ids(&p.intention)
                );
            }
            for (n, table) in &tables {
                let _ = writeln!(text, "\n{n}-grams (malicious - regular)");
                for d in table {
                    let _ = writeln!(text, "  {:<12} {:+.4}", join_ids(&d.gram), d.diff);
                }
            }
        }
        let rp = self.path(marker("report"));
        fs::write(&rp, text).map_err(|e| PipelineError::io(&rp, e))?;
        let np = self.path("report/ngrams.csv");
        formats::write_csv(
            &np,
            &["n", "gram", "malicious", "regular", "diff"],
            tables.iter().flat_map(|(n, t)| {
                t.iter().map(move |d| [n.to_string(), join_ids(&d.gram), num(d.malicious), num(d.regular), num(d.diff)])
            }),
        )?;
        self.manifest("report", &[self.path(marker("predict")), self.path("predict/hourly.csv")], &[rp, np])
    }
}

fn spy_json(run: &SpyRun, positives: &[&str], unlabeled: &[&str]) -> serde_json::Value {
    let name = |i: usize| if i < positives.len() { positives[i] } else { unlabeled[i - positives.len()] };
    serde_json::json!({
        "fraction": run.fraction,
        "threshold": run.threshold,
        "spies": run.spies.iter().map(|&i| name(i)).collect::<Vec<_>>(),
        "reliable_negatives": run.reliable_negatives.iter().map(|&i| name(i)).collect::<Vec<_>>(),
        "scores": run.scores.iter().map(|&(i, s)| serde_json::json!([name(i), s])).collect::<Vec<_>>(),
    })
}

/// Signed-log rows rescaled per column onto `[1, 2]` over the pool, so a
/// single feature's change ratio is at most 1.
fn unit_log(seqs: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<f64>>> {
    let logged: Vec<Vec<Vec<f64>>> = seqs.iter().map(|s| s.iter().map(|r| signed_log(r)).collect()).collect();
    let width = logged.iter().flatten().next().map_or(0, Vec::len);
    let (mut lo, mut hi) = (vec![f64::INFINITY; width], vec![f64::NEG_INFINITY; width]);
    for r in logged.iter().flatten() {
        for (k, v) in r.iter().enumerate() {
            lo[k] = lo[k].min(*v);
            hi[k] = hi[k].max(*v);
        }
    }
    let span: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| if h - l > 1e-12 { h - l } else { 1.0 }).collect();
    logged
        .into_iter()
        .map(|s| s.into_iter().map(|r| (0..width).map(|k| (r[k] - lo[k]) / span[k] + 1.0).collect()).collect())
        .collect()
}

fn signed_log(r: &[f64]) -> Vec<f64> {
    r.iter().map(|v| math::signed_log1p(*v)).collect()
}

/// Projection, input transform and status catalog shared by training and
/// prediction.
pub struct ModelSpace {
    pub schema: FeatureSchema,
    pub file: CatalogFile,
}

impl ModelSpace {
    pub fn model_rows(&self, raw: &[Vec<f64>]) -> Vec<Vec<f64>> {
        raw.iter().map(|r| self.file.transform.apply(&signed_log(&self.schema.project(r)))).collect()
    }

    fn describe(&self, j: usize, slice: &[Vec<f64>]) -> Result<(Vec<f64>, usize), PipelineError> {
        let c = &self.file.catalog;
        let g = c.segment_vector(j, slice);
        let (status, _) = c.assign_status(&g).map_err(|e| PipelineError::Data(e.to_string()))?;
        Ok((c.norm.apply(&g), status))
    }

    fn statuses(&self, rows: &[Vec<f64>]) -> Result<Vec<usize>, PipelineError> {
        self.file.catalog.segmentation.segments().iter().enumerate().map(|(j, &(b, e))| Ok(self.describe(j, &rows[b..e])?.1)).collect()
    }

    pub fn segments(&self, model: &Hst, rows: &[Vec<f64>]) -> Result<Vec<SegmentInput>, PipelineError> {
        let seg = &self.file.catalog.segmentation;
        seg.segments()
            .iter()
            .enumerate()
            .map(|(j, &(b, e))| {
                let (v, s) = self.describe(j, &rows[b..e])?;
                model.segment_input(&rows[b..e], &v, s).map_err(|e| PipelineError::Data(e.to_string()))
            })
            .collect()
    }

    pub fn predict(&self, model: &Hst, raw: &[Vec<f64>], s_min: f64) -> Result<hst::StreamOutput, PipelineError> {
        let rows = self.model_rows(raw);
        let mut failure = None;
        let out = model
            .predict_stream(&rows, &self.file.catalog.segmentation, s_min, |j, slice| match self.describe(j, slice) {
                Ok(d) => d,
                Err(e) => {
                    failure.get_or_insert(e);
                    (vec![0.0; slice[0].len()], 0)
                }
            })
            .map_err(|e| PipelineError::Data(e.to_string()))?;
        match failure {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }
}
