//! On-disk formats: transaction lines, label CSV, feature matrices, path
//! exports, checkpoints and stage manifests.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chainwatch_core::featureset::FeatureSchema;
use chainwatch_core::hst::tensor::Mat;
use chainwatch_core::hst::{Hst, HstConfig, Params};
use chainwatch_core::txgraph::Transaction;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Malicious,
    Regular,
    Unlabeled,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Malicious => "malicious",
            Label::Regular => "regular",
            Label::Unlabeled => "unlabeled",
        })
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "malicious" => Ok(Label::Malicious),
            "regular" => Ok(Label::Regular),
            "unlabeled" => Ok(Label::Unlabeled),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| PipelineError::io(path, e))?))
}

fn open(path: &Path) -> Result<BufReader<File>, PipelineError> {
    Ok(BufReader::new(File::open(path).map_err(|e| PipelineError::io(path, e))?))
}

fn csv_err(path: &Path, e: csv::Error) -> PipelineError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    PipelineError::Parse { path: path.into(), line, message: e.to_string() }
}

/// One transaction per line; blank lines are skipped.
pub fn read_transactions(path: &Path) -> Result<Vec<Transaction>, PipelineError> {
    let mut out = Vec::new();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| PipelineError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let tx: Transaction = serde_json::from_str(&line)
            .map_err(|e| PipelineError::Parse { path: path.into(), line: n + 1, message: e.to_string() })?;
        out.push(tx);
    }
    Ok(out)
}

pub fn write_transactions(path: &Path, txs: &[Transaction]) -> Result<(), PipelineError> {
    let mut w = create(path)?;
    for tx in txs {
        let line = serde_json::to_string(tx).map_err(|e| PipelineError::Data(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| PipelineError::io(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<(String, Label)>, PipelineError> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let (Some(addr), Some(label)) = (rec.get(0), rec.get(1)) else {
            return Err(PipelineError::Parse { path: path.into(), line, message: "expected address,label".into() });
        };
        let label = label.parse().map_err(|message| PipelineError::Parse { path: path.into(), line, message })?;
        out.push((addr.to_string(), label));
    }
    Ok(out)
}

pub fn write_labels(path: &Path, labels: &[(String, Label)]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["address", "label"]).map_err(|e| csv_err(path, e))?;
    for (a, l) in labels {
        w.write_record([a.as_str(), &l.to_string()]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

/// Write a CSV with a header and string records.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), PipelineError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

/// Records of a CSV with a header, as strings.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), PipelineError> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let header = r.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(|e| csv_err(path, e))?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

/// Shortest round-trip text for a float.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn parse_num(path: &Path, line: usize, s: &str) -> Result<f64, PipelineError> {
    s.parse().map_err(|_| PipelineError::Parse { path: path.into(), line, message: format!("bad number `{s}`") })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| PipelineError::Data(e.to_string()))?;
    writeln!(w).map_err(|e| PipelineError::io(path, e))?;
    w.flush().map_err(|e| PipelineError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    serde_json::from_reader(open(path)?).map_err(|e| PipelineError::Parse { path: path.into(), line: e.line(), message: e.to_string() })
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let mut h = Sha256::new();
    let mut f = open(path)?;
    std::io::copy(&mut f, &mut h).map_err(|e| PipelineError::io(path, e))?;
    Ok(hex::encode(h.finalize()))
}

/// Hourly feature rows keyed by address.
pub type FeatureTable = BTreeMap<String, Vec<Vec<f64>>>;

/// One row per (address, hour), columns named by the schema.
pub fn write_features(path: &Path, schema: &FeatureSchema, table: &FeatureTable) -> Result<(), PipelineError> {
    let mut header = vec!["address".to_string(), "hour".to_string()];
    header.extend(schema.names().into_iter().map(String::from));
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    let mut rec = Vec::with_capacity(header.len());
    for (addr, rows) in table {
        for (t, row) in rows.iter().enumerate() {
            rec.clear();
            rec.push(addr.clone());
            rec.push(t.to_string());
            rec.extend(row.iter().map(|v| num(*v)));
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

pub fn read_features(path: &Path, width: usize) -> Result<FeatureTable, PipelineError> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let mut table = FeatureTable::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != width + 2 {
            return Err(PipelineError::Parse { path: path.into(), line, message: format!("expected {} columns", width + 2) });
        }
        let row = rec.iter().skip(2).map(|s| parse_num(path, line, s)).collect::<Result<Vec<_>, _>>()?;
        table.entry(rec[0].to_string()).or_default().push(row);
    }
    Ok(table)
}

/// Column index to (name, group, statistic).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaColumn {
    pub index: usize,
    pub name: String,
    pub group: String,
    pub statistic: String,
    pub raw_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaManifest {
    pub id: String,
    pub columns: Vec<SchemaColumn>,
}

impl SchemaManifest {
    pub fn of(schema: &FeatureSchema) -> Self {
        Self {
            id: schema.id.clone(),
            columns: schema
                .columns
                .iter()
                .enumerate()
                .map(|(index, c)| SchemaColumn {
                    index,
                    name: c.name.clone(),
                    group: c.group.label().to_string(),
                    statistic: c.stat.label().to_string(),
                    raw_index: c.raw_index,
                })
                .collect(),
        }
    }

    /// Rebuild the schema from the raw indices.
    pub fn schema(&self) -> Result<FeatureSchema, PipelineError> {
        let raw = FeatureSchema::raw();
        let cols = self
            .columns
            .iter()
            .map(|c| raw.columns.get(c.raw_index).filter(|r| r.name == c.name).cloned())
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| PipelineError::Data(format!("schema {} does not match the raw layout", self.id)))?;
        Ok(FeatureSchema::new(cols))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

/// Model checkpoint: configuration plus named row-major tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: HstConfig,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn of(model: &Hst) -> Self {
        let mut tensors = Vec::new();
        model.params.visit(|name, m| {
            tensors.push(NamedTensor { name: name.to_string(), shape: [m.rows, m.cols], values: m.data.clone() })
        });
        Self { config: model.config.clone(), tensors }
    }

    pub fn model(&self) -> Result<Hst, PipelineError> {
        let mut model = Hst::new(self.config.clone(), 0);
        let by_name: BTreeMap<&str, &NamedTensor> = self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        let mut missing = Vec::new();
        let mut fill = |p: &mut Params| {
            p.visit_mut(|name, m| match by_name.get(name) {
                Some(t) if t.shape == [m.rows, m.cols] && t.values.len() == m.data.len() => {
                    *m = Mat { rows: t.shape[0], cols: t.shape[1], data: t.values.clone() }
                }
                _ => missing.push(name.to_string()),
            })
        };
        fill(&mut model.params);
        if !missing.is_empty() || by_name.len() != self.tensors.len() {
            return Err(PipelineError::Data(format!("checkpoint tensors missing or misshaped: {missing:?}")));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chainwatch_core::txgraph::{InputRef, OutputRef};

    #[test]
    fn negative_amount_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tx.jsonl");
        fs::write(
            &p,
            "{\"id\":\"a\",\"timestamp\":1,\"inputs\":[],\"outputs\":[{\"address\":\"x\",\"amount\":5}]}\n\n\
             {\"id\":\"b\",\"timestamp\":2,\"inputs\":[],\"outputs\":[{\"address\":\"x\",\"amount\":-5}]}\n",
        )
        .unwrap();
        match read_transactions(&p) {
            Err(PipelineError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        fs::write(&p, "").unwrap();
        assert!(read_transactions(&p).unwrap().is_empty());
    }

    #[test]
    fn transactions_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tx.jsonl");
        let txs = vec![Transaction {
            id: "b".into(),
            timestamp: 9,
            inputs: vec![InputRef { source_tx: "a".into(), address: "x".into(), amount: 3 }],
            outputs: vec![OutputRef { address: "y".into(), amount: 2 }],
        }];
        write_transactions(&p, &txs).unwrap();
        assert_eq!(read_transactions(&p).unwrap(), txs);
    }

    #[test]
    fn labels_round_trip_and_reject_unknown() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.csv");
        let l = vec![("a".to_string(), Label::Malicious), ("b".to_string(), Label::Unlabeled)];
        write_labels(&p, &l).unwrap();
        assert_eq!(read_labels(&p).unwrap(), l);
        fs::write(&p, "address,label\na,evil\n").unwrap();
        assert!(matches!(read_labels(&p), Err(PipelineError::Parse { line: 2, .. })));
    }

    #[test]
    fn features_and_schema_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let schema = FeatureSchema::address_only();
        let mut t = FeatureTable::new();
        t.insert("a".into(), vec![(0..16).map(|k| k as f64 * 0.1 + 1e-17).collect(), vec![f64::MAX; 16]]);
        write_features(&p, &schema, &t).unwrap();
        assert_eq!(read_features(&p, 16).unwrap(), t);
        let m = SchemaManifest::of(&schema);
        assert_eq!(m.schema().unwrap(), schema);
    }

    #[test]
    fn checkpoint_round_trips_exactly() {
        let model = Hst::new(HstConfig::new(5, 2, 1, 3), 4);
        let c = Checkpoint::of(&model);
        let text = serde_json::to_string(&c).unwrap();
        let back: Checkpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(back.model().unwrap(), model);
        let mut broken = back.clone();
        broken.tensors.pop();
        assert!(broken.model().is_err());
    }
}
