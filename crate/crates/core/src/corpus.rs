//! Argument records, quality scores and dataset loading.
//!
//! Two CSV layouts are supported, plus a JSON-lines form that uses the same
//! field names:
//!
//! ```text
//! GAQ-style: id,domain,topic,argument,cogency,effectiveness,reasonableness[,split]
//! IBM-style: id,topic,argument,wa
//! ```
//!
//! Loading is strict. A single bad row aborts the whole load.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const SCORE_MIN: f64 = 1.0;
pub const SCORE_MAX: f64 = 5.0;

const GAQ_COLUMNS: [&str; 7] = [
    "id",
    "domain",
    "topic",
    "argument",
    "cogency",
    "effectiveness",
    "reasonableness",
];
const IBM_COLUMNS: [&str; 4] = ["id", "topic", "argument", "wa"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("score out of range [1,5] for record `{0}`")]
    ScoreOutOfRange(String),
    #[error("wa label out of configured range for record `{0}`")]
    WaOutOfRange(String),
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("value {0} outside [1,5]")]
    OutOfRange(f64),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    InvalidRatios([f64; 3]),
}

/// Cogency, effectiveness and reasonableness on the raw 1–5 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    pub cogency: f64,
    pub effectiveness: f64,
    pub reasonableness: f64,
}

impl QualityScores {
    pub fn new(cogency: f64, effectiveness: f64, reasonableness: f64) -> Result<Self, CorpusError> {
        for v in [cogency, effectiveness, reasonableness] {
            if !(SCORE_MIN..=SCORE_MAX).contains(&v) {
                return Err(CorpusError::OutOfRange(v));
            }
        }
        Ok(Self {
            cogency,
            effectiveness,
            reasonableness,
        })
    }

    /// Overall quality: the unweighted mean of the three metrics.
    pub fn wa(&self) -> f64 {
        (self.cogency + self.effectiveness + self.reasonableness) / 3.0
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.cogency, self.effectiveness, self.reasonableness]
    }

    /// Map every score onto [0,1]. Valid scores cannot fail.
    pub fn normalized(&self) -> [f64; 3] {
        self.as_array().map(|v| (v - SCORE_MIN) / (SCORE_MAX - SCORE_MIN))
    }
}

/// `(raw - 1) / 4`, the training-target scaling.
pub fn normalize_score(raw: f64) -> Result<f64, CorpusError> {
    if !(SCORE_MIN..=SCORE_MAX).contains(&raw) {
        return Err(CorpusError::OutOfRange(raw));
    }
    Ok((raw - SCORE_MIN) / (SCORE_MAX - SCORE_MIN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgumentRecord {
    pub id: String,
    #[serde(rename = "domain", default = "unknown_domain")]
    pub domain_tag: String,
    pub topic: String,
    pub argument: String,
    #[serde(skip_serializing_if = "Option::is_none", flatten, with = "flat_scores")]
    pub labels: Option<QualityScores>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "wa")]
    pub wa_label: Option<f64>,
}

fn unknown_domain() -> String {
    "unknown".to_string()
}

impl ArgumentRecord {
    pub fn new(id: impl Into<String>, topic: impl Into<String>, argument: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            domain_tag: unknown_domain(),
            topic: topic.into(),
            argument: argument.into(),
            labels: None,
            wa_label: None,
        }
    }

    pub fn with_labels(mut self, labels: QualityScores) -> Self {
        self.labels = Some(labels);
        self
    }

    fn validate_text(&self, line: usize) -> Result<(), CorpusError> {
        if self.id.trim().is_empty() {
            return Err(CorpusError::MalformedRow {
                line,
                reason: "empty id".into(),
            });
        }
        if self.topic.trim().is_empty() || self.argument.trim().is_empty() {
            return Err(CorpusError::MalformedRow {
                line,
                reason: format!("empty topic or argument for `{}`", self.id),
            });
        }
        Ok(())
    }
}

// JSONL stores the three scores as top-level optional fields, like the CSV.
mod flat_scores {
    use super::QualityScores;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Flat {
        #[serde(default)]
        cogency: Option<f64>,
        #[serde(default)]
        effectiveness: Option<f64>,
        #[serde(default)]
        reasonableness: Option<f64>,
    }

    pub fn serialize<S: Serializer>(v: &Option<QualityScores>, s: S) -> Result<S::Ok, S::Error> {
        let flat = match v {
            Some(q) => Flat {
                cogency: Some(q.cogency),
                effectiveness: Some(q.effectiveness),
                reasonableness: Some(q.reasonableness),
            },
            None => Flat {
                cogency: None,
                effectiveness: None,
                reasonableness: None,
            },
        };
        flat.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<QualityScores>, D::Error> {
        let flat = Flat::deserialize(d)?;
        match (flat.cogency, flat.effectiveness, flat.reasonableness) {
            (Some(c), Some(e), Some(r)) => Ok(Some(QualityScores {
                cogency: c,
                effectiveness: e,
                reasonableness: r,
            })),
            (None, None, None) => Ok(None),
            _ => Err(serde::de::Error::custom(
                "cogency, effectiveness and reasonableness must be given together",
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "valid" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// Label range accepted for single-score (IBM-style) datasets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaRange {
    pub min: f64,
    pub max: f64,
}

impl Default for WaRange {
    fn default() -> Self {
        Self { min: 0.0, max: 1.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<ArgumentRecord>,
    pub split_assignment: BTreeMap<String, Split>,
}

impl Dataset {
    pub fn from_records(records: Vec<ArgumentRecord>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            r.validate_text(i + 1)?;
            if !seen.insert(r.id.as_str()) {
                return Err(CorpusError::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self {
            records,
            split_assignment: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.split_assignment.get(id).copied()
    }

    /// Records of one split, in load order. Without any split assignment
    /// every record counts as `train`.
    pub fn split(&self, split: Split) -> Vec<&ArgumentRecord> {
        if self.split_assignment.is_empty() {
            return if split == Split::Train {
                self.records.iter().collect()
            } else {
                Vec::new()
            };
        }
        self.records
            .iter()
            .filter(|r| self.split_of(&r.id) == Some(split))
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<&ArgumentRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

struct Header {
    index: Vec<usize>,
    split: Option<usize>,
}

fn resolve_header(headers: &csv::StringRecord, required: &[&str]) -> Result<Header, CorpusError> {
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let index = required
        .iter()
        .map(|c| find(c).ok_or_else(|| CorpusError::MissingColumn(c.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Header {
        index,
        split: find("split"),
    })
}

fn parse_real(field: &str, line: usize, name: &str) -> Result<f64, CorpusError> {
    let v: f64 = field.trim().parse().map_err(|_| CorpusError::MalformedRow {
        line,
        reason: format!("column `{name}` is not a number: `{field}`"),
    })?;
    if !v.is_finite() {
        return Err(CorpusError::MalformedRow {
            line,
            reason: format!("column `{name}` is not finite"),
        });
    }
    Ok(v)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>, CorpusError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file))
}

fn row_error(e: csv::Error, fallback_line: usize) -> CorpusError {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    CorpusError::MalformedRow {
        line,
        reason: e.to_string(),
    }
}

fn finish(records: Vec<ArgumentRecord>, splits: BTreeMap<String, Split>) -> Result<Dataset, CorpusError> {
    let mut ds = Dataset::from_records(records)?;
    ds.split_assignment = splits;
    Ok(ds)
}

/// Load a three-score dataset. A `split` column, when present, is honoured
/// and must be filled on every row.
pub fn load_gaq_csv(path: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| row_error(e, 1))?.clone();
    let header = resolve_header(&headers, &GAQ_COLUMNS)?;
    let mut records = Vec::new();
    let mut splits = BTreeMap::new();
    let mut ids = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| row_error(e, line))?;
        let col = |k: usize| row.get(header.index[k]).unwrap_or("");
        let id = col(0).to_string();
        let mut scores = [0.0; 3];
        for (k, s) in scores.iter_mut().enumerate() {
            *s = parse_real(col(4 + k), line, GAQ_COLUMNS[4 + k])?;
        }
        let labels = QualityScores::new(scores[0], scores[1], scores[2])
            .map_err(|_| CorpusError::ScoreOutOfRange(id.clone()))?;
        let domain = col(1).trim();
        let record = ArgumentRecord {
            id: id.clone(),
            domain_tag: if domain.is_empty() { unknown_domain() } else { domain.to_string() },
            topic: col(2).to_string(),
            argument: col(3).to_string(),
            labels: Some(labels),
            wa_label: None,
        };
        record.validate_text(line)?;
        if !ids.insert(id.clone()) {
            return Err(CorpusError::DuplicateId(id));
        }
        if let Some(si) = header.split {
            let raw = row.get(si).unwrap_or("");
            let split = raw
                .parse::<Split>()
                .map_err(|reason| CorpusError::MalformedRow { line, reason })?;
            splits.insert(id, split);
        }
        records.push(record);
    }
    finish(records, splits)
}

/// Load a single-score dataset with the default `[0,1]` label range.
pub fn load_ibm_csv(path: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
    load_ibm_csv_with_range(path, WaRange::default())
}

pub fn load_ibm_csv_with_range(path: impl AsRef<Path>, range: WaRange) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| row_error(e, 1))?.clone();
    let header = resolve_header(&headers, &IBM_COLUMNS)?;
    let mut records = Vec::new();
    let mut splits = BTreeMap::new();
    let mut ids = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| row_error(e, line))?;
        let col = |k: usize| row.get(header.index[k]).unwrap_or("");
        let id = col(0).to_string();
        let wa = parse_real(col(3), line, "wa")?;
        if wa < range.min || wa > range.max {
            return Err(CorpusError::WaOutOfRange(id));
        }
        let record = ArgumentRecord {
            id: id.clone(),
            domain_tag: unknown_domain(),
            topic: col(1).to_string(),
            argument: col(2).to_string(),
            labels: None,
            wa_label: Some(wa),
        };
        record.validate_text(line)?;
        if !ids.insert(id.clone()) {
            return Err(CorpusError::DuplicateId(id));
        }
        if let Some(si) = header.split {
            let split = row
                .get(si)
                .unwrap_or("")
                .parse::<Split>()
                .map_err(|reason| CorpusError::MalformedRow { line, reason })?;
            splits.insert(id, split);
        }
        records.push(record);
    }
    finish(records, splits)
}

#[derive(Serialize, Deserialize)]
struct JsonlRow {
    #[serde(flatten)]
    record: ArgumentRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut records = Vec::new();
    let mut splits = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonlRow = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRow {
            line: line_no,
            reason: e.to_string(),
        })?;
        let r = row.record;
        if let Some(q) = &r.labels {
            if QualityScores::new(q.cogency, q.effectiveness, q.reasonableness).is_err() {
                return Err(CorpusError::ScoreOutOfRange(r.id));
            }
        }
        r.validate_text(line_no)?;
        if let Some(s) = row.split {
            splits.insert(r.id.clone(), s);
        }
        records.push(r);
    }
    finish(records, splits)
}

/// Dispatch on extension (`.jsonl`) or CSV header (`wa` column means IBM-style).
pub fn load_any(path: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
        return load_jsonl(path);
    }
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| row_error(e, 1))?;
    if headers.iter().any(|h| h.trim() == "wa") && !headers.iter().any(|h| h.trim() == "cogency") {
        load_ibm_csv(path)
    } else {
        load_gaq_csv(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Gaq,
    Ibm,
    Jsonl,
}

/// Write a dataset in one of the supported layouts. The split column is
/// emitted whenever splits are assigned.
pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>, format: DatasetFormat) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let with_split = !ds.split_assignment.is_empty();
    match format {
        DatasetFormat::Jsonl => {
            let mut w = BufWriter::new(file);
            for r in &ds.records {
                let row = JsonlRow {
                    record: r.clone(),
                    split: ds.split_of(&r.id),
                };
                let line = serde_json::to_string(&row).expect("records serialize");
                writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
            }
            w.flush().map_err(|e| io_err(path, e))?;
        }
        DatasetFormat::Gaq | DatasetFormat::Ibm => {
            let mut w = csv::Writer::from_writer(file);
            let mut header: Vec<&str> = if format == DatasetFormat::Gaq {
                GAQ_COLUMNS.to_vec()
            } else {
                IBM_COLUMNS.to_vec()
            };
            if with_split {
                header.push("split");
            }
            let csv_err = |e: csv::Error| io_err(path, std::io::Error::other(e.to_string()));
            w.write_record(&header).map_err(csv_err)?;
            for r in &ds.records {
                let mut row: Vec<String> = vec![r.id.clone()];
                if format == DatasetFormat::Gaq {
                    let q = r.labels.ok_or_else(|| CorpusError::ScoreOutOfRange(r.id.clone()))?;
                    row.extend([
                        r.domain_tag.clone(),
                        r.topic.clone(),
                        r.argument.clone(),
                        q.cogency.to_string(),
                        q.effectiveness.to_string(),
                        q.reasonableness.to_string(),
                    ]);
                } else {
                    let wa = r
                        .wa_label
                        .or_else(|| r.labels.map(|q| q.wa()))
                        .ok_or_else(|| CorpusError::WaOutOfRange(r.id.clone()))?;
                    row.extend([r.topic.clone(), r.argument.clone(), wa.to_string()]);
                }
                if with_split {
                    row.push(ds.split_of(&r.id).map(|s| s.as_str()).unwrap_or("").to_string());
                }
                w.write_record(&row).map_err(csv_err)?;
            }
            w.flush().map_err(|e| io_err(path, e))?;
        }
    }
    Ok(())
}

fn split_key(id: &str, seed: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    h.finalize().into()
}

/// Deterministic train/dev/test assignment.
///
/// Records are ordered by a seeded hash of their id and the ordered list is
/// cut at `round(n * ratio)` boundaries, so counts are exact up to rounding.
pub fn assign_splits(dataset: &Dataset, ratios: [f64; 3], split_seed: u64) -> Result<Dataset, CorpusError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(CorpusError::InvalidRatios(ratios));
    }
    let n = dataset.records.len();
    let mut keyed: Vec<([u8; 32], &str)> = dataset
        .records
        .iter()
        .map(|r| (split_key(&r.id, split_seed), r.id.as_str()))
        .collect();
    keyed.sort();
    let n_train = (n as f64 * ratios[0]).round() as usize;
    let n_dev = ((n as f64 * (ratios[0] + ratios[1])).round() as usize).saturating_sub(n_train);
    let n_dev = n_dev.min(n - n_train.min(n));
    let mut assignment = BTreeMap::new();
    for (i, (_, id)) in keyed.into_iter().enumerate() {
        let split = if i < n_train {
            Split::Train
        } else if i < n_train + n_dev {
            Split::Dev
        } else {
            Split::Test
        };
        assignment.insert(id.to_string(), split);
    }
    Ok(Dataset {
        records: dataset.records.clone(),
        split_assignment: assignment,
    })
}
