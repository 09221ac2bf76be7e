//! LLM-generated context for arguments: feedback, assumptions, a
//! similar-quality argument and a counter-argument.
//!
//! Completions are cached on disk, one JSON file per prompt, keyed by a
//! SHA-256 of (kind, prompt, model, temperature). A cache hit issues no
//! request.

mod cache;
mod prompt;
mod provider;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ArgumentRecord;

pub use cache::{cache_key, AugmentCache, CacheEntry};
pub use prompt::{bundled_exemplars, exemplars_balanced, format_score, render_prompt, FewShotExemplar};
#[cfg(feature = "http")]
pub use provider::HttpProvider;
pub use provider::{
    chat_request_body, mock_provider, parse_chat_response, prompt_hash, MockProvider, Provider, ProviderConfig,
};

/// Sentinel the assumptions prompt asks for when nothing is found.
pub const NO_ASSUMPTIONS: &str = "No assumptions";

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("record `{0}` has no gold scores; the similar-quality prompt needs them")]
    MissingLabels(String),
    #[error("similar-quality prompt needs at least one exemplar")]
    MissingExemplars,
    #[error("provider returned status {0}: {1}")]
    ProviderError(u16, String),
    #[error("provider request timed out")]
    Timeout,
    #[error("corrupt cache entry at {0}")]
    CacheCorrupt(String),
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
    #[error("unknown augmentation kind `{0}`")]
    UnknownKind(String),
    #[error("empty completion for {kind} on record `{id}`")]
    EmptyCompletion { kind: AugmentationKind, id: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed augmentation line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentationKind {
    Feedback,
    Assumptions,
    SimilarQuality,
    CounterArgument,
}

impl AugmentationKind {
    /// Fixed order used everywhere kinds are concatenated.
    pub const ALL: [AugmentationKind; 4] = [
        AugmentationKind::Feedback,
        AugmentationKind::Assumptions,
        AugmentationKind::SimilarQuality,
        AugmentationKind::CounterArgument,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AugmentationKind::Feedback => "feedback",
            AugmentationKind::Assumptions => "assumptions",
            AugmentationKind::SimilarQuality => "similar_quality",
            AugmentationKind::CounterArgument => "counter_argument",
        }
    }

    pub fn short(&self) -> &'static str {
        match self {
            AugmentationKind::Feedback => "fb",
            AugmentationKind::Assumptions => "as",
            AugmentationKind::SimilarQuality => "sq",
            AugmentationKind::CounterArgument => "ca",
        }
    }
}

impl fmt::Display for AugmentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AugmentationKind {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        AugmentationKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s || k.short() == s)
            .ok_or_else(|| AugmentError::UnknownKind(s.to_string()))
    }
}

/// Parse `all`, `none` or a comma-separated list of kind names.
pub fn parse_kinds(spec: &str) -> Result<BTreeSet<AugmentationKind>, AugmentError> {
    match spec.trim() {
        "all" => Ok(AugmentationKind::ALL.into_iter().collect()),
        "none" | "" => Ok(BTreeSet::new()),
        list => list.split(',').map(str::parse).collect(),
    }
}

/// Canonical name of a kind subset: `none`, `all`, or `fb+as+...` in fixed order.
pub fn kinds_label(kinds: &BTreeSet<AugmentationKind>) -> String {
    if kinds.is_empty() {
        "none".into()
    } else if kinds.len() == 4 {
        "all".into()
    } else {
        kinds.iter().map(|k| k.short()).collect::<Vec<_>>().join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationMetadata {
    pub provider: String,
    pub model: String,
    pub timestamp: String,
    pub prompt_hash: String,
}

/// The four optional texts attached to one record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSet {
    pub feedback: Option<String>,
    pub assumptions: Option<String>,
    pub similar_quality: Option<String>,
    pub counter_argument: Option<String>,
    /// Set when the assumptions text is exactly the "No assumptions" sentinel.
    #[serde(default)]
    pub empty_assumptions: bool,
    #[serde(default)]
    pub metadata: BTreeMap<AugmentationKind, GenerationMetadata>,
}

impl AugmentationSet {
    pub fn get(&self, kind: AugmentationKind) -> Option<&str> {
        match kind {
            AugmentationKind::Feedback => self.feedback.as_deref(),
            AugmentationKind::Assumptions => self.assumptions.as_deref(),
            AugmentationKind::SimilarQuality => self.similar_quality.as_deref(),
            AugmentationKind::CounterArgument => self.counter_argument.as_deref(),
        }
    }

    fn slot(&mut self, kind: AugmentationKind) -> &mut Option<String> {
        match kind {
            AugmentationKind::Feedback => &mut self.feedback,
            AugmentationKind::Assumptions => &mut self.assumptions,
            AugmentationKind::SimilarQuality => &mut self.similar_quality,
            AugmentationKind::CounterArgument => &mut self.counter_argument,
        }
    }

    /// Store a text. Blank texts are rejected.
    pub fn set(&mut self, kind: AugmentationKind, text: impl Into<String>) -> bool {
        let text = text.into();
        if text.trim().is_empty() {
            return false;
        }
        if kind == AugmentationKind::Assumptions {
            self.empty_assumptions = text.trim() == NO_ASSUMPTIONS;
        }
        *self.slot(kind) = Some(text);
        true
    }

    /// Remove a text and its metadata.
    pub fn clear(&mut self, kind: AugmentationKind) {
        *self.slot(kind) = None;
        self.metadata.remove(&kind);
        if kind == AugmentationKind::Assumptions {
            self.empty_assumptions = false;
        }
    }

    pub fn present_kinds(&self) -> Vec<AugmentationKind> {
        AugmentationKind::ALL
            .into_iter()
            .filter(|k| self.get(*k).is_some())
            .collect()
    }
}

/// Generate (or fetch from cache) the requested kinds for one record using
/// the bundled few-shot exemplars.
pub fn generate(
    record: &ArgumentRecord,
    kinds: &BTreeSet<AugmentationKind>,
    provider: &dyn Provider,
    cache: &AugmentCache,
) -> Result<AugmentationSet, AugmentError> {
    generate_with_exemplars(record, kinds, provider, cache, &bundled_exemplars())
}

pub fn generate_with_exemplars(
    record: &ArgumentRecord,
    kinds: &BTreeSet<AugmentationKind>,
    provider: &dyn Provider,
    cache: &AugmentCache,
    exemplars: &[FewShotExemplar],
) -> Result<AugmentationSet, AugmentError> {
    let mut set = AugmentationSet::default();
    for &kind in kinds {
        let ex = (kind == AugmentationKind::SimilarQuality).then_some(exemplars);
        let prompt = render_prompt(kind, record, ex)?;
        let key = cache_key(kind, &prompt, provider.model(), provider.temperature());
        let (text, timestamp) = match cache.get(&key, kind, &prompt, provider.model())? {
            Some(entry) => (entry.response, entry.created_at),
            None => {
                let text = provider.complete(kind, &prompt)?;
                let created_at = provider.timestamp();
                cache.put(
                    &key,
                    &CacheEntry {
                        kind,
                        prompt: prompt.clone(),
                        response: text.clone(),
                        model: provider.model().to_string(),
                        temperature: provider.temperature(),
                        created_at: created_at.clone(),
                    },
                )?;
                (text, created_at)
            }
        };
        if !set.set(kind, text) {
            return Err(AugmentError::EmptyCompletion {
                kind,
                id: record.id.clone(),
            });
        }
        set.metadata.insert(
            kind,
            GenerationMetadata {
                provider: provider.name().to_string(),
                model: provider.model().to_string(),
                timestamp,
                prompt_hash: prompt_hash(kind, &prompt),
            },
        );
    }
    Ok(set)
}

/// Augment a whole record list with up to `provider.max_parallel()` records
/// in flight. Results come back in input order. Records without gold scores
/// simply get no similar-quality text.
pub fn generate_all(
    records: &[ArgumentRecord],
    kinds: &BTreeSet<AugmentationKind>,
    provider: &dyn Provider,
    cache: &AugmentCache,
) -> Result<Vec<AugmentationSet>, AugmentError> {
    let exemplars = bundled_exemplars();
    let workers = provider.max_parallel().max(1).min(records.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<AugmentationSet, AugmentError>>>> =
        Mutex::new((0..records.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(record) = records.get(i) else { break };
                let mut wanted = kinds.clone();
                if record.labels.is_none() {
                    wanted.remove(&AugmentationKind::SimilarQuality);
                }
                let out = generate_with_exemplars(record, &wanted, provider, cache, &exemplars);
                let failed = out.is_err();
                results.lock().unwrap()[i] = Some(out);
                if failed {
                    next.store(records.len(), Ordering::SeqCst);
                    break;
                }
            });
        }
    });
    let mut out = Vec::with_capacity(records.len());
    for r in results.into_inner().unwrap() {
        match r {
            Some(Ok(set)) => out.push(set),
            Some(Err(e)) => return Err(e),
            None => {}
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct AugmentationLine {
    id: String,
    #[serde(flatten)]
    set: AugmentationSet,
}

pub fn write_augmentations_jsonl(
    path: impl AsRef<Path>,
    rows: &[(String, AugmentationSet)],
) -> Result<(), AugmentError> {
    let path = path.as_ref();
    let io = |e| AugmentError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for (id, set) in rows {
        let line = serde_json::to_string(&AugmentationLine {
            id: id.clone(),
            set: set.clone(),
        })
        .expect("augmentations serialize");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_augmentations_jsonl(path: impl AsRef<Path>) -> Result<BTreeMap<String, AugmentationSet>, AugmentError> {
    let path = path.as_ref();
    let io = |e| AugmentError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(File::open(path).map_err(io)?).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let row: AugmentationLine = serde_json::from_str(&line).map_err(|e| AugmentError::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.insert(row.id, row.set);
    }
    Ok(out)
}
