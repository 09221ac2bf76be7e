//! The scoring model: tokenizer, two transformer encoders fused by
//! multi-head cross-attention, a mean pooler and three regression heads.
//!
//! Everything is computed in `f64` with explicit backward passes. In single
//! mode the augmentation text is appended to the first sequence and the second
//! encoder and cross-attention do not exist.

mod checkpoint;
mod encode;
mod layers;
mod network;
mod params;
mod tensor;
mod vocab;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::augment::{AugmentationKind, AugmentationSet};
use crate::corpus::{ArgumentRecord, Dataset};

pub use checkpoint::{
    load_checkpoint, read_manifest, save_checkpoint, Checkpoint, Manifest, Moments, TensorEntry, FORMAT_VERSION,
    MANIFEST, VOCAB_FILE,
};
pub use encode::{encode_input, marker};
pub use layers::AttentionWeights;
pub use network::{backward, forward, head_loss, EncodedInput, ForwardTrace};
pub use params::{
    AttentionParams, EncoderLayerParams, EncoderParams, HeadParams, LayerNormParams, Mode, ModelConfig,
    ModelParameters, HEAD_NAMES,
};
pub use tensor::Tensor;
pub use vocab::{tokenize, Vocabulary, AS, CA, CLS, FB, PAD, RESERVED, SEP, SQ, UNK};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("vocabulary hash mismatch: expected {expected}, found {found}")]
    VocabMismatch { expected: String, found: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Vocabulary over every topic, argument and augmentation text.
pub fn build_vocab(
    dataset: &Dataset,
    augmentations: &BTreeMap<String, AugmentationSet>,
    max_size: usize,
) -> Result<Vocabulary, ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let mut texts: Vec<&str> = Vec::new();
    for r in &dataset.records {
        texts.push(&r.topic);
        texts.push(&r.argument);
        if let Some(a) = augmentations.get(&r.id) {
            texts.extend(AugmentationKind::ALL.iter().filter_map(|k| a.get(*k)));
        }
    }
    Vocabulary::build(texts, max_size)
}

/// Head outputs on the normalized scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// Unclamped outputs, used for correlations.
    pub raw: [f64; 3],
    /// Outputs clamped to [0,1], used for reporting.
    pub clamped: [f64; 3],
}

impl Prediction {
    pub fn from_raw(raw: [f64; 3]) -> Self {
        Self {
            raw,
            clamped: raw.map(|v| v.clamp(0.0, 1.0)),
        }
    }

    /// Mean of the three unclamped outputs.
    pub fn wa(&self) -> f64 {
        self.raw.iter().sum::<f64>() / 3.0
    }
}

/// Deterministic scoring of one record (dropout off).
pub fn predict(
    params: &ModelParameters,
    config: &ModelConfig,
    vocab: &Vocabulary,
    record: &ArgumentRecord,
    aug: &AugmentationSet,
    active_kinds: &BTreeSet<AugmentationKind>,
) -> Result<Prediction, ModelError> {
    let input = encode_input(record, aug, vocab, config, active_kinds);
    let trace = forward(params, config, &input, None)?;
    Ok(Prediction::from_raw(trace.outputs))
}
