//! Browser bindings for the demo page: render augmentation prompts, compute
//! correlations, and show cross-attention weights of a small random model.
//!
//! The `*_json` functions hold the logic and are plain Rust so they can be
//! tested natively; the `#[wasm_bindgen]` wrappers only convert errors.

use std::collections::BTreeSet;

use serde::Serialize;
use spark_core::augment::{bundled_exemplars, render_prompt, AugmentationKind, AugmentationSet};
use spark_core::corpus::{ArgumentRecord, Dataset, QualityScores};
use spark_core::eval::{pearson, spearman};
use spark_core::model::{build_vocab, encode_input, forward, ModelConfig, ModelParameters};
use wasm_bindgen::prelude::*;

/// Prompt text for one kind. Scores are only read for `similar_quality`.
pub fn prompt_text(
    kind: &str,
    topic: &str,
    argument: &str,
    scores: [f64; 3],
) -> Result<String, String> {
    let kind: AugmentationKind = kind.parse().map_err(|e| format!("{e}"))?;
    let mut record = ArgumentRecord::new("demo", topic, argument);
    let exemplars = bundled_exemplars();
    let ex = if kind == AugmentationKind::SimilarQuality {
        let labels = QualityScores::new(scores[0], scores[1], scores[2]).map_err(|e| e.to_string())?;
        record = record.with_labels(labels);
        Some(exemplars.as_slice())
    } else {
        None
    };
    render_prompt(kind, &record, ex).map_err(|e| e.to_string())
}

fn parse_numbers(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("not a number: `{s}`")))
        .collect()
}

#[derive(Serialize)]
struct CorrelationResult {
    n: usize,
    pearson: Option<f64>,
    spearman: Option<f64>,
}

/// Pearson and Spearman of two comma- or space-separated number lists, as
/// JSON. Zero-variance input yields `null`.
pub fn correlations_json(x: &str, y: &str) -> Result<String, String> {
    let (x, y) = (parse_numbers(x)?, parse_numbers(y)?);
    if x.len() != y.len() {
        return Err(format!("lists differ in length: {} vs {}", x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err("need at least two pairs".into());
    }
    let out = CorrelationResult {
        n: x.len(),
        pearson: pearson(&x, &y).ok(),
        spearman: spearman(&x, &y).ok(),
    };
    Ok(serde_json::to_string(&out).expect("serializes"))
}

#[derive(Serialize)]
struct AttentionView {
    queries: Vec<String>,
    keys: Vec<String>,
    /// `heads × queries × keys`, rows over real tokens only.
    weights: Vec<Vec<Vec<f64>>>,
    outputs: [f64; 3],
}

/// Cross-attention of a freshly initialised dual model: queries are the
/// topic/argument tokens, keys the feedback text. Untrained, so the pattern
/// only illustrates the mechanics.
pub fn cross_attention_json(topic: &str, argument: &str, feedback: &str, seed: u64) -> Result<String, String> {
    if feedback.trim().is_empty() {
        return Err("feedback text is empty".into());
    }
    let record = ArgumentRecord::new("demo", topic, argument);
    let mut aug = AugmentationSet::default();
    aug.set(AugmentationKind::Feedback, feedback);
    let dataset = Dataset::from_records(vec![record.clone()]).map_err(|e| e.to_string())?;
    let augs = [("demo".to_string(), aug.clone())].into();
    let vocab = build_vocab(&dataset, &augs, 2000).map_err(|e| e.to_string())?;
    let mut cfg = ModelConfig::new(vocab.len());
    cfg.max_seq_len = 48;
    cfg.model_dim = 16;
    cfg.num_layers = 1;
    cfg.num_heads = 2;
    cfg.num_cross_heads = 2;
    cfg.ffn_dim = 32;
    let params = ModelParameters::init(&cfg, seed).map_err(|e| e.to_string())?;
    let kinds: BTreeSet<_> = [AugmentationKind::Feedback].into();
    let input = encode_input(&record, &aug, &vocab, &cfg, &kinds);
    let trace = forward(&params, &cfg, &input, None).map_err(|e| e.to_string())?;
    let cross = trace.cross_attention.ok_or("model has no cross-attention")?;

    let label = |id: &u32| vocab.token(*id).unwrap_or("?").to_string();
    let nq = input.mask1.iter().filter(|m| **m).count();
    let nk = input.mask2.iter().filter(|m| **m).count();
    let weights = (0..cross.heads)
        .map(|h| (0..nq).map(|q| cross.row(h, q)[..nk].to_vec()).collect())
        .collect();
    let view = AttentionView {
        queries: input.seq1[..nq].iter().map(label).collect(),
        keys: input.seq2[..nk].iter().map(label).collect(),
        weights,
        outputs: trace.outputs,
    };
    Ok(serde_json::to_string(&view).expect("serializes"))
}

#[wasm_bindgen(js_name = renderPrompt)]
pub fn render_prompt_js(
    kind: &str,
    topic: &str,
    argument: &str,
    cogency: f64,
    effectiveness: f64,
    reasonableness: f64,
) -> Result<String, JsError> {
    prompt_text(kind, topic, argument, [cogency, effectiveness, reasonableness]).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn correlations(x: &str, y: &str) -> Result<String, JsError> {
    correlations_json(x, y).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = crossAttention)]
pub fn cross_attention(topic: &str, argument: &str, feedback: &str, seed: u32) -> Result<String, JsError> {
    cross_attention_json(topic, argument, feedback, seed as u64).map_err(|e| JsError::new(&e))
}
