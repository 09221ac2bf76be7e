//! Training loop, similar-quality masking, Adam, and gradient checking.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{AugmentationKind, AugmentationSet};
use crate::corpus::{ArgumentRecord, Dataset, Split};
use crate::eval::{evaluate, EvalError, EvalTarget};
use crate::model::{
    backward, encode_input, forward, head_loss, EncodedInput, ModelConfig, ModelError, ModelParameters, Moments,
    Vocabulary, UNK,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite input to loss")]
    NonFiniteInput,
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64, diagnostic: String },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("no labelled training records")]
    NoTrainingData,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
}

fn d_gamma() -> f64 {
    0.5
}
fn d_batch() -> usize {
    8
}
fn d_lr() -> f64 {
    1e-3
}
fn d_epochs() -> usize {
    10
}
fn d_opt() -> Optimizer {
    Optimizer::Adam
}
fn d_betas() -> (f64, f64) {
    (0.9, 0.999)
}
fn d_eps() -> f64 {
    1e-8
}
fn d_clip() -> f64 {
    1.0
}
fn d_kinds() -> BTreeSet<AugmentationKind> {
    AugmentationKind::ALL.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_opt")]
    pub optimizer: Optimizer,
    #[serde(default = "d_betas")]
    pub adam_betas: (f64, f64),
    #[serde(default = "d_eps")]
    pub adam_eps: f64,
    #[serde(default = "d_clip")]
    pub grad_clip_norm: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "d_kinds")]
    pub active_kinds: BTreeSet<AugmentationKind>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: d_gamma(),
            batch_size: d_batch(),
            learning_rate: d_lr(),
            epochs: d_epochs(),
            optimizer: d_opt(),
            adam_betas: d_betas(),
            adam_eps: d_eps(),
            grad_clip_norm: d_clip(),
            rng_seed: 0,
            active_kinds: d_kinds(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0,1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !(self.grad_clip_norm > 0.0) || !(self.adam_eps > 0.0) {
            return bad("learning_rate, grad_clip_norm and adam_eps must be positive");
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return bad("adam betas must lie in [0,1)");
        }
        Ok(())
    }
}

/// Mean squared error over the three heads.
pub fn loss(predictions: &[f64; 3], target: &[f64; 3]) -> Result<f64, TrainError> {
    if predictions.iter().chain(target).any(|v| !v.is_finite()) {
        return Err(TrainError::NonFiniteInput);
    }
    Ok(head_loss(predictions, target))
}

/// Keep the similar-quality text with probability `gamma`, drop it
/// otherwise. Consumes exactly one uniform draw; other kinds pass through.
pub fn apply_masking<R: Rng + ?Sized>(aug: &AugmentationSet, gamma: f64, rng: &mut R) -> AugmentationSet {
    let u: f64 = rng.gen();
    let mut out = aug.clone();
    if u >= gamma {
        out.clear(AugmentationKind::SimilarQuality);
    }
    out
}

/// Scale gradients so their global L2 norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_grad_norm(grads: &mut ModelParameters, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Adam moments plus step counter. Parameters and moments are rounded to
/// f32 after every update so checkpoints store them exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub moments: Moments,
}

impl AdamState {
    pub fn new(params: &ModelParameters) -> Self {
        Self {
            step: 0,
            moments: Moments {
                first: params.zeros_like(),
                second: params.zeros_like(),
            },
        }
    }

    pub fn update(&mut self, params: &mut ModelParameters, grads: &ModelParameters, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = cfg.adam_betas;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let m_all = self.moments.first.tensors_mut();
        let v_all = self.moments.second.tensors_mut();
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(m_all)
            .zip(v_all)
        {
            for i in 0..p.data.len() {
                let gi = g.1.data[i];
                m.data[i] = (b1 * m.data[i] + (1.0 - b1) * gi) as f32 as f64;
                v.data[i] = (b2 * v.data[i] + (1.0 - b2) * gi * gi) as f32 as f64;
                let step = cfg.learning_rate * (m.data[i] / c1) / ((v.data[i] / c2).sqrt() + cfg.adam_eps);
                p.data[i] = (p.data[i] - step) as f32 as f64;
            }
        }
    }
}

/// Positions of the three RNG streams, enough to resume them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngStreams {
    pub seed: u64,
    pub shuffle_word_pos: String,
    pub masking_word_pos: String,
    pub dropout_word_pos: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub step: u64,
    pub epoch: usize,
    /// Mean training loss per epoch (dropout and masking active).
    pub loss_history: Vec<f64>,
    /// Mean dev Spearman per epoch; `None` without a usable dev split.
    pub dev_spearman_history: Vec<Option<f64>>,
    pub best_epoch: Option<usize>,
    pub rng: RngStreams,
}

impl TrainState {
    pub fn best_dev_spearman(&self) -> Option<f64> {
        self.best_epoch.and_then(|e| self.dev_spearman_history.get(e).copied().flatten())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        let path = path.as_ref();
        let body = serde_json::to_string_pretty(self).expect("train state serializes");
        fs::write(path, body + "\n").map_err(|e| TrainError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| TrainError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| TrainError::InvalidConfig(e.to_string()))
    }
}

pub struct TrainData<'a> {
    pub dataset: &'a Dataset,
    pub augmentations: &'a BTreeMap<String, AugmentationSet>,
    pub vocab: &'a Vocabulary,
}

pub struct TrainOutcome {
    pub params: ModelParameters,
    pub state: TrainState,
    pub optimizer: AdamState,
}

/// Normalized training target: the three scores, or a WA label repeated.
pub fn target_of(record: &ArgumentRecord) -> Option<[f64; 3]> {
    record
        .labels
        .map(|q| q.normalized())
        .or_else(|| record.wa_label.map(|w| [w; 3]))
}

const SHUFFLE_STREAM: u64 = 0;
const MASKING_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

struct Example<'a> {
    record: &'a ArgumentRecord,
    target: [f64; 3],
}

fn batch_gradients(
    params: &ModelParameters,
    config: &ModelConfig,
    jobs: &[(EncodedInput, [f64; 3], Option<u64>)],
) -> Result<Vec<(f64, ModelParameters)>, ModelError> {
    let run = |(input, target, seed): &(EncodedInput, [f64; 3], Option<u64>)| {
        backward(params, config, input, target, *seed).map(|(l, g, _)| (l, g))
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        jobs.iter().map(run).collect()
    }
}

/// Mean loss over records with dropout off and no masking.
pub fn dataset_loss(
    params: &ModelParameters,
    config: &ModelConfig,
    data: &TrainData<'_>,
    records: &[&ArgumentRecord],
    active_kinds: &BTreeSet<AugmentationKind>,
) -> Result<f64, ModelError> {
    let empty = AugmentationSet::default();
    let mut total = 0.0;
    let mut n = 0usize;
    for r in records {
        let Some(target) = target_of(r) else { continue };
        let aug = data.augmentations.get(&r.id).unwrap_or(&empty);
        let input = encode_input(r, aug, data.vocab, config, active_kinds);
        let out = forward(params, config, &input, None)?.outputs;
        total += head_loss(&out, &target);
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

/// Minibatch Adam training with per-visit similar-quality masking. The
/// parameters of the best dev epoch (mean Spearman) are returned; without a
/// dev split, the final parameters.
pub fn train(
    params: &ModelParameters,
    config: &ModelConfig,
    tcfg: &TrainConfig,
    data: &TrainData<'_>,
) -> Result<TrainOutcome, TrainError> {
    tcfg.validate()?;
    config.validate()?;
    let examples: Vec<Example> = data
        .dataset
        .split(Split::Train)
        .into_iter()
        .filter_map(|r| target_of(r).map(|t| Example { record: r, target: t }))
        .collect();

    let mut shuffle_rng = stream(tcfg.rng_seed, SHUFFLE_STREAM);
    let mut masking_rng = stream(tcfg.rng_seed, MASKING_STREAM);
    let mut dropout_rng = stream(tcfg.rng_seed, DROPOUT_STREAM);
    let mut current = params.clone();
    let mut optimizer = AdamState::new(params);
    let mut state = TrainState {
        step: 0,
        epoch: 0,
        loss_history: Vec::new(),
        dev_spearman_history: Vec::new(),
        best_epoch: None,
        rng: RngStreams {
            seed: tcfg.rng_seed,
            shuffle_word_pos: "0".into(),
            masking_word_pos: "0".into(),
            dropout_word_pos: "0".into(),
        },
    };
    if tcfg.epochs == 0 {
        return Ok(TrainOutcome {
            params: current,
            state,
            optimizer,
        });
    }
    if examples.is_empty() {
        return Err(TrainError::NoTrainingData);
    }
    let has_dev = !data.dataset.split(Split::Dev).is_empty();
    let mut best: Option<(f64, ModelParameters)> = None;
    let empty = AugmentationSet::default();
    let use_dropout = config.dropout_rate > 0.0;

    for epoch in 0..tcfg.epochs {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(tcfg.batch_size) {
            let jobs: Vec<(EncodedInput, [f64; 3], Option<u64>)> = batch
                .iter()
                .map(|&i| {
                    let ex = &examples[i];
                    let aug = data.augmentations.get(&ex.record.id).unwrap_or(&empty);
                    let masked = apply_masking(aug, tcfg.gamma, &mut masking_rng);
                    let input = encode_input(ex.record, &masked, data.vocab, config, &tcfg.active_kinds);
                    let seed = dropout_rng.next_u64();
                    (input, ex.target, use_dropout.then_some(seed))
                })
                .collect();
            let results = batch_gradients(&current, config, &jobs)?;
            let mut grads = current.zeros_like();
            let mut batch_loss = 0.0;
            for (l, g) in &results {
                batch_loss += l;
                grads.add_assign(g);
            }
            let inv = 1.0 / results.len() as f64;
            grads.scale(inv);
            batch_loss *= inv;
            if !batch_loss.is_finite() || !grads.is_finite() {
                let ids: Vec<&str> = batch.iter().map(|&i| examples[i].record.id.as_str()).collect();
                let diagnostic = serde_json::json!({
                    "step": optimizer.step,
                    "epoch": epoch,
                    "batch_ids": ids,
                    "batch_loss": batch_loss.to_string(),
                    "param_norm": current.global_norm().to_string(),
                    "grad_norm": grads.global_norm().to_string(),
                })
                .to_string();
                return Err(TrainError::NonFiniteLoss {
                    step: optimizer.step,
                    diagnostic,
                });
            }
            clip_grad_norm(&mut grads, tcfg.grad_clip_norm);
            optimizer.update(&mut current, &grads, tcfg);
            if !current.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    step: optimizer.step,
                    diagnostic: "parameters became non-finite after update".into(),
                });
            }
            epoch_loss += batch_loss * results.len() as f64;
        }
        state.loss_history.push(epoch_loss / examples.len() as f64);
        state.epoch = epoch + 1;
        state.step = optimizer.step;

        let dev = if has_dev {
            let target = EvalTarget {
                name: "dev",
                dataset: data.dataset,
                augmentations: data.augmentations,
                split: Split::Dev,
            };
            evaluate(&current, config, data.vocab, &target, &tcfg.active_kinds)?.mean_spearman()
        } else {
            None
        };
        state.dev_spearman_history.push(dev);
        if let Some(s) = dev {
            if best.as_ref().map_or(true, |(b, _)| s > *b) {
                best = Some((s, current.clone()));
                state.best_epoch = Some(epoch);
            }
        }
        log::debug!(
            "epoch {} loss {:.6} dev {:?}",
            epoch + 1,
            state.loss_history[epoch],
            dev
        );
    }
    state.rng.shuffle_word_pos = shuffle_rng.get_word_pos().to_string();
    state.rng.masking_word_pos = masking_rng.get_word_pos().to_string();
    state.rng.dropout_word_pos = dropout_rng.get_word_pos().to_string();
    let params = match best {
        Some((_, p)) => p,
        None => {
            state.best_epoch = Some(tcfg.epochs - 1);
            current
        }
    };
    Ok(TrainOutcome {
        params,
        state,
        optimizer,
    })
}

/// Per-tensor outcome of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub values: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub tolerance: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.tensors.iter().filter(|t| !t.passed).map(|t| t.name.as_str()).collect()
    }

    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }
}

/// Gradients below this magnitude are compared absolutely rather than
/// relatively.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Random parameters and a random partially padded example for `config`.
pub fn grad_check_problem(config: &ModelConfig, seed: u64) -> Result<(ModelParameters, EncodedInput, [f64; 3]), TrainError> {
    let mut params = ModelParameters::init(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let weights = Normal::new(0.0, 0.3).expect("normal");
    let names = params.names();
    for (name, t) in names.iter().zip(params.tensors_mut()) {
        for v in &mut t.data {
            let noise = weights.sample(&mut rng);
            *v = if name.ends_with("gamma") { 1.0 + noise / 3.0 } else { noise };
        }
    }
    let l = config.max_seq_len;
    let vocab = config.vocab_size as u32;
    let mut seq = |len: usize| -> (Vec<u32>, Vec<bool>) {
        let ids: Vec<u32> = (0..l)
            .map(|i| if i < len { rng.gen_range(UNK..vocab) } else { 0 })
            .collect();
        let mask = (0..l).map(|i| i < len).collect();
        (ids, mask)
    };
    let (seq1, mask1) = seq((l * 3 / 4).max(1));
    let (seq2, mask2) = match config.mode {
        crate::model::Mode::Dual => seq((l / 2).max(1)),
        crate::model::Mode::Single => (Vec::new(), Vec::new()),
    };
    let target = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
    Ok((
        params,
        EncodedInput {
            seq1,
            mask1,
            seq2,
            mask2,
            truncated: 0,
        },
        target,
    ))
}

/// Compare analytic gradients against central differences.
pub fn compare_gradients(
    params: &ModelParameters,
    analytic: &ModelParameters,
    config: &ModelConfig,
    input: &EncodedInput,
    target: &[f64; 3],
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport, TrainError> {
    let names = params.names();
    let mut probe = params.clone();
    let mut tensors = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        let len = probe.tensors_mut()[ti].len();
        let grad = &analytic.tensors()[ti].1.data;
        let mut max_abs: f64 = 0.0;
        let mut max_rel: f64 = 0.0;
        for i in 0..len {
            let orig = probe.tensors_mut()[ti].data[i];
            probe.tensors_mut()[ti].data[i] = orig + epsilon;
            let up = head_loss(&forward(&probe, config, input, None)?.outputs, target);
            probe.tensors_mut()[ti].data[i] = orig - epsilon;
            let down = head_loss(&forward(&probe, config, input, None)?.outputs, target);
            probe.tensors_mut()[ti].data[i] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let abs = (grad[i] - numeric).abs();
            let rel = abs / grad[i].abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
        }
        tensors.push(TensorCheck {
            name: name.clone(),
            values: len,
            max_abs_error: max_abs,
            max_rel_error: max_rel,
            passed: max_rel < tolerance,
        });
    }
    Ok(GradCheckReport {
        epsilon,
        tolerance,
        tensors,
    })
}

/// Finite-difference check of `backward` on a random example, dropout off.
pub fn grad_check(config: &ModelConfig, epsilon: f64, tolerance: f64, seed: u64) -> Result<GradCheckReport, TrainError> {
    grad_check_with(config, epsilon, tolerance, seed, |_| {})
}

/// As [`grad_check`], letting the caller tamper with the analytic gradients
/// first (fault injection).
pub fn grad_check_with(
    config: &ModelConfig,
    epsilon: f64,
    tolerance: f64,
    seed: u64,
    tamper: impl FnOnce(&mut ModelParameters),
) -> Result<GradCheckReport, TrainError> {
    let mut config = config.clone();
    config.dropout_rate = 0.0;
    config.validate()?;
    let (params, input, target) = grad_check_problem(&config, seed)?;
    let (_, mut grads, _) = backward(&params, &config, &input, &target, None)?;
    tamper(&mut grads);
    compare_gradients(&params, &grads, &config, &input, &target, epsilon, tolerance)
}

/// The small configuration used for gradient checks.
pub fn grad_check_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 24,
        max_seq_len: 8,
        model_dim: 8,
        num_layers: 1,
        num_heads: 2,
        ffn_dim: 16,
        num_cross_heads: 2,
        mode: crate::model::Mode::Dual,
        dropout_rate: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_examples() {
        assert_eq!(loss(&[0.2, 0.4, 0.6], &[0.2, 0.4, 0.6]).unwrap(), 0.0);
        assert_eq!(loss(&[1.0; 3], &[0.0; 3]).unwrap(), 1.0);
        assert!((loss(&[0.5, 0.0, 0.0], &[0.0; 3]).unwrap() - 0.25 / 3.0).abs() < 1e-15);
        assert!(matches!(loss(&[f64::NAN, 0.0, 0.0], &[0.0; 3]), Err(TrainError::NonFiniteInput)));
    }

    fn full_set() -> AugmentationSet {
        let mut a = AugmentationSet::default();
        a.set(AugmentationKind::Feedback, "- fb");
        a.set(AugmentationKind::Assumptions, "No assumptions");
        a.set(AugmentationKind::SimilarQuality, "similar");
        a.set(AugmentationKind::CounterArgument, "counter");
        a
    }

    #[test]
    fn masking_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = full_set();
        for _ in 0..500 {
            assert!(apply_masking(&a, 0.0, &mut rng).similar_quality.is_none());
            assert!(apply_masking(&a, 1.0, &mut rng).similar_quality.is_some());
        }
    }

    #[test]
    fn masking_touches_only_similar_quality() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = full_set();
        for _ in 0..50 {
            let m = apply_masking(&a, 0.5, &mut rng);
            assert_eq!(m.feedback, a.feedback);
            assert_eq!(m.assumptions, a.assumptions);
            assert_eq!(m.counter_argument, a.counter_argument);
            assert_eq!(m.empty_assumptions, a.empty_assumptions);
        }
    }

    #[test]
    fn masking_uses_one_draw() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        apply_masking(&full_set(), 0.5, &mut a);
        let _: f64 = b.gen();
        assert_eq!(a.get_word_pos(), b.get_word_pos());
    }

    #[test]
    fn clipping_bounds_norm() {
        let cfg = grad_check_config();
        let mut g = ModelParameters::init(&cfg, 0).unwrap();
        g.scale(100.0);
        let before = clip_grad_norm(&mut g, 1.0);
        assert!(before > 1.0);
        assert!(g.global_norm() <= 1.0 + 1e-9);
        let mut small = ModelParameters::init(&cfg, 0).unwrap();
        small.scale(1e-3);
        let copy = small.clone();
        clip_grad_norm(&mut small, 1.0);
        assert_eq!(small, copy);
    }

    #[test]
    fn config_json_uses_field_names() {
        let cfg = TrainConfig::default();
        let v = serde_json::to_value(&cfg).unwrap();
        for key in [
            "gamma",
            "batch_size",
            "learning_rate",
            "epochs",
            "optimizer",
            "adam_betas",
            "adam_eps",
            "grad_clip_norm",
            "rng_seed",
            "active_kinds",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let back: TrainConfig = serde_json::from_value(v).unwrap();
        assert_eq!(back, cfg);
        let partial: TrainConfig = serde_json::from_str(r#"{"epochs": 3, "gamma": 0.25}"#).unwrap();
        assert_eq!(partial.epochs, 3);
        assert_eq!(partial.batch_size, 8);
    }

    #[test]
    fn invalid_configs() {
        let mut c = TrainConfig::default();
        c.gamma = 1.5;
        assert!(c.validate().is_err());
        c.gamma = 0.5;
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn fault_injection_flags_only_tampered_tensor() {
        let report = grad_check_with(&grad_check_config(), 1e-4, 1e-4, 5, |g| {
            g.heads[0].weight.scale(1.1);
        })
        .unwrap();
        assert_eq!(report.failures(), vec!["heads.cogency.weight"]);
    }

    #[test]
    fn grad_check_is_deterministic() {
        let a = grad_check(&grad_check_config(), 1e-4, 1e-4, 9).unwrap();
        let b = grad_check(&grad_check_config(), 1e-4, 1e-4, 9).unwrap();
        assert_eq!(a, b);
    }
}
