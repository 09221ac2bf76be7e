use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spark_core::augment::{AugmentationKind, AugmentationSet};
use spark_core::corpus::ArgumentRecord;
use spark_core::train::grad_check_problem;
use spark_core::model::{
    backward, encode_input, forward, AttentionWeights, EncodedInput, Mode, ModelConfig, ModelParameters, Vocabulary,
    PAD,
};

fn small_config(mode: Mode, max_seq_len: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: 30,
        max_seq_len,
        model_dim: 8,
        num_layers: 2,
        num_heads: 2,
        ffn_dim: 16,
        num_cross_heads: 2,
        mode,
        dropout_rate: 0.1,
    }
}

/// Weights far from the small initialization, so leaks through padding
/// would show up in the outputs.
fn strong_params(cfg: &ModelConfig, seed: u64) -> ModelParameters {
    grad_check_problem(cfg, seed).unwrap().0
}

fn sequence(rng: &mut ChaCha8Rng, len: usize, real: usize, vocab: usize) -> (Vec<u32>, Vec<bool>) {
    let ids = (0..len)
        .map(|i| if i < real { rng.gen_range(1..vocab as u32) } else { PAD })
        .collect();
    (ids, (0..len).map(|i| i < real).collect())
}

fn random_input(rng: &mut ChaCha8Rng, cfg: &ModelConfig, len: usize) -> EncodedInput {
    let real = rng.gen_range(1..=len);
    let (seq1, mask1) = sequence(rng, len, real, cfg.vocab_size);
    let (seq2, mask2) = if cfg.mode == Mode::Dual {
        let real = rng.gen_range(0..=len);
        sequence(rng, len, real, cfg.vocab_size)
    } else {
        (Vec::new(), Vec::new())
    };
    EncodedInput {
        seq1,
        mask1,
        seq2,
        mask2,
        truncated: 0,
    }
}

fn pad_more(input: &EncodedInput, extra: usize) -> EncodedInput {
    let mut out = input.clone();
    out.seq1.extend(std::iter::repeat(PAD).take(extra));
    out.mask1.extend(std::iter::repeat(false).take(extra));
    if !out.seq2.is_empty() {
        out.seq2.extend(std::iter::repeat(PAD).take(extra));
        out.mask2.extend(std::iter::repeat(false).take(extra));
    }
    out
}

fn assert_rows_normalized(w: &AttentionWeights, key_mask: &[bool]) {
    if !key_mask.iter().any(|m| *m) {
        return;
    }
    for h in 0..w.heads {
        for q in 0..w.queries {
            let row = w.row(h, q);
            let total: f64 = row.iter().zip(key_mask).filter(|(_, m)| **m).map(|(p, _)| p).sum();
            assert!((total - 1.0).abs() <= 1e-6, "row sum {total}");
            for (p, m) in row.iter().zip(key_mask) {
                if !m {
                    assert_eq!(*p, 0.0);
                }
            }
        }
    }
}

#[test]
fn padding_invariance_and_normalization_over_100_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..100u64 {
        let mode = if trial % 4 == 3 { Mode::Single } else { Mode::Dual };
        let cfg = small_config(mode, 12);
        let params = strong_params(&cfg, trial);
        let len = rng.gen_range(2..=8);
        let input = random_input(&mut rng, &cfg, len);
        let padded = pad_more(&input, 12 - len);
        let a = forward(&params, &cfg, &input, None).unwrap();
        let b = forward(&params, &cfg, &padded, None).unwrap();
        for m in 0..3 {
            assert!((a.outputs[m] - b.outputs[m]).abs() <= 1e-6);
        }
        for w in &b.self_attention1 {
            assert_rows_normalized(w, &padded.mask1);
        }
        for w in &b.self_attention2 {
            assert_rows_normalized(w, &padded.mask2);
        }
        if let Some(w) = &b.cross_attention {
            assert_rows_normalized(w, &padded.mask2);
        }
    }
}

#[test]
fn fully_masked_evidence_gets_no_gradient() {
    let cfg = small_config(Mode::Dual, 8);
    let params = ModelParameters::init(&cfg, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut input = random_input(&mut rng, &cfg, 8);
    input.seq2 = vec![PAD; 8];
    input.mask2 = vec![false; 8];
    let (_, grads, trace) = backward(&params, &cfg, &input, &[0.3, 0.6, 0.9], None).unwrap();
    for (name, t) in grads.tensors() {
        if name.starts_with("encoder2.") || name.starts_with("cross_attn.") {
            assert!(t.data.iter().all(|g| *g == 0.0), "{name} has gradient");
        }
    }
    let cross = trace.cross_attention.unwrap();
    assert!(cross.data.iter().all(|p| *p == 0.0));
}

#[test]
fn dropout_is_seeded() {
    let cfg = small_config(Mode::Dual, 8);
    let params = ModelParameters::init(&cfg, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let input = random_input(&mut rng, &cfg, 8);
    let a = forward(&params, &cfg, &input, Some(9)).unwrap();
    let b = forward(&params, &cfg, &input, Some(9)).unwrap();
    assert_eq!(a.outputs, b.outputs);
    let off = forward(&params, &cfg, &input, None).unwrap();
    assert_ne!(a.outputs, off.outputs);
}

#[test]
fn encoders_share_nothing() {
    let cfg = small_config(Mode::Dual, 8);
    let p = ModelParameters::init(&cfg, 1).unwrap();
    let enc2 = p.encoder2.as_ref().unwrap();
    assert_ne!(p.encoder1.token_embedding, enc2.token_embedding);
    let names = p.names();
    let e1 = names.iter().filter(|n| n.starts_with("encoder1.")).count();
    let e2 = names.iter().filter(|n| n.starts_with("encoder2.")).count();
    assert_eq!(e1, e2);
    let single = ModelParameters::init(&small_config(Mode::Single, 8), 1).unwrap();
    assert!(single.encoder2.is_none() && single.cross.is_none());
}

#[test]
fn capacity_is_two_l_in_dual_and_l_in_single() {
    let long: String = (0..200).map(|i| format!("w{} ", i % 20)).collect();
    let vocab = Vocabulary::build([long.as_str()], 100).unwrap();
    let rec = ArgumentRecord::new("r", "topic", long.clone());
    let mut aug = AugmentationSet::default();
    for kind in AugmentationKind::ALL {
        aug.set(kind, long.clone());
    }
    let all: BTreeSet<AugmentationKind> = AugmentationKind::ALL.into_iter().collect();
    for l in [8, 16, 64] {
        let mut cfg = ModelConfig::new(vocab.len());
        cfg.max_seq_len = l;
        let dual = encode_input(&rec, &aug, &vocab, &cfg, &all);
        assert_eq!(dual.non_pad_slots(), 2 * l);
        assert_eq!(dual.non_pad_slots(), cfg.token_capacity());
        cfg.mode = Mode::Single;
        let single = encode_input(&rec, &aug, &vocab, &cfg, &all);
        assert_eq!(single.non_pad_slots(), l);
        assert_eq!(single.non_pad_slots(), cfg.token_capacity());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn outputs_finite_and_deterministic(seed in 0u64..10_000, len in 1usize..8) {
        let cfg = small_config(Mode::Dual, 8);
        let params = ModelParameters::init(&cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = random_input(&mut rng, &cfg, len);
        let a = forward(&params, &cfg, &input, None).unwrap();
        prop_assert!(a.outputs.iter().all(|v| v.is_finite()));
        prop_assert_eq!(a.outputs, forward(&params, &cfg, &input, None).unwrap().outputs);
    }

    #[test]
    fn pad_token_content_is_irrelevant(seed in 0u64..10_000) {
        // Masked positions may hold any id without changing the output.
        let cfg = small_config(Mode::Dual, 8);
        let params = strong_params(&cfg, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = random_input(&mut rng, &cfg, 8);
        let mut noisy = input.clone();
        for (id, m) in noisy.seq1.iter_mut().zip(&noisy.mask1) {
            if !m { *id = 7; }
        }
        for (id, m) in noisy.seq2.iter_mut().zip(&noisy.mask2) {
            if !m { *id = 9; }
        }
        let a = forward(&params, &cfg, &input, None).unwrap().outputs;
        let b = forward(&params, &cfg, &noisy, None).unwrap().outputs;
        for m in 0..3 {
            prop_assert!((a[m] - b[m]).abs() <= 1e-12);
        }
    }
}
