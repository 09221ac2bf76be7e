//! Acceptance criteria 1–10, one PASS/FAIL line each. Runs without the test
//! harness so the lines always reach stdout; exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spark_core::augment::{
    bundled_exemplars, generate, mock_provider, read_augmentations_jsonl, render_prompt, write_augmentations_jsonl,
    AugmentCache, AugmentationKind, AugmentationSet,
};
use spark_core::corpus::{
    assign_splits, load_jsonl, write_dataset, ArgumentRecord, Dataset, DatasetFormat, QualityScores,
};
use spark_core::eval::{pearson, spearman};
use spark_core::model::{
    build_vocab, encode_input, forward, load_checkpoint, save_checkpoint, EncodedInput, Mode, ModelConfig,
    ModelParameters, Vocabulary, PAD,
};
use spark_core::synth::{memorization_set, synth_corpus, SynthConfig};
use spark_core::train::{
    apply_masking, dataset_loss, grad_check, grad_check_config, grad_check_problem, train, TrainConfig, TrainData,
};

type Check = Result<String, String>;

fn spark() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spark"))
}

// 1 ──────────────────────────────────────────────────────────────────────
fn gradient_correctness() -> Check {
    let cfg = grad_check_config();
    if (cfg.model_dim, cfg.max_seq_len, cfg.num_layers, cfg.num_heads, cfg.mode) != (8, 8, 1, 2, Mode::Dual) {
        return Err(format!("unexpected grad-check config {cfg:?}"));
    }
    let start = Instant::now();
    let report = grad_check(&cfg, 1e-4, 1e-4, 0).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let detail = format!(
        "{} tensors, max rel err {:.2e} (< 1e-4), {:.2?}",
        report.tensors.len(),
        report.max_rel_error(),
        elapsed
    );
    if report.passed() && elapsed < Duration::from_secs(60) {
        Ok(detail)
    } else {
        Err(format!("{detail}; failing: {:?}", report.failures()))
    }
}

// 2 ──────────────────────────────────────────────────────────────────────
fn random_input(rng: &mut ChaCha8Rng, cfg: &ModelConfig, len: usize) -> EncodedInput {
    let mut seq = |real: usize| -> (Vec<u32>, Vec<bool>) {
        let ids = (0..len)
            .map(|i| if i < real { rng.gen_range(1..cfg.vocab_size as u32) } else { PAD })
            .collect();
        (ids, (0..len).map(|i| i < real).collect())
    };
    let r1 = 1 + (len - 1) / 2;
    let (seq1, mask1) = seq(r1);
    let (seq2, mask2) = if cfg.mode == Mode::Dual { seq(len / 3) } else { (vec![], vec![]) };
    EncodedInput {
        seq1,
        mask1,
        seq2,
        mask2,
        truncated: 0,
    }
}

fn padding_and_normalization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_out: f64 = 0.0;
    let mut worst_row: f64 = 0.0;
    for trial in 0..100u64 {
        let cfg = ModelConfig {
            vocab_size: 40,
            max_seq_len: 16,
            model_dim: 8,
            num_layers: 2,
            num_heads: 2,
            ffn_dim: 16,
            num_cross_heads: 2,
            mode: if trial % 5 == 4 { Mode::Single } else { Mode::Dual },
            dropout_rate: 0.0,
        };
        let (params, _, _) = grad_check_problem(&cfg, trial).map_err(|e| e.to_string())?;
        let len = rng.gen_range(2..=10);
        let short = random_input(&mut rng, &cfg, len);
        let mut long = short.clone();
        let extra = rng.gen_range(1..=16 - len);
        long.seq1.extend(vec![PAD; extra]);
        long.mask1.extend(vec![false; extra]);
        if cfg.mode == Mode::Dual {
            long.seq2.extend(vec![PAD; extra]);
            long.mask2.extend(vec![false; extra]);
        }
        let a = forward(&params, &cfg, &short, None).map_err(|e| e.to_string())?;
        let b = forward(&params, &cfg, &long, None).map_err(|e| e.to_string())?;
        for m in 0..3 {
            worst_out = worst_out.max((a.outputs[m] - b.outputs[m]).abs());
        }
        let mut maps: Vec<(&spark_core::model::AttentionWeights, &[bool])> =
            b.self_attention1.iter().map(|w| (w, long.mask1.as_slice())).collect();
        maps.extend(b.self_attention2.iter().map(|w| (w, long.mask2.as_slice())));
        if let Some(w) = &b.cross_attention {
            maps.push((w, long.mask2.as_slice()));
        }
        for (w, keys) in maps {
            if !keys.iter().any(|k| *k) {
                continue;
            }
            for h in 0..w.heads {
                for q in 0..w.queries {
                    let s: f64 = w.row(h, q).iter().zip(keys).filter(|(_, k)| **k).map(|(p, _)| p).sum();
                    worst_row = worst_row.max((s - 1.0).abs());
                }
            }
        }
    }
    let detail = format!("max output change {worst_out:.1e} (<= 1e-6), max row-sum error {worst_row:.1e} (<= 1e-6)");
    if worst_out <= 1e-6 && worst_row <= 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 3 ──────────────────────────────────────────────────────────────────────
fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum::<f64>().sqrt();
    let sy: f64 = y.iter().map(|b| (b - my).powi(2)).sum::<f64>().sqrt();
    cov / (sx * sy)
}

fn oracle_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|a| {
            let less = v.iter().filter(|b| *b < a).count() as f64;
            let eq = v.iter().filter(|b| *b == a).count() as f64;
            1.0 + less + (eq - 1.0) / 2.0
        })
        .collect()
}

fn metric_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for i in 0..1000 {
        let n = rng.gen_range(2..=50);
        let ties = i % 2 == 1;
        let mut draw = || -> Vec<f64> {
            (0..n)
                .map(|_| if ties { rng.gen_range(0..5) as f64 } else { rng.gen_range(-10.0..10.0) })
                .collect()
        };
        let (x, y) = (draw(), draw());
        let (Ok(p), Ok(s)) = (pearson(&x, &y), spearman(&x, &y)) else {
            continue;
        };
        worst = worst.max((p - oracle_pearson(&x, &y)).abs());
        worst = worst.max((s - oracle_pearson(&oracle_ranks(&x), &oracle_ranks(&y))).abs());
        compared += 1;
    }
    let exact = spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).map_err(|e| e.to_string())?;
    let detail = format!("{compared} vectors, max deviation {worst:.1e} (<= 1e-12), spearman example = {exact}");
    if worst <= 1e-12 && exact == 0.6 && compared >= 950 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 4 ──────────────────────────────────────────────────────────────────────
fn masking_statistics() -> Check {
    let mut aug = AugmentationSet::default();
    aug.set(AugmentationKind::SimilarQuality, "a similar argument");
    aug.set(AugmentationKind::Feedback, "- fine");
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let kept = |g: f64, rng: &mut ChaCha8Rng| {
        (0..10_000)
            .filter(|_| apply_masking(&aug, g, rng).similar_quality.is_some())
            .count()
    };
    let half = kept(0.5, &mut rng) as f64 / 10_000.0;
    let zero = kept(0.0, &mut rng);
    let one = kept(1.0, &mut rng);
    let detail = format!("γ=0.5 keep {half:.4} (in [0.485, 0.515]), γ=0 kept {zero}, γ=1 kept {one}/10000");
    if (0.485..=0.515).contains(&half) && zero == 0 && one == 10_000 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 5 ──────────────────────────────────────────────────────────────────────
fn prompt_goldens() -> Check {
    let golden_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden");
    let record = ArgumentRecord::new(
        "golden-1",
        "Should cities ban cars from downtown areas?",
        "Car-free centres cut pollution and make streets safer for people on foot",
    )
    .with_labels(QualityScores::new(3.0, 4.0, 2.5).unwrap());
    let ex = bundled_exemplars();
    let mut mismatched = Vec::new();
    for kind in AugmentationKind::ALL {
        let exemplars = (kind == AugmentationKind::SimilarQuality).then_some(ex.as_slice());
        let rendered = render_prompt(kind, &record, exemplars).map_err(|e| e.to_string())?;
        let path = golden_dir.join(format!("{}.txt", kind.as_str()));
        let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        if rendered != expected {
            mismatched.push(kind.as_str());
        }
    }
    if mismatched.is_empty() {
        Ok(format!("4/4 kinds byte-identical, {} exemplars", ex.len()))
    } else {
        Err(format!("mismatch: {mismatched:?}"))
    }
}

// 6 ──────────────────────────────────────────────────────────────────────
fn capacity() -> Check {
    let text: String = (0..300).map(|i| format!("t{} ", i % 30)).collect();
    let vocab = Vocabulary::build([text.as_str()], 100).map_err(|e| e.to_string())?;
    let rec = ArgumentRecord::new("c", "topic", text.clone());
    let mut aug = AugmentationSet::default();
    for kind in AugmentationKind::ALL {
        aug.set(kind, text.clone());
    }
    let all: BTreeSet<_> = AugmentationKind::ALL.into_iter().collect();
    let mut lines = Vec::new();
    for l in [8, 32, 128] {
        let mut cfg = ModelConfig::new(vocab.len());
        cfg.max_seq_len = l;
        let dual = encode_input(&rec, &aug, &vocab, &cfg, &all).non_pad_slots();
        cfg.mode = Mode::Single;
        let single = encode_input(&rec, &aug, &vocab, &cfg, &all).non_pad_slots();
        if dual != 2 * l || single != l {
            return Err(format!("L={l}: dual {dual}, single {single}"));
        }
        lines.push(format!("L={l}: {dual} vs {single}"));
    }
    Ok(lines.join(", "))
}

// 7 ──────────────────────────────────────────────────────────────────────
fn memorization() -> Check {
    let (ds, augs) = memorization_set(16, 7);
    let vocab = build_vocab(&ds, &augs, 1000).map_err(|e| e.to_string())?;
    let mut cfg = ModelConfig::new(vocab.len());
    cfg.max_seq_len = 32;
    cfg.model_dim = 32;
    cfg.num_layers = 1;
    cfg.num_heads = 2;
    cfg.num_cross_heads = 2;
    cfg.ffn_dim = 64;
    let tcfg = TrainConfig {
        epochs: 200,
        rng_seed: 7,
        ..TrainConfig::default()
    };
    let data = TrainData {
        dataset: &ds,
        augmentations: &augs,
        vocab: &vocab,
    };
    let start = Instant::now();
    let params = ModelParameters::init(&cfg, 7).map_err(|e| e.to_string())?;
    let out = train(&params, &cfg, &tcfg, &data).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let records: Vec<&ArgumentRecord> = ds.records.iter().collect();
    let mse = dataset_loss(&out.params, &cfg, &data, &records, &tcfg.active_kinds).map_err(|e| e.to_string())?;
    let detail = format!("16 examples, 200 epochs, dropout {}: train MSE {mse:.2e} (< 0.01), {elapsed:.2?}", cfg.dropout_rate);
    if mse < 0.01 && elapsed < Duration::from_secs(300) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 8 ──────────────────────────────────────────────────────────────────────
fn synthetic_proxy() -> Check {
    let start = Instant::now();
    let mut passes = 0;
    let mut lines = Vec::new();
    for seed in [0u64, 1, 2] {
        let out = tempfile::tempdir().map_err(|e| e.to_string())?;
        let status = spark()
            .args(["synth", "--seed", &seed.to_string(), "--out"])
            .arg(out.path())
            .output()
            .map_err(|e| e.to_string())?;
        let code = status.status.code();
        let report: serde_json::Value = std::fs::read_to_string(out.path().join("synth_report.json"))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .ok_or_else(|| format!("seed {seed}: no report (exit {code:?})"))?;
        let scores: Vec<String> = report["runs"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|r| format!("{}={:.3}", r["label"].as_str().unwrap_or("?"), r["test_mean_spearman"].as_f64().unwrap_or(f64::NAN)))
            .collect();
        if code == Some(0) {
            passes += 1;
        }
        lines.push(format!("seed {seed} [{}] exit {}", scores.join(" "), code.unwrap_or(-1)));
    }
    let elapsed = start.elapsed();
    let detail = format!("{passes}/3 seeds pass; {}; {elapsed:.1?}", lines.join("; "));
    if passes >= 2 && elapsed < Duration::from_secs(900) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 9 ──────────────────────────────────────────────────────────────────────
fn run_pipeline(data: &Path, config: &Path, out: &Path) -> Result<Vec<u8>, String> {
    for args in [
        vec!["augment", "--dataset"],
        vec!["train", "--dataset"],
        vec!["evaluate", "--augs", "all", "--augs", "none", "--dataset"],
    ] {
        let res = spark()
            .args(&args)
            .arg(data)
            .args(["--seed", "11", "--config"])
            .arg(config)
            .arg("--out")
            .arg(out)
            .output()
            .map_err(|e| e.to_string())?;
        if !res.status.success() {
            return Err(format!("{} failed: {}", args[0], String::from_utf8_lossy(&res.stderr)));
        }
    }
    std::fs::read(out.join("report.csv")).map_err(|e| e.to_string())
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut sc = SynthConfig::new(5);
    sc.n_train = 48;
    sc.n_dev = 8;
    sc.n_test = 16;
    let corpus = synth_corpus(&sc).map_err(|e| e.to_string())?;
    let data = dir.path().join("data.jsonl");
    write_dataset(&corpus.dataset, &data, DatasetFormat::Jsonl).map_err(|e| e.to_string())?;
    let config = dir.path().join("run.json");
    let body = serde_json::json!({
        "model_config": {"max_seq_len": 48, "model_dim": 16, "num_layers": 1, "num_heads": 2,
                          "ffn_dim": 32, "num_cross_heads": 2},
        "train_config": {"epochs": 3}
    });
    std::fs::write(&config, body.to_string()).map_err(|e| e.to_string())?;
    let a = run_pipeline(&data, &config, &dir.path().join("a"))?;
    let b = run_pipeline(&data, &config, &dir.path().join("b"))?;
    if a == b {
        Ok(format!("report.csv identical across two runs ({} bytes)", a.len()))
    } else {
        Err("report.csv differs between runs".into())
    }
}

// 10 ─────────────────────────────────────────────────────────────────────
fn round_trips() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let records: Vec<ArgumentRecord> = (0..30)
        .map(|i| {
            let r = ArgumentRecord::new(format!("r{i}"), "topic, \"quoted\"", format!("argument {i}\nsecond line"));
            if i % 3 == 0 {
                ArgumentRecord {
                    wa_label: Some(i as f64 / 40.0),
                    ..r
                }
            } else {
                r.with_labels(QualityScores::new(1.0 + (i % 5) as f64, 3.25, 4.5).unwrap())
            }
        })
        .collect();
    let ds = assign_splits(&Dataset::from_records(records).unwrap(), [0.6, 0.2, 0.2], 1).map_err(|e| e.to_string())?;
    let path = dir.path().join("d.jsonl");
    write_dataset(&ds, &path, DatasetFormat::Jsonl).map_err(|e| e.to_string())?;
    if load_jsonl(&path).map_err(|e| e.to_string())? != ds {
        return Err("dataset JSONL differs".into());
    }

    let cache = AugmentCache::open(dir.path().join("cache")).map_err(|e| e.to_string())?;
    let provider = mock_provider(10);
    let all: BTreeSet<_> = AugmentationKind::ALL.into_iter().collect();
    let mut rows = Vec::new();
    for r in &ds.records {
        let mut kinds = all.clone();
        if r.labels.is_none() {
            kinds.remove(&AugmentationKind::SimilarQuality);
        }
        rows.push((r.id.clone(), generate(r, &kinds, &provider, &cache).map_err(|e| e.to_string())?));
    }
    let aug_path = dir.path().join("a.jsonl");
    write_augmentations_jsonl(&aug_path, &rows).map_err(|e| e.to_string())?;
    let back = read_augmentations_jsonl(&aug_path).map_err(|e| e.to_string())?;
    if back != rows.iter().cloned().collect::<BTreeMap<_, _>>() {
        return Err("augmentation JSONL differs".into());
    }

    let augs: BTreeMap<_, _> = rows.into_iter().collect();
    let vocab = build_vocab(&ds, &augs, 500).map_err(|e| e.to_string())?;
    let mut cfg = ModelConfig::new(vocab.len());
    cfg.max_seq_len = 24;
    cfg.model_dim = 16;
    cfg.num_heads = 2;
    cfg.num_cross_heads = 2;
    cfg.ffn_dim = 32;
    let params = ModelParameters::init(&cfg, 10).map_err(|e| e.to_string())?;
    let tcfg = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    let data = TrainData {
        dataset: &ds,
        augmentations: &augs,
        vocab: &vocab,
    };
    let out = train(&params, &cfg, &tcfg, &data).map_err(|e| e.to_string())?;
    let ck_dir = dir.path().join("ck");
    save_checkpoint(&ck_dir, &cfg, &vocab, &out.params, Some(&out.optimizer.moments)).map_err(|e| e.to_string())?;
    let ck = load_checkpoint(&ck_dir).map_err(|e| e.to_string())?;
    let bits = |p: &ModelParameters| -> Vec<u64> {
        p.tensors().into_iter().flat_map(|(_, t)| t.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect()
    };
    let moments_ok = ck.moments.as_ref().is_some_and(|m| {
        bits(&m.first) == bits(&out.optimizer.moments.first) && bits(&m.second) == bits(&out.optimizer.moments.second)
    });
    if bits(&ck.params) != bits(&out.params) || !moments_ok || ck.config != cfg || ck.vocab != vocab {
        return Err("checkpoint differs after reload".into());
    }
    Ok(format!(
        "checkpoint bit-identical ({} values + moments), {} records and {} augmentation rows field-identical",
        out.params.num_values(),
        ds.len(),
        back.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("gradient correctness", gradient_correctness),
        ("padding invariance & attention normalization", padding_and_normalization),
        ("metric oracle equivalence", metric_oracles),
        ("masking statistics", masking_statistics),
        ("prompt golden files", prompt_goldens),
        ("capacity 2L vs L", capacity),
        ("memorization sanity", memorization),
        ("synthetic augmentation proxy", synthetic_proxy),
        ("determinism of train + evaluate", determinism),
        ("round-trips", round_trips),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
