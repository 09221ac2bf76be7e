use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use spark_core::augment::{
    generate_all, kinds_label, parse_kinds, write_augmentations_jsonl, AugmentCache, AugmentationKind,
    AugmentationSet, HttpProvider, MockProvider, Provider,
};
use spark_core::corpus::{Dataset, Split};
use spark_core::eval::{ablation_table, evaluate, report_csv, EvalTarget};
use spark_core::model::{build_vocab, load_checkpoint, save_checkpoint, Mode, ModelParameters};
use spark_core::synth::{run_synth, SynthConfig, SynthRun, DUAL_AUGS_MIN, DUAL_NO_AUGS_MAX, DUAL_OVER_SINGLE_MIN};
use spark_core::train::{grad_check, grad_check_config, train, TrainData, TrainError};

use crate::config::{load_augmentations, load_datasets, RunConfig};
use crate::{AugmentArgs, Cli, Command, EvaluateArgs, GradcheckArgs, ProviderKind, SynthArgs, TrainArgs};

pub enum Outcome {
    Success,
    AcceptanceFailure,
}

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }

    fn datasets(&self, flags: &[PathBuf]) -> Result<Dataset> {
        let paths = if flags.is_empty() { &self.cfg.dataset_paths } else { flags };
        load_datasets(paths, self.cfg.split_ratios, self.seed)
    }

    fn dataset_name(&self, flags: &[PathBuf]) -> String {
        let paths = if flags.is_empty() { &self.cfg.dataset_paths } else { flags };
        paths
            .iter()
            .map(|p| p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()))
            .collect::<Vec<_>>()
            .join("+")
    }

    /// Flag, then config, then `<out>/augmentations.jsonl` if present.
    fn augmentations_path(&self, flag: Option<&PathBuf>, required: bool) -> Result<Option<PathBuf>> {
        if let Some(p) = flag.or(self.cfg.augmentations_path.as_ref()) {
            return Ok(Some(p.clone()));
        }
        let default = self.out.join("augmentations.jsonl");
        if default.exists() {
            Ok(Some(default))
        } else if required {
            bail!(
                "no augmentation file: pass --augmentations, run `augment` first (expected {}), or use --no-augs",
                default.display()
            )
        } else {
            Ok(None)
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.validate_paths()?;
    let seed = cli.seed.unwrap_or(cfg.global_seed);
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Ctx { cfg, seed, out };
    match &cli.command {
        Command::Augment(a) => cmd_augment(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::Gradcheck(a) => cmd_gradcheck(&ctx, a),
        Command::Synth(a) => cmd_synth(&ctx, a),
    }
}

fn cmd_augment(ctx: &Ctx, args: &AugmentArgs) -> Result<Outcome> {
    let dataset = ctx.datasets(&args.datasets)?;
    let kinds = parse_kinds(&args.kinds)?;
    let provider_path = args.provider_config.clone().or(ctx.cfg.provider_config_path.clone());
    let kind = args
        .provider
        .unwrap_or(if provider_path.is_some() { ProviderKind::Http } else { ProviderKind::Mock });
    let provider: Box<dyn Provider> = match kind {
        ProviderKind::Mock => Box::new(MockProvider::new(ctx.seed)),
        ProviderKind::Http => {
            let mut run_cfg = ctx.cfg.clone();
            run_cfg.provider_config_path = provider_path;
            let pc = run_cfg
                .provider_config()?
                .ok_or_else(|| anyhow!("--provider http needs --provider-config"))?;
            Box::new(HttpProvider::new(pc)?)
        }
    };
    let out = ctx.out_dir()?;
    let cache_dir = args
        .cache
        .clone()
        .or(ctx.cfg.cache_dir.clone())
        .unwrap_or_else(|| out.join("cache"));
    let cache = AugmentCache::open(&cache_dir)?;

    // Similar-quality text is conditioned on gold scores, so only training
    // records get one.
    let mut without_sq = kinds.clone();
    without_sq.remove(&AugmentationKind::SimilarQuality);
    let mut generated: BTreeMap<String, AugmentationSet> = BTreeMap::new();
    for split in [Split::Train, Split::Dev, Split::Test] {
        let records: Vec<_> = dataset.split(split).into_iter().cloned().collect();
        let wanted = if split == Split::Train { &kinds } else { &without_sq };
        let sets = generate_all(&records, wanted, provider.as_ref(), &cache)?;
        generated.extend(records.into_iter().map(|r| r.id).zip(sets));
    }
    let rows: Vec<(String, AugmentationSet)> = dataset
        .records
        .iter()
        .map(|r| (r.id.clone(), generated.remove(&r.id).unwrap_or_default()))
        .collect();
    let path = out.join("augmentations.jsonl");
    write_augmentations_jsonl(&path, &rows)?;
    println!(
        "augmented {} records ({}) with provider {}: {} requests, {} cached responses -> {}",
        rows.len(),
        kinds_label(&kinds),
        provider.name(),
        provider.requests_issued(),
        cache.len(),
        path.display()
    );
    Ok(Outcome::Success)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

fn cmd_train(ctx: &Ctx, args: &TrainArgs) -> Result<Outcome> {
    let dataset = ctx.datasets(&args.datasets)?;
    let augmentations = if args.no_augs {
        BTreeMap::new()
    } else {
        let path = ctx.augmentations_path(args.augmentations.as_ref(), true)?;
        load_augmentations(path.as_deref())?
    };
    let mut model = ctx.cfg.model_config.clone();
    if let Some(m) = &args.mode {
        model.mode = m.parse::<Mode>()?;
    }
    let vocab = build_vocab(&dataset, &augmentations, ctx.cfg.max_vocab)?;
    model.vocab_size = vocab.len();
    model.validate()?;

    let mut tcfg = ctx.cfg.train_config.clone();
    tcfg.rng_seed = ctx.seed;
    if let Some(e) = args.epochs {
        tcfg.epochs = e;
    }
    if let Some(k) = &args.augs {
        tcfg.active_kinds = parse_kinds(k)?;
    }
    if args.no_augs {
        tcfg.active_kinds = BTreeSet::new();
    }
    let params = ModelParameters::init(&model, ctx.seed)?;
    let out = ctx.out_dir()?;
    let data = TrainData {
        dataset: &dataset,
        augmentations: &augmentations,
        vocab: &vocab,
    };
    let outcome = match train(&params, &model, &tcfg, &data) {
        Ok(o) => o,
        Err(TrainError::NonFiniteLoss { step, diagnostic }) => {
            let dump = out.join("nonfinite_dump.json");
            fs::write(&dump, diagnostic + "\n").with_context(|| format!("writing {}", dump.display()))?;
            bail!("non-finite loss at step {step}; diagnostic dump written to {}", dump.display());
        }
        Err(e) => return Err(e.into()),
    };
    let ckpt = out.join("checkpoint");
    save_checkpoint(&ckpt, &model, &vocab, &outcome.params, Some(&outcome.optimizer.moments))?;
    outcome.state.save(out.join("train_state.json"))?;
    let resolved = serde_json::to_string_pretty(&tcfg)? + "\n";
    fs::write(out.join("train_config.json"), resolved)?;
    println!(
        "trained mode={} augs={} epochs={} steps={} best_epoch={} dev_spearman_mean={} -> {}",
        model.mode,
        kinds_label(&tcfg.active_kinds),
        outcome.state.epoch,
        outcome.state.step,
        outcome.state.best_epoch.map_or_else(|| "n/a".into(), |e| (e + 1).to_string()),
        fmt_opt(outcome.state.best_dev_spearman()),
        ckpt.display()
    );
    Ok(Outcome::Success)
}

/// All 16 subsets of the four kinds, smallest first.
fn all_subsets() -> Vec<BTreeSet<AugmentationKind>> {
    let mut subsets: Vec<BTreeSet<AugmentationKind>> = (0u32..16)
        .map(|mask| {
            AugmentationKind::ALL
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, k)| *k)
                .collect()
        })
        .collect();
    subsets.sort_by_key(|s| s.len());
    subsets
}

fn cmd_evaluate(ctx: &Ctx, args: &EvaluateArgs) -> Result<Outcome> {
    let ckpt_dir = args.checkpoint.clone().unwrap_or_else(|| ctx.out.join("checkpoint"));
    if !ckpt_dir.exists() {
        bail!("checkpoint not found: {}", ckpt_dir.display());
    }
    let ckpt = load_checkpoint(&ckpt_dir).with_context(|| format!("loading checkpoint {}", ckpt_dir.display()))?;
    let dataset = ctx.datasets(&args.datasets)?;
    let aug_path = ctx.augmentations_path(args.augmentations.as_ref(), false)?;
    let augmentations = load_augmentations(aug_path.as_deref())?;
    let split: Split = args.split.parse().map_err(|e: String| anyhow!(e))?;
    let subsets = if args.ablation {
        all_subsets()
    } else {
        args.augs.iter().map(|s| parse_kinds(s)).collect::<Result<Vec<_>, _>>()?
    };
    let name = ctx.dataset_name(&args.datasets);
    let target = EvalTarget {
        name: &name,
        dataset: &dataset,
        augmentations: &augmentations,
        split,
    };
    let rows = subsets
        .iter()
        .map(|kinds| evaluate(&ckpt.params, &ckpt.config, &ckpt.vocab, &target, kinds))
        .collect::<Result<Vec<_>, _>>()?;
    let out = ctx.out_dir()?;
    fs::write(out.join("report.csv"), report_csv(&rows))?;
    let table = ablation_table(&rows);
    fs::write(out.join("report.txt"), &table.text)?;
    if rows.len() > 1 {
        fs::write(out.join("ablation.csv"), &table.csv)?;
    }
    print!("{}", table.text);
    Ok(Outcome::Success)
}

fn cmd_gradcheck(ctx: &Ctx, args: &GradcheckArgs) -> Result<Outcome> {
    let mut config = grad_check_config();
    config.mode = args.mode.parse::<Mode>()?;
    let report = grad_check(&config, args.epsilon, args.tolerance, ctx.seed)?;
    for t in &report.tensors {
        println!(
            "{:<40} n={:<5} max_rel={:.3e} max_abs={:.3e} {}",
            t.name,
            t.values,
            t.max_rel_error,
            t.max_abs_error,
            if t.passed { "ok" } else { "FAIL" }
        );
    }
    let out = ctx.out_dir()?;
    fs::write(out.join("gradcheck.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    println!(
        "gradcheck {}: max relative error {:.3e} (tolerance {:.1e}, epsilon {:.1e})",
        if report.passed() { "passed" } else { "FAILED" },
        report.max_rel_error(),
        report.tolerance,
        report.epsilon
    );
    Ok(if report.passed() {
        Outcome::Success
    } else {
        Outcome::AcceptanceFailure
    })
}

fn cmd_synth(ctx: &Ctx, args: &SynthArgs) -> Result<Outcome> {
    let mut config = SynthConfig::new(ctx.seed);
    if let Some(e) = args.epochs {
        config.train.epochs = e;
    }
    if let Some(n) = args.n_train {
        config.n_train = n;
    }
    if let Some(n) = args.n_test {
        config.n_test = n;
    }
    if args.dry_run {
        println!(
            "synthetic corpus: seed={} train={} dev={} test={}",
            config.seed, config.n_train, config.n_dev, config.n_test
        );
        for run in SynthRun::ALL {
            println!(
                "run {:<12} mode={} augs={} epochs={} d={} L={}",
                run.label(),
                run.mode(),
                kinds_label(&run.kinds()),
                config.train.epochs,
                config.model.model_dim,
                config.model.max_seq_len
            );
        }
        println!(
            "thresholds: dual+augs >= {DUAL_AUGS_MIN}, dual-augs <= {DUAL_NO_AUGS_MAX}, dual+augs - single+augs >= {DUAL_OVER_SINGLE_MIN}"
        );
        println!("would write {}", ctx.out.join("synth_report.json").display());
        return Ok(Outcome::Success);
    }
    let out = ctx.out_dir()?;
    let cache = AugmentCache::open(out.join("synth_cache"))?;
    let report = run_synth(&config, &cache)?;
    for r in &report.runs {
        println!("{:<12} test mean spearman = {}", r.label, fmt_opt(r.test_mean_spearman));
    }
    for (name, value, ok) in report.checks() {
        println!("{} {name} (observed {})", if ok { "PASS" } else { "FAIL" }, fmt_opt(value));
    }
    fs::write(out.join("synth_report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(if report.passed() {
        Outcome::Success
    } else {
        Outcome::AcceptanceFailure
    })
}
