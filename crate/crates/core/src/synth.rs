//! A synthetic corpus whose scores are carried only by marker words in the
//! generated augmentation texts.
//!
//! Topics and arguments are label-independent filler. For every metric the
//! canned mock responses contain [`MARKERS_PER_METRIC`] markers, `k` of them
//! positive, and the score is `1 + 4k / MARKERS_PER_METRIC`. A model that reads
//! the augmentations can recover the score; one that only reads the argument
//! cannot. Arguments are long enough that, in single mode, the appended
//! augmentation blocks fall beyond the sequence limit.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::augment::{
    bundled_exemplars, generate_all, prompt_hash, render_prompt, AugmentCache, AugmentError, AugmentationKind,
    AugmentationSet, MockProvider,
};
use crate::corpus::{ArgumentRecord, Dataset, QualityScores, Split};
use crate::eval::{evaluate, EvalRow, EvalTarget};
use crate::model::{build_vocab, Mode, ModelConfig, ModelParameters};
use crate::train::{train, TrainConfig, TrainData, TrainError};

pub const MARKERS_PER_METRIC: usize = 4;

/// (positive, negative) marker word per metric.
pub const MARKERS: [(&str, &str); 3] = [("sound", "flawed"), ("persuasive", "dull"), ("fair", "biased")];

const TOPICS: [&str; 8] = [
    "school uniforms",
    "nuclear power",
    "remote work",
    "public transport",
    "space exploration",
    "minimum wage",
    "online voting",
    "animal testing",
];

const FILLER: [&str; 48] = [
    "people", "often", "city", "money", "time", "policy", "children", "future", "because", "many", "most", "should",
    "would", "could", "years", "change", "system", "local", "cost", "benefit", "public", "private", "energy",
    "health", "family", "school", "market", "risk", "safety", "value", "world", "community", "example", "rule",
    "power", "choice", "support", "plan", "government", "study", "result", "group", "level", "report", "effect",
    "reason", "idea", "rate",
];

/// Which augmentation kinds carry how many markers of every metric.
const LAYOUT: [(AugmentationKind, usize); 3] = [
    (AugmentationKind::Feedback, 2),
    (AugmentationKind::Assumptions, 1),
    (AugmentationKind::CounterArgument, 1),
];

#[derive(Debug, Clone, Serialize)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl SynthConfig {
    /// Defaults sized to finish in well under a minute per run.
    pub fn new(seed: u64) -> Self {
        let mut model = ModelConfig::new(0);
        model.max_seq_len = 32;
        model.model_dim = 32;
        model.num_layers = 1;
        model.num_heads = 2;
        model.ffn_dim = 64;
        model.num_cross_heads = 2;
        model.dropout_rate = 0.0;
        let train = TrainConfig {
            epochs: 25,
            learning_rate: 2e-3,
            rng_seed: seed,
            ..TrainConfig::default()
        };
        Self {
            n_train: 400,
            n_dev: 50,
            n_test: 100,
            seed,
            model,
            train,
        }
    }
}

/// The three runs of the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SynthRun {
    DualAugs,
    DualNoAugs,
    SingleAugs,
}

impl SynthRun {
    pub const ALL: [SynthRun; 3] = [SynthRun::DualAugs, SynthRun::DualNoAugs, SynthRun::SingleAugs];

    pub fn label(&self) -> &'static str {
        match self {
            SynthRun::DualAugs => "dual+augs",
            SynthRun::DualNoAugs => "dual-augs",
            SynthRun::SingleAugs => "single+augs",
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            SynthRun::SingleAugs => Mode::Single,
            _ => Mode::Dual,
        }
    }

    pub fn kinds(&self) -> BTreeSet<AugmentationKind> {
        match self {
            SynthRun::DualNoAugs => BTreeSet::new(),
            _ => AugmentationKind::ALL.into_iter().collect(),
        }
    }
}

pub const DUAL_AUGS_MIN: f64 = 0.9;
pub const DUAL_NO_AUGS_MAX: f64 = 0.3;
pub const DUAL_OVER_SINGLE_MIN: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct SynthRunResult {
    pub run: SynthRun,
    pub label: &'static str,
    pub test_mean_spearman: Option<f64>,
    pub row: EvalRow,
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthReport {
    pub seed: u64,
    pub runs: Vec<SynthRunResult>,
}

impl SynthReport {
    fn score(&self, run: SynthRun) -> Option<f64> {
        self.runs.iter().find(|r| r.run == run).and_then(|r| r.test_mean_spearman)
    }

    /// (criterion, observed, passed) for each threshold.
    pub fn checks(&self) -> Vec<(String, Option<f64>, bool)> {
        let dual = self.score(SynthRun::DualAugs);
        let none = self.score(SynthRun::DualNoAugs);
        let single = self.score(SynthRun::SingleAugs);
        let gap = dual.zip(single).map(|(d, s)| d - s);
        vec![
            (format!("dual+augs >= {DUAL_AUGS_MIN}"), dual, dual.is_some_and(|v| v >= DUAL_AUGS_MIN)),
            // An undefined correlation (constant predictions) carries no signal.
            (
                format!("dual-augs <= {DUAL_NO_AUGS_MAX}"),
                none,
                none.map_or(true, |v| v <= DUAL_NO_AUGS_MAX),
            ),
            (
                format!("dual+augs - single+augs >= {DUAL_OVER_SINGLE_MIN}"),
                gap,
                gap.is_some_and(|v| v >= DUAL_OVER_SINGLE_MIN),
            ),
        ]
    }

    pub fn passed(&self) -> bool {
        self.checks().iter().all(|c| c.2)
    }
}

/// Corpus, its splits, and the canned responses planting each label.
pub struct SynthCorpus {
    pub dataset: Dataset,
    pub canned: HashMap<String, String>,
}

fn words<R: Rng>(rng: &mut R, n: usize) -> Vec<&'static str> {
    (0..n).map(|_| *FILLER.choose(rng).unwrap()).collect()
}

fn record<R: Rng>(rng: &mut R, id: String) -> (ArgumentRecord, [usize; 3]) {
    let counts = [0; 3].map(|_| rng.gen_range(0..=MARKERS_PER_METRIC));
    let scores = counts.map(|k| 1.0 + 4.0 * k as f64 / MARKERS_PER_METRIC as f64);
    let len = rng.gen_range(28..=40);
    let argument = words(rng, len).join(" ") + ".";
    let topic = TOPICS.choose(rng).unwrap();
    let labels = QualityScores::new(scores[0], scores[1], scores[2]).expect("scores in range");
    (ArgumentRecord::new(id, *topic, argument).with_labels(labels), counts)
}

/// Marker words of one record, spread over the augmentation kinds. `k`
/// positives per metric are dealt into the slots at random.
fn marker_plan<R: Rng>(rng: &mut R, counts: [usize; 3]) -> BTreeMap<AugmentationKind, Vec<&'static str>> {
    let mut plan: BTreeMap<AugmentationKind, Vec<&'static str>> = BTreeMap::new();
    for (metric, &k) in counts.iter().enumerate() {
        let (pos, neg) = MARKERS[metric];
        let mut slots: Vec<&str> = (0..MARKERS_PER_METRIC).map(|i| if i < k { pos } else { neg }).collect();
        slots.shuffle(rng);
        let mut it = slots.into_iter();
        for (kind, n) in LAYOUT {
            plan.entry(kind).or_default().extend(it.by_ref().take(n));
        }
    }
    plan
}

fn render_text<R: Rng>(rng: &mut R, kind: AugmentationKind, markers: &[&str]) -> String {
    let mut toks: Vec<&str> = markers.to_vec();
    let n = rng.gen_range(1..=3);
    toks.extend(words(rng, n));
    toks.shuffle(rng);
    match kind {
        AugmentationKind::Feedback => format!("- {}.", toks.join(" ")),
        AugmentationKind::Assumptions => format!("- assumes {}.", toks.join(" ")),
        AugmentationKind::CounterArgument => format!("however {}.", toks.join(" ")),
        AugmentationKind::SimilarQuality => format!("{}.", toks.join(" ")),
    }
}

pub fn synth_corpus(config: &SynthConfig) -> Result<SynthCorpus, AugmentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let exemplars = bundled_exemplars();
    let total = config.n_train + config.n_dev + config.n_test;
    let mut records = Vec::with_capacity(total);
    let mut assignment = BTreeMap::new();
    let mut canned = HashMap::new();
    for i in 0..total {
        let split = if i < config.n_train {
            Split::Train
        } else if i < config.n_train + config.n_dev {
            Split::Dev
        } else {
            Split::Test
        };
        let (rec, counts) = record(&mut rng, format!("synth-{i:05}"));
        for (kind, markers) in marker_plan(&mut rng, counts) {
            let prompt = render_prompt(kind, &rec, None)?;
            canned.insert(prompt_hash(kind, &prompt), render_text(&mut rng, kind, &markers));
        }
        if split == Split::Train {
            // The similar-quality text restates every metric's markers.
            let all: Vec<&str> = marker_plan(&mut rng, counts).into_values().flatten().collect();
            let prompt = render_prompt(AugmentationKind::SimilarQuality, &rec, Some(&exemplars))?;
            canned.insert(
                prompt_hash(AugmentationKind::SimilarQuality, &prompt),
                render_text(&mut rng, AugmentationKind::SimilarQuality, &all),
            );
        }
        assignment.insert(rec.id.clone(), split);
        records.push(rec);
    }
    let mut dataset = Dataset::from_records(records).expect("synthetic ids are unique");
    dataset.split_assignment = assignment;
    Ok(SynthCorpus { dataset, canned })
}

/// Augment the corpus through the mock provider. Similar-quality text is
/// generated for the training split only.
pub fn synth_augmentations(
    corpus: &SynthCorpus,
    config: &SynthConfig,
    cache: &AugmentCache,
) -> Result<BTreeMap<String, AugmentationSet>, AugmentError> {
    let provider = MockProvider::new(config.seed).with_canned(corpus.canned.clone());
    let mut out = BTreeMap::new();
    let all: BTreeSet<AugmentationKind> = AugmentationKind::ALL.into_iter().collect();
    let mut no_sq = all.clone();
    no_sq.remove(&AugmentationKind::SimilarQuality);
    for (split, kinds) in [(Split::Train, &all), (Split::Dev, &no_sq), (Split::Test, &no_sq)] {
        let records: Vec<ArgumentRecord> = corpus.dataset.split(split).into_iter().cloned().collect();
        let sets = generate_all(&records, kinds, &provider, cache)?;
        out.extend(records.into_iter().map(|r| r.id).zip(sets));
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Train and evaluate one run on prepared data.
pub fn run_one(
    run: SynthRun,
    config: &SynthConfig,
    dataset: &Dataset,
    augmentations: &BTreeMap<String, AugmentationSet>,
) -> Result<SynthRunResult, SynthError> {
    let vocab = build_vocab(dataset, augmentations, 10_000).map_err(TrainError::from)?;
    let mut model = config.model.clone();
    model.vocab_size = vocab.len();
    model.mode = run.mode();
    let mut tcfg = config.train.clone();
    tcfg.active_kinds = run.kinds();
    let params = ModelParameters::init(&model, config.seed).map_err(TrainError::from)?;
    let data = TrainData {
        dataset,
        augmentations,
        vocab: &vocab,
    };
    let outcome = train(&params, &model, &tcfg, &data)?;
    let target = EvalTarget {
        name: "synthetic",
        dataset,
        augmentations,
        split: Split::Test,
    };
    let row = evaluate(&outcome.params, &model, &vocab, &target, &tcfg.active_kinds).map_err(TrainError::from)?;
    Ok(SynthRunResult {
        run,
        label: run.label(),
        test_mean_spearman: row.mean_spearman(),
        row,
    })
}

/// Build the corpus, augment it, and run all three trainings.
pub fn run_synth(config: &SynthConfig, cache: &AugmentCache) -> Result<SynthReport, SynthError> {
    let corpus = synth_corpus(config)?;
    let augmentations = synth_augmentations(&corpus, config, cache)?;
    let runs = SynthRun::ALL
        .iter()
        .map(|&run| run_one(run, config, &corpus.dataset, &augmentations))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SynthReport {
        seed: config.seed,
        runs,
    })
}

/// A small fully-labelled training set (every record in the train split)
/// with augmentations already attached, for fitting-capacity checks.
pub fn memorization_set(n: usize, seed: u64) -> (Dataset, BTreeMap<String, AugmentationSet>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    let mut augs = BTreeMap::new();
    for i in 0..n {
        let (mut rec, counts) = record(&mut rng, format!("mem-{i:03}"));
        rec.argument = words(&mut rng, 8).join(" ");
        let mut set = AugmentationSet::default();
        for (kind, markers) in marker_plan(&mut rng, counts) {
            set.set(kind, render_text(&mut rng, kind, &markers));
        }
        augs.insert(rec.id.clone(), set);
        records.push(rec);
    }
    (Dataset::from_records(records).expect("unique ids"), augs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tokenize;

    fn count(text: &str, word: &str) -> usize {
        tokenize(text).iter().filter(|t| *t == word).count()
    }

    #[test]
    fn markers_encode_labels() {
        let mut cfg = SynthConfig::new(3);
        cfg.n_train = 20;
        cfg.n_dev = 5;
        cfg.n_test = 5;
        let corpus = synth_corpus(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cache = AugmentCache::open(dir.path()).unwrap();
        let augs = synth_augmentations(&corpus, &cfg, &cache).unwrap();
        for rec in &corpus.dataset.records {
            let set = &augs[&rec.id];
            let text: String = [
                AugmentationKind::Feedback,
                AugmentationKind::Assumptions,
                AugmentationKind::CounterArgument,
            ]
            .iter()
            .map(|k| set.get(*k).unwrap().to_string() + " ")
            .collect();
            let scores = rec.labels.unwrap().as_array();
            for (m, (pos, neg)) in MARKERS.iter().enumerate() {
                let k = count(&text, pos);
                assert_eq!(k + count(&text, neg), MARKERS_PER_METRIC);
                assert_eq!(scores[m], 1.0 + k as f64);
            }
            let is_train = corpus.dataset.split_of(&rec.id) == Some(Split::Train);
            assert_eq!(set.similar_quality.is_some(), is_train);
            for (pos, neg) in MARKERS {
                assert_eq!(count(&rec.argument, pos) + count(&rec.argument, neg), 0);
            }
        }
    }

    #[test]
    fn corpus_is_seeded() {
        let mut cfg = SynthConfig::new(1);
        cfg.n_train = 10;
        let a = synth_corpus(&cfg).unwrap();
        let b = synth_corpus(&cfg).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.canned, b.canned);
        cfg.seed = 2;
        assert_ne!(synth_corpus(&cfg).unwrap().dataset, a.dataset);
    }

    #[test]
    fn single_mode_loses_augmentations() {
        use crate::model::{encode_input, FB};
        let cfg = SynthConfig::new(4);
        let (ds, augs) = memorization_set(4, 4);
        let vocab = build_vocab(&ds, &augs, 1000).unwrap();
        let mut model = cfg.model.clone();
        model.vocab_size = vocab.len();
        model.mode = Mode::Single;
        let mut corpus_cfg = cfg.clone();
        corpus_cfg.n_train = 30;
        let corpus = synth_corpus(&corpus_cfg).unwrap();
        let all = AugmentationKind::ALL.into_iter().collect();
        let mut aug = AugmentationSet::default();
        aug.set(AugmentationKind::Feedback, "sound");
        for rec in &corpus.dataset.records {
            let enc = encode_input(rec, &aug, &vocab, &model, &all);
            assert!(!enc.seq1.contains(&FB));
        }
    }
}
