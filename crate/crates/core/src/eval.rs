//! Pearson / Spearman evaluation against gold scores, and result tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::augment::{kinds_label, AugmentationKind, AugmentationSet};
use crate::corpus::{Dataset, Split};
use crate::model::{predict, ModelConfig, ModelError, ModelParameters, Prediction, Vocabulary};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two samples, got {0}")]
    TooShort(usize),
    #[error("correlation undefined: zero variance")]
    Undefined,
    #[error("split `{0}` has no records")]
    EmptySplit(String),
    #[error("record `{0}` has no gold label")]
    MissingLabels(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn check(x: &[f64], y: &[f64]) -> Result<(), EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(EvalError::TooShort(x.len()));
    }
    Ok(())
}

fn constant(v: &[f64]) -> bool {
    v.iter().all(|&a| a == v[0])
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check(x, y)?;
    if constant(x) || constant(y) {
        return Err(EvalError::Undefined);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::Undefined);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean rank of their block.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check(x, y)?;
    if constant(x) || constant(y) {
        return Err(EvalError::Undefined);
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// A correlation value, or the flag for zero-variance input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Corr {
    Value(f64),
    Undefined,
}

impl Corr {
    fn from(r: Result<f64, EvalError>) -> Self {
        r.map(Corr::Value).unwrap_or(Corr::Undefined)
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Corr::Value(v) => Some(*v),
            Corr::Undefined => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricCorr {
    pub spearman: Corr,
    pub pearson: Corr,
}

impl MetricCorr {
    pub fn compute(pred: &[f64], gold: &[f64]) -> Self {
        Self {
            spearman: Corr::from(spearman(pred, gold)),
            pearson: Corr::from(pearson(pred, gold)),
        }
    }
}

/// One configuration's correlations. Metrics that do not apply (per-metric
/// scores on a WA-only dataset) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub dataset: String,
    pub split: String,
    pub mode: String,
    pub augs: String,
    pub cogency: Option<MetricCorr>,
    pub effectiveness: Option<MetricCorr>,
    pub reasonableness: Option<MetricCorr>,
    pub wa: Option<MetricCorr>,
    pub n: usize,
}

impl EvalRow {
    pub fn metrics(&self) -> [Option<MetricCorr>; 4] {
        [self.cogency, self.effectiveness, self.reasonableness, self.wa]
    }

    /// Mean Spearman over the three quality metrics, when all are defined.
    pub fn mean_spearman(&self) -> Option<f64> {
        let vals: Option<Vec<f64>> = [self.cogency, self.effectiveness, self.reasonableness]
            .iter()
            .map(|m| m.and_then(|c| c.spearman.value()))
            .collect();
        vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Score gold vs predicted vectors. `gold` rows are normalized triples or a
/// single WA label.
pub fn score_predictions(
    key: (&str, &str, &str, &str),
    preds: &[Prediction],
    gold: &[Gold],
) -> EvalRow {
    let triples: Option<Vec<[f64; 3]>> = gold
        .iter()
        .map(|g| match g {
            Gold::Scores(t) => Some(*t),
            Gold::Wa(_) => None,
        })
        .collect();
    let metric = |m: usize| -> Option<MetricCorr> {
        let t = triples.as_ref()?;
        let p: Vec<f64> = preds.iter().map(|p| p.raw[m]).collect();
        let g: Vec<f64> = t.iter().map(|t| t[m]).collect();
        Some(MetricCorr::compute(&p, &g))
    };
    let wa_pred: Vec<f64> = preds.iter().map(Prediction::wa).collect();
    let wa_gold: Vec<f64> = gold.iter().map(Gold::wa).collect();
    EvalRow {
        dataset: key.0.to_string(),
        split: key.1.to_string(),
        mode: key.2.to_string(),
        augs: key.3.to_string(),
        cogency: metric(0),
        effectiveness: metric(1),
        reasonableness: metric(2),
        wa: Some(MetricCorr::compute(&wa_pred, &wa_gold)),
        n: preds.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gold {
    /// Normalized cogency, effectiveness, reasonableness.
    Scores([f64; 3]),
    Wa(f64),
}

impl Gold {
    pub fn wa(&self) -> f64 {
        match self {
            Gold::Scores(t) => t.iter().sum::<f64>() / 3.0,
            Gold::Wa(w) => *w,
        }
    }
}

/// What to evaluate and how to label the resulting row.
pub struct EvalTarget<'a> {
    pub name: &'a str,
    pub dataset: &'a Dataset,
    pub augmentations: &'a BTreeMap<String, AugmentationSet>,
    pub split: Split,
}

/// Predict every record of a split (no masking) and correlate with gold.
pub fn evaluate(
    params: &ModelParameters,
    config: &ModelConfig,
    vocab: &Vocabulary,
    target: &EvalTarget<'_>,
    active_kinds: &BTreeSet<AugmentationKind>,
) -> Result<EvalRow, EvalError> {
    let records = target.dataset.split(target.split);
    if records.is_empty() {
        return Err(EvalError::EmptySplit(target.split.to_string()));
    }
    let gold: Vec<Gold> = records
        .iter()
        .map(|r| match (r.labels, r.wa_label) {
            (Some(q), _) => Ok(Gold::Scores(q.normalized())),
            (None, Some(w)) => Ok(Gold::Wa(w)),
            (None, None) => Err(EvalError::MissingLabels(r.id.clone())),
        })
        .collect::<Result<_, _>>()?;
    let empty = AugmentationSet::default();
    let run = |r: &&crate::corpus::ArgumentRecord| {
        let aug = target.augmentations.get(&r.id).unwrap_or(&empty);
        predict(params, config, vocab, r, aug, active_kinds)
    };
    #[cfg(feature = "parallel")]
    let preds: Vec<Prediction> = {
        use rayon::prelude::*;
        records.par_iter().map(run).collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let preds: Vec<Prediction> = records.iter().map(run).collect::<Result<_, _>>()?;
    Ok(score_predictions(
        (
            target.name,
            target.split.as_str(),
            config.mode.as_str(),
            &kinds_label(active_kinds),
        ),
        &preds,
        &gold,
    ))
}

pub const REPORT_HEADER: [&str; 13] = [
    "dataset",
    "split",
    "mode",
    "augs",
    "cogency_s",
    "cogency_p",
    "effectiveness_s",
    "effectiveness_p",
    "reasonableness_s",
    "reasonableness_p",
    "wa_s",
    "wa_p",
    "n",
];

fn fmt_corr(c: Option<Corr>) -> String {
    match c {
        Some(Corr::Value(v)) => format!("{v:.6}"),
        Some(Corr::Undefined) => "undefined".into(),
        None => String::new(),
    }
}

fn cells(row: &EvalRow) -> Vec<Option<Corr>> {
    row.metrics()
        .iter()
        .flat_map(|m| [m.map(|c| c.spearman), m.map(|c| c.pearson)])
        .collect()
}

/// `report.csv` body: fixed header, one line per row, six decimals.
pub fn report_csv(rows: &[EvalRow]) -> String {
    let mut out = REPORT_HEADER.join(",");
    out.push('\n');
    for r in rows {
        let mut fields = vec![r.dataset.clone(), r.split.clone(), r.mode.clone(), r.augs.clone()];
        fields.extend(cells(r).into_iter().map(fmt_corr));
        fields.push(r.n.to_string());
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(&fields).expect("in-memory csv");
        out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf8"));
    }
    out
}

const METRIC_LABELS: [&str; 8] = ["cog σ", "cog ρ", "eff σ", "eff ρ", "rea σ", "rea ρ", "wa σ", "wa ρ"];

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Rendered ablation table.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub text: String,
    pub csv: String,
    /// Per row (after sorting), which of the eight metric columns hold the best value.
    pub best: Vec<[bool; 8]>,
}

/// Sort rows by (mode, augmentation subset) and mark the best value in each
/// metric column; ties are all marked.
pub fn ablation_table(rows: &[EvalRow]) -> AblationTable {
    let mut rows: Vec<&EvalRow> = rows.iter().collect();
    rows.sort_by(|a, b| (&a.mode, &a.augs).cmp(&(&b.mode, &b.augs)));
    let grid: Vec<Vec<Option<f64>>> = rows
        .iter()
        .map(|r| cells(r).into_iter().map(|c| c.and_then(|c| c.value()).map(round6)).collect())
        .collect();
    let best_per_col: Vec<Option<f64>> = (0..8)
        .map(|c| grid.iter().filter_map(|row| row[c]).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v)))))
        .collect();
    let best: Vec<[bool; 8]> = grid
        .iter()
        .map(|row| std::array::from_fn(|c| row[c].is_some() && row[c] == best_per_col[c]))
        .collect();

    let mut csv_out = String::from("dataset,split,mode,augs,");
    csv_out.push_str(&REPORT_HEADER[4..12].join(","));
    csv_out.push_str(",n,best\n");
    let mut text_rows: Vec<Vec<String>> = Vec::new();
    for ((r, row), marks) in rows.iter().zip(&grid).zip(&best) {
        let vals: Vec<String> = cells(r).into_iter().map(fmt_corr).collect();
        let best_cols: Vec<&str> = (0..8).filter(|&c| marks[c]).map(|c| REPORT_HEADER[4 + c]).collect();
        let _ = writeln!(
            csv_out,
            "{},{},{},{},{},{},{}",
            r.dataset,
            r.split,
            r.mode,
            r.augs,
            vals.join(","),
            r.n,
            best_cols.join(";")
        );
        let mut t = vec![r.mode.clone(), r.augs.clone()];
        for c in 0..8 {
            t.push(match row[c] {
                Some(v) if marks[c] => format!("{v:.4}*"),
                Some(v) => format!("{v:.4}"),
                None if vals[c].is_empty() => "-".into(),
                None => "undef".into(),
            });
        }
        t.push(r.n.to_string());
        text_rows.push(t);
    }
    let mut header = vec!["mode".to_string(), "augs".to_string()];
    header.extend(METRIC_LABELS.iter().map(|s| s.to_string()));
    header.push("n".into());
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            std::iter::once(&header)
                .chain(&text_rows)
                .map(|r| r[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| -> String {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}", w = *w))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut text = line(&header);
    text.push('\n');
    for r in &text_rows {
        text.push_str(&line(r));
        text.push('\n');
    }
    if let Some(first) = rows.first() {
        let _ = writeln!(text, "dataset: {}  split: {}  (* = best per column)", first.dataset, first.split);
    }
    AblationTable {
        text,
        csv: csv_out,
        best,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_basics() {
        assert_eq!(pearson(&[1., 2., 3.], &[1., 2., 3.]).unwrap(), 1.0);
        assert_eq!(pearson(&[1., 2., 3.], &[3., 2., 1.]).unwrap(), -1.0);
        assert!(matches!(pearson(&[1., 2., 3.], &[2., 2., 2.]), Err(EvalError::Undefined)));
        assert!(matches!(pearson(&[1., 2.], &[1., 2., 3.]), Err(EvalError::LengthMismatch(2, 3))));
        assert!(matches!(pearson(&[1.], &[1.]), Err(EvalError::TooShort(1))));
    }

    #[test]
    fn spearman_textbook_value() {
        // Σd² = 4 over n = 4 tie-free ranks: 1 - 6·4/(4·15) = 0.6
        assert_eq!(spearman(&[1., 2., 3., 4.], &[2., 1., 4., 3.]).unwrap(), 0.6);
    }

    #[test]
    fn spearman_with_ties_uses_average_ranks() {
        let expected = pearson(&[1.5, 1.5, 3.0], &[1., 2., 3.]).unwrap();
        assert_eq!(spearman(&[1., 1., 2.], &[1., 2., 3.]).unwrap(), expected);
        assert!((expected - 0.866_025_403_784_438_6).abs() < 1e-12);
    }

    #[test]
    fn spearman_monotone_transform() {
        let x = [0.3, -1.0, 2.0, 0.5, 7.0];
        let fx: Vec<f64> = x.iter().map(|v: &f64| v.exp()).collect();
        assert_eq!(spearman(&x, &fx).unwrap(), 1.0);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10., 20., 10., 30.]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    fn row(mode: &str, augs: &str, v: f64) -> EvalRow {
        let c = Some(MetricCorr {
            spearman: Corr::Value(v),
            pearson: Corr::Value(v / 2.0),
        });
        EvalRow {
            dataset: "gaq".into(),
            split: "test".into(),
            mode: mode.into(),
            augs: augs.into(),
            cogency: c,
            effectiveness: c,
            reasonableness: c,
            wa: None,
            n: 10,
        }
    }

    #[test]
    fn zero_shot_ordering() {
        let preds: Vec<Prediction> = [0.2, 0.5, 0.9].iter().map(|&v| Prediction::from_raw([v; 3])).collect();
        let gold: Vec<Gold> = [0.1, 0.4, 0.8].iter().map(|&w| Gold::Wa(w)).collect();
        let r = score_predictions(("ibm", "test", "dual", "all"), &preds, &gold);
        assert_eq!(r.wa.unwrap().spearman, Corr::Value(1.0));
        assert!(r.cogency.is_none());
        assert_eq!(r.mean_spearman(), None);
    }

    #[test]
    fn perfect_predictor() {
        let gold_t = [[0.1, 0.2, 0.3], [0.5, 0.4, 0.9], [0.7, 0.8, 0.1], [0.2, 0.9, 0.5]];
        let preds: Vec<Prediction> = gold_t.iter().map(|t| Prediction::from_raw(*t)).collect();
        let gold: Vec<Gold> = gold_t.iter().map(|t| Gold::Scores(*t)).collect();
        let r = score_predictions(("g", "test", "dual", "all"), &preds, &gold);
        for m in r.metrics() {
            let m = m.unwrap();
            assert!((m.spearman.value().unwrap() - 1.0).abs() < 1e-12);
            assert!((m.pearson.value().unwrap() - 1.0).abs() < 1e-12);
        }
        assert!((r.mean_spearman().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singleton_table_marks_everything() {
        let t = ablation_table(&[row("dual", "all", 0.4)]);
        assert_eq!(t.best, vec![[true, true, true, true, true, true, false, false]]);
        assert!(t.text.contains("0.4000*"));
    }

    #[test]
    fn ties_are_all_marked_and_order_is_fixed() {
        let t = ablation_table(&[row("single", "all", 0.3), row("dual", "none", 0.5), row("dual", "all", 0.5)]);
        assert!(t.best[0][0] && t.best[1][0] && !t.best[2][0]);
        let modes: Vec<&str> = t.csv.lines().skip(1).map(|l| l.split(',').nth(3).unwrap()).collect();
        assert_eq!(modes, ["all", "none", "all"]);
    }

    #[test]
    fn table_csv_reparses_at_six_decimals() {
        let rows = [row("dual", "all", 0.123_456_789), row("dual", "fb", -0.5)];
        let t = ablation_table(&rows);
        let mut rdr = csv::Reader::from_reader(t.csv.as_bytes());
        let parsed: Vec<f64> = rdr
            .records()
            .map(|r| r.unwrap()[4].parse().unwrap())
            .collect();
        assert_eq!(parsed, vec![0.123457, -0.5]);
    }

    #[test]
    fn report_csv_layout() {
        let mut r = row("dual", "all", 1.0);
        r.effectiveness = Some(MetricCorr {
            spearman: Corr::Undefined,
            pearson: Corr::Undefined,
        });
        let csv = report_csv(&[r]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), REPORT_HEADER.join(","));
        assert_eq!(
            lines.next().unwrap(),
            "gaq,test,dual,all,1.000000,0.500000,undefined,undefined,1.000000,0.500000,,,10"
        );
    }
}
