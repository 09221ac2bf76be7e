//! Prompt templates for the four augmentation kinds.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AugmentError, AugmentationKind};
use crate::corpus::{ArgumentRecord, QualityScores};

const FEEDBACK_INSTRUCTION: &str =
    "Give concise writing feedback for the following argument in context with the topic, preferably in bullet points:";
const ASSUMPTIONS_INSTRUCTION: &str =
    "Summarize the assumptions, if any, in the following argument in a bullet format otherwise return \"No assumptions\"";
const COUNTER_INSTRUCTION: &str = "Give a counter-argument for the following argument with respect to the";

const BUNDLED_EXEMPLARS: &str = include_str!("../../fixtures/similar_quality_exemplars.json");

/// One scored example shown to the generator in the few-shot prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotExemplar {
    pub cogency: f64,
    pub effectiveness: f64,
    pub reasonableness: f64,
    pub topic: String,
    pub argument: String,
}

/// The ten shipped exemplars: two per integer level on every metric.
pub fn bundled_exemplars() -> Vec<FewShotExemplar> {
    serde_json::from_str(BUNDLED_EXEMPLARS).expect("bundled exemplar fixture is valid JSON")
}

/// Checks the two-per-level layout used by the bundled pool.
pub fn exemplars_balanced(pool: &[FewShotExemplar]) -> bool {
    if pool.len() != 10 {
        return false;
    }
    let axes: [fn(&FewShotExemplar) -> f64; 3] = [|e| e.cogency, |e| e.effectiveness, |e| e.reasonableness];
    axes.iter().all(|axis| {
        (1..=5).all(|level| {
            pool.iter()
                .filter(|e| axis(e) == level as f64)
                .count()
                == 2
        })
    })
}

/// Shortest decimal form with at most two fractional digits: `3`, `2.5`, `3.67`.
pub fn format_score(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn score_block(out: &mut String, scores: [f64; 3], topic: &str) {
    let _ = writeln!(out, "Cogency Score: {}", format_score(scores[0]));
    let _ = writeln!(out, "Effectiveness Score: {}", format_score(scores[1]));
    let _ = writeln!(out, "Reasonableness Score: {}", format_score(scores[2]));
    let _ = writeln!(out, "Topic: {topic}");
}

/// Render the generation prompt for one record. Pure.
pub fn render_prompt(
    kind: AugmentationKind,
    record: &ArgumentRecord,
    exemplars: Option<&[FewShotExemplar]>,
) -> Result<String, AugmentError> {
    let topic = &record.topic;
    let argument = &record.argument;
    match kind {
        AugmentationKind::Feedback => {
            Ok(format!("{FEEDBACK_INSTRUCTION}\nTopic: {topic}\nArgument: {argument}."))
        }
        AugmentationKind::Assumptions => {
            Ok(format!("{ASSUMPTIONS_INSTRUCTION}\nTopic: {topic}\nArgument: {argument}."))
        }
        AugmentationKind::CounterArgument => {
            Ok(format!("{COUNTER_INSTRUCTION} Topic: {topic}\nArgument: {argument}"))
        }
        AugmentationKind::SimilarQuality => {
            let labels: QualityScores = record
                .labels
                .ok_or_else(|| AugmentError::MissingLabels(record.id.clone()))?;
            let exemplars = match exemplars {
                Some(e) if !e.is_empty() => e,
                _ => return Err(AugmentError::MissingExemplars),
            };
            let mut out = String::new();
            for ex in exemplars {
                score_block(&mut out, [ex.cogency, ex.effectiveness, ex.reasonableness], &ex.topic);
                let _ = writeln!(out, "Argument: {}", ex.argument);
                out.push('\n');
            }
            score_block(&mut out, labels.as_array(), topic);
            let _ = writeln!(out, "Original Argument: {argument}");
            out.push_str("Argument:");
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec() -> ArgumentRecord {
        ArgumentRecord::new("x", "T", "A")
    }

    #[test]
    fn bundled_pool_is_balanced() {
        let pool = bundled_exemplars();
        assert!(exemplars_balanced(&pool));
        let mut broken = pool.clone();
        broken[0].cogency = 2.0;
        assert!(!exemplars_balanced(&broken));
    }

    #[test]
    fn score_formatting() {
        assert_eq!(format_score(3.0), "3");
        assert_eq!(format_score(2.5), "2.5");
        assert_eq!(format_score(11.0 / 3.0), "3.67");
        assert_eq!(format_score(0.1 + 0.2), "0.3");
    }

    #[test]
    fn zero_shot_prompts_reject_nothing() {
        for kind in [
            AugmentationKind::Feedback,
            AugmentationKind::Assumptions,
            AugmentationKind::CounterArgument,
        ] {
            assert!(render_prompt(kind, &rec(), None).is_ok());
        }
    }

    #[test]
    fn similar_quality_needs_labels_and_exemplars() {
        let pool = bundled_exemplars();
        assert!(matches!(
            render_prompt(AugmentationKind::SimilarQuality, &rec(), Some(&pool)),
            Err(AugmentError::MissingLabels(_))
        ));
        let labelled = rec().with_labels(QualityScores::new(3.0, 2.0, 4.0).unwrap());
        assert!(matches!(
            render_prompt(AugmentationKind::SimilarQuality, &labelled, None),
            Err(AugmentError::MissingExemplars)
        ));
        assert!(matches!(
            render_prompt(AugmentationKind::SimilarQuality, &labelled, Some(&[])),
            Err(AugmentError::MissingExemplars)
        ));
    }

    #[test]
    fn similar_quality_score_line_order() {
        let pool = bundled_exemplars();
        let labelled = rec().with_labels(QualityScores::new(3.0, 2.5, 4.0).unwrap());
        let p = render_prompt(AugmentationKind::SimilarQuality, &labelled, Some(&pool)).unwrap();
        let lines: Vec<&str> = p.lines().collect();
        let starts: Vec<usize> = lines
            .iter()
            .enumerate()
            .filter(|(_, l)| l.starts_with("Cogency Score:"))
            .map(|(i, _)| i)
            .collect();
        assert_eq!(starts.len(), 11);
        for i in starts {
            assert!(lines[i + 1].starts_with("Effectiveness Score:"));
            assert!(lines[i + 2].starts_with("Reasonableness Score:"));
            assert!(lines[i + 3].starts_with("Topic:"));
        }
        for ex in &pool {
            assert!(p.contains(&ex.argument));
        }
    }
}
