use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Conversation, ConversationPair};
use crate::error::Result;
use crate::model::Dtdmn;
use crate::predictor::{pick_winner, Winner};
use crate::rng::{key_hash, Streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    First,
    Second,
}

/// One scored pair. `positive_first` records the randomized presentation
/// order; `predicted_winner` refers to that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPrediction {
    pub pair_id: String,
    pub y_pos: f64,
    pub y_neg: f64,
    pub predicted_winner: Side,
    pub correct: bool,
    pub positive_first: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub accuracy: f64,
    pub f1: f64,
    pub n_pairs: usize,
    pub predictions: Vec<PairPrediction>,
}

/// Whether the positive conversation is presented first for this pair.
pub fn positive_first(pair_id: &str, seed: u64) -> bool {
    Streams::new(seed)
        .rng("orientation", &[key_hash(pair_id)])
        .random::<bool>()
}

/// F1 of the "first wins" class.
pub fn binary_f1(labels: &[bool], predicted: &[bool]) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&l, &p) in labels.iter().zip(predicted) {
        match (l, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fneg += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

impl EvaluationReport {
    /// Recompute accuracy and F1 from the per-pair records.
    pub fn from_predictions(predictions: Vec<PairPrediction>) -> Self {
        let n = predictions.len();
        let correct = predictions.iter().filter(|p| p.correct).count();
        let labels: Vec<bool> = predictions.iter().map(|p| p.positive_first).collect();
        let predicted: Vec<bool> = predictions
            .iter()
            .map(|p| p.predicted_winner == Side::First)
            .collect();
        Self {
            accuracy: if n == 0 {
                0.0
            } else {
                correct as f64 / n as f64
            },
            f1: binary_f1(&labels, &predicted),
            n_pairs: n,
            predictions,
        }
    }

    pub fn predictions_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for p in &self.predictions {
            out.push_str(&serde_json::to_string(p)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Score every pair with `score`, presenting each in its seeded order.
pub fn evaluate_with<F>(
    pairs: &[ConversationPair],
    seed: u64,
    mut score: F,
) -> Result<EvaluationReport>
where
    F: FnMut(&Conversation) -> Result<f64>,
{
    let mut cache: HashMap<String, f64> = HashMap::new();
    let mut cached = |c: &Conversation| -> Result<f64> {
        let key = c.key();
        if let Some(y) = cache.get(&key) {
            return Ok(*y);
        }
        let y = score(c)?;
        cache.insert(key, y);
        Ok(y)
    };
    let mut predictions = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let y_pos = cached(&pair.positive)?;
        let y_neg = cached(&pair.negative)?;
        let pos_first = positive_first(&pair.pair_id, seed);
        let winner = if pos_first {
            pick_winner(y_pos, y_neg)
        } else {
            pick_winner(y_neg, y_pos)
        };
        let predicted_winner = match winner {
            Winner::First => Side::First,
            Winner::Second => Side::Second,
        };
        predictions.push(PairPrediction {
            pair_id: pair.pair_id.clone(),
            y_pos,
            y_neg,
            predicted_winner,
            correct: (predicted_winner == Side::First) == pos_first,
            positive_first: pos_first,
        });
    }
    Ok(EvaluationReport::from_predictions(predictions))
}

pub fn evaluate(model: &Dtdmn, pairs: &[ConversationPair], seed: u64) -> Result<EvaluationReport> {
    evaluate_with(pairs, seed, |c| model.score(c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: String,
    pub accuracy: f64,
    pub f1: f64,
    pub n_pairs: usize,
}

impl MetricsRow {
    pub fn new(variant: impl Into<String>, report: &EvaluationReport) -> Self {
        Self {
            variant: variant.into(),
            accuracy: report.accuracy,
            f1: report.f1,
            n_pairs: report.n_pairs,
        }
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("variant,accuracy,f1,n_pairs\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{}",
            r.variant, r.accuracy, r.f1, r.n_pairs
        );
    }
    out
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    fs::write(path, metrics_csv(rows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EncodedArgument, Label};

    fn conv(id: &str) -> Conversation {
        Conversation {
            conv_id: id.into(),
            moot_id: "m".into(),
            label: Label::Winning,
            turns: vec![EncodedArgument {
                bow: vec![(1, 1)],
                seq: vec![1],
                len: 1,
            }],
        }
    }

    fn pairs(n: usize) -> Vec<ConversationPair> {
        (0..n)
            .map(|i| ConversationPair {
                pair_id: format!("p{i}"),
                moot_id: "m".into(),
                positive: conv(&format!("pos{i}")),
                negative: conv(&format!("neg{i}")),
            })
            .collect()
    }

    #[test]
    fn perfect_scores_give_accuracy_one() {
        let ps = pairs(20);
        let r = evaluate_with(&ps, 3, |c| {
            Ok(if c.conv_id.starts_with("pos") {
                1.0
            } else {
                0.0
            })
        })
        .unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.f1, 1.0);
        let orientations: Vec<bool> = r.predictions.iter().map(|p| p.positive_first).collect();
        assert!(orientations.contains(&true) && orientations.contains(&false));
    }

    #[test]
    fn coin_flip_scores_are_near_chance() {
        let ps = pairs(10_000);
        let mut rng = Streams::new(9).rng("coin", &[]);
        let r = evaluate_with(&ps, 1, |_| Ok(rng.random::<f64>())).unwrap();
        assert!((r.accuracy - 0.5).abs() < 0.02, "{}", r.accuracy);
        let recount = r.predictions.iter().filter(|p| !p.correct).count();
        assert_eq!(r.accuracy, 1.0 - recount as f64 / 10_000.0);
    }

    #[test]
    fn f1_by_hand() {
        // tp=1, fp=1, fn=1
        assert!(
            (binary_f1(&[true, false, true, false], &[true, true, false, false]) - 0.5).abs()
                < 1e-12
        );
    }

    #[test]
    fn csv_layout() {
        let r = EvaluationReport::from_predictions(Vec::new());
        let csv = metrics_csv(&[MetricsRow::new("full", &r)]);
        assert_eq!(
            csv,
            "variant,accuracy,f1,n_pairs\nfull,0.000000,1.000000,0\n"
        );
    }
}
