//! Persuasiveness predictor: an attentive GRU over per-turn memory reads,
//! a linear score, and the pairwise and overall objectives.

use rand::Rng;
use serde::Serialize;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::memory::{attn_params, gru_cell};
use crate::params::{Group, ParamId, ParamSet};
use crate::tape::{AttnParams, GruCell, Tape, Var};

/// `log(1 + exp(y_neg - y_pos))`, stable for large margins.
pub fn pairwise_loss(y_pos: f64, y_neg: f64) -> f64 {
    let x = y_neg - y_pos;
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `(d/dy_pos, d/dy_neg)` of [`pairwise_loss`].
pub fn pairwise_loss_grad(y_pos: f64, y_neg: f64) -> (f64, f64) {
    let s = 1.0 / (1.0 + (y_pos - y_neg).exp());
    (-s, s)
}

/// `L = L_pred - sum_t L_factor^t` with factor terms in their maximization
/// convention (the negation of [`crate::factor::factor_loss`]).
pub fn overall_loss(pred_loss: f64, factor_objectives: &[f64]) -> f64 {
    pred_loss - factor_objectives.iter().sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    First,
    Second,
}

/// Strict comparison with ties going to the first conversation.
pub fn pick_winner(y_first: f64, y_second: f64) -> Winner {
    if y_second > y_first {
        Winner::Second
    } else {
        Winner::First
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConversationScore {
    pub h_r: Vec<f64>,
    pub y: f64,
    pub per_turn_states: Vec<Vec<f64>>,
    pub attention_weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Predictor {
    gru: GruCell,
    attn: AttnParams,
    pub score_w: ParamId,
    pub score_b: ParamId,
    dim: usize,
}

#[derive(Debug, Clone)]
pub struct SummaryVars {
    pub h_r: Var,
    pub states: Vec<Var>,
}

impl Predictor {
    pub fn register<R: Rng>(params: &mut ParamSet, cfg: &ModelConfig, rng: &mut R) -> Self {
        let e = cfg.memory_dim;
        let gru = gru_cell(params, "pred.gru", e, e, rng);
        let attn = attn_params(params, "pred.attn", e, rng);
        let scale = 1.0 / (e as f64).sqrt();
        let score_w = params.add_uniform("pred.score.w", Group::Rest, 1, e, scale, rng);
        let score_b = params.add_uniform("pred.score.b", Group::Rest, 1, 1, 0.0, rng);
        Self {
            gru,
            attn,
            score_w,
            score_b,
            dim: e,
        }
    }

    /// Unidirectional GRU over the reads followed by attention pooling.
    pub fn summarize(&self, tape: &mut Tape, reads: &[Var]) -> Result<SummaryVars> {
        if reads.is_empty() {
            return Err(Error::config(
                "cannot summarize a conversation with no reads",
            ));
        }
        let mut h = tape.input(vec![0.0; self.dim]);
        let mut states = Vec::with_capacity(reads.len());
        for r in reads {
            h = self.gru_step(tape, *r, h);
            states.push(h);
        }
        let h_r = tape.attention(self.attn, &states);
        Ok(SummaryVars { h_r, states })
    }

    fn gru_step(&self, tape: &mut Tape, r: Var, h: Var) -> Var {
        tape.gru(self.gru, r, h)
    }

    /// `y = W h_r + b`.
    pub fn score(&self, tape: &mut Tape, h_r: Var) -> Var {
        tape.affine(self.score_w, Some(self.score_b), h_r)
    }

    /// Plain-valued summary and score of a list of reads.
    pub fn evaluate(&self, params: &ParamSet, reads: &[Vec<f64>]) -> Result<ConversationScore> {
        let mut tape = Tape::new(params);
        let vars: Vec<Var> = reads.iter().map(|r| tape.input(r.clone())).collect();
        for r in reads {
            if r.len() != self.dim {
                return Err(Error::dimension("read", self.dim, r.len()));
            }
        }
        let summary = self.summarize(&mut tape, &vars)?;
        let y = self.score(&mut tape, summary.h_r);
        Ok(ConversationScore {
            h_r: tape.value(summary.h_r).to_vec(),
            y: tape.scalar(y),
            per_turn_states: summary
                .states
                .iter()
                .map(|s| tape.value(*s).to_vec())
                .collect(),
            attention_weights: tape.attention_weights(summary.h_r).to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pairwise_loss_examples() {
        assert_abs_diff_eq!(pairwise_loss(0.0, 0.0), std::f64::consts::LN_2, epsilon = 1e-6);
        assert_abs_diff_eq!(pairwise_loss(1.0, 0.0), 0.313262, epsilon = 1e-6);
        assert_abs_diff_eq!(pairwise_loss(0.0, 1.0), 1.313262, epsilon = 1e-6);
        assert!(pairwise_loss(1000.0, 0.0) >= 0.0);
        assert_abs_diff_eq!(pairwise_loss(0.0, 1000.0), 1000.0, epsilon = 1e-9);
    }

    #[test]
    fn overall_loss_sign_convention() {
        let ln2 = 2f64.ln();
        assert_eq!(overall_loss(ln2, &[]), ln2);
        // a minimization-form factor loss of 0.5 is an objective of -0.5
        assert_abs_diff_eq!(overall_loss(ln2, &[-0.5]), ln2 + 0.5, epsilon = 1e-12);
        assert_eq!(overall_loss(0.0, &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn winner_rule() {
        assert_eq!(pick_winner(0.7, 0.2), Winner::First);
        assert_eq!(pick_winner(0.2, 0.7), Winner::Second);
        assert_eq!(pick_winner(0.4, 0.4), Winner::First);
    }
}
