//! Alternating optimization with early stopping, ablations and grid search.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::analysis::{evaluate, EvaluationReport};
use crate::config::{ModelConfig, Variant};
use crate::corpus::{Conversation, ConversationPair, DatasetSplit};
use crate::error::{Error, Result};
use crate::factor::FactorNoise;
use crate::model::{draw_noise, Dtdmn, ForwardOptions, TurnNoise};
use crate::params::{Adam, Grads, Group};
use crate::rng::{key_hash, Streams};
use crate::tape::{Tape, Var};

/// Early stopping on a validation metric (higher is better).
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<f64>,
    pub best_epoch: usize,
    pub since_improvement: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            best_epoch: 0,
            since_improvement: 0,
        }
    }

    /// Record one epoch; returns whether it strictly improved on the best.
    pub fn observe(&mut self, epoch: usize, metric: f64) -> bool {
        if self.best.is_none_or(|b| metric > b) {
            self.best = Some(metric);
            self.best_epoch = epoch;
            self.since_improvement = 0;
            true
        } else {
            self.since_improvement += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_improvement >= self.patience
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_f1: f64,
    pub seconds: f64,
}

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut out = String::from("epoch,train_loss,val_accuracy,val_f1,seconds\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.3}",
            r.epoch, r.train_loss, r.val_accuracy, r.val_f1, r.seconds
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The checkpoint with the best validation accuracy.
    pub model: Dtdmn,
    pub log: Vec<LogRow>,
    pub best_epoch: usize,
    pub best_val_accuracy: Option<f64>,
    /// Optimizer steps taken per group.
    pub steps: u64,
}

/// Losses of one mini-batch, averaged over its pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub factor: f64,
    pub prediction: f64,
}

impl StepLosses {
    pub fn overall(&self) -> f64 {
        self.prediction + self.factor
    }
}

/// Optimizer state for the two alternating parameter groups.
#[derive(Debug, Clone)]
pub struct Optimizers {
    pub factor: Adam,
    pub rest: Adam,
}

impl Optimizers {
    pub fn new(lr: f64) -> Self {
        Self {
            factor: Adam::new(Group::Factor, lr),
            rest: Adam::new(Group::Rest, lr),
        }
    }
}

/// Order pairs for one epoch: moots shuffled, pairs shuffled within a moot,
/// so a mini-batch reuses each conversation across several pairs.
fn epoch_order<'a>(
    pairs: &'a [ConversationPair],
    streams: &Streams,
    epoch: usize,
) -> Vec<&'a ConversationPair> {
    let mut by_moot: BTreeMap<&str, Vec<&ConversationPair>> = BTreeMap::new();
    for p in pairs {
        by_moot.entry(p.moot_id.as_str()).or_default().push(p);
    }
    let mut rng = streams.rng("shuffle", &[epoch as u64]);
    let mut groups: Vec<Vec<&ConversationPair>> = by_moot.into_values().collect();
    for g in &mut groups {
        g.shuffle(&mut rng);
    }
    groups.shuffle(&mut rng);
    groups.into_iter().flatten().collect()
}

/// Distinct conversations of a batch with their pair multiplicities.
fn batch_conversations<'a>(
    batch: &[&'a ConversationPair],
) -> (Vec<&'a Conversation>, HashMap<String, usize>) {
    let mut order = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut mult: Vec<usize> = Vec::new();
    for p in batch {
        for c in [&p.positive, &p.negative] {
            let key = c.key();
            match index.get(&key) {
                Some(&i) => mult[i] += 1,
                None => {
                    index.insert(key, order.len());
                    order.push(c);
                    mult.push(1);
                }
            }
        }
    }
    let counts = order
        .iter()
        .zip(&mult)
        .map(|(c, m)| (c.key(), *m))
        .collect();
    (order, counts)
}

/// One mini-batch: step A updates the factor encoder on its own objective,
/// then step B updates everything else on the overall objective with the
/// (freshly updated) factors held fixed.
pub fn train_step(
    model: &mut Dtdmn,
    opt: &mut Optimizers,
    batch: &[&ConversationPair],
    streams: &Streams,
    epoch: usize,
    batch_index: usize,
) -> Result<StepLosses> {
    let diverged = || Error::Diverged {
        epoch,
        batch: batch_index,
    };
    let n_pairs = batch.len() as f64;
    let (convs, mult) = batch_conversations(batch);
    let noise: Vec<Vec<TurnNoise>> = convs
        .iter()
        .map(|c| {
            let mut rng = streams.rng(
                "noise",
                &[epoch as u64, batch_index as u64, key_hash(&c.key())],
            );
            draw_noise(&model.config, c, &mut rng)
        })
        .collect();
    let lambda = model.config.lambda;

    // step A: factor encoder only
    let mut grads = Grads::new(&model.params);
    {
        let mut tape = Tape::new(&model.params);
        let mut terms: Vec<Var> = Vec::new();
        for (c, nz) in convs.iter().zip(&noise) {
            let weight = mult[&c.key()] as f64 / n_pairs;
            for (turn, tn) in c.turns.iter().zip(nz) {
                let bow = turn.sparse_bow();
                model.factor.check_bow(&bow)?;
                let vars = model.factor.forward(
                    &mut tape,
                    &bow,
                    FactorNoise::Sample {
                        normal: &tn.normal,
                        gumbel: &tn.gumbel,
                        temperature: model.config.gumbel_temperature,
                    },
                );
                let loss = model.factor.loss(&mut tape, &vars, &bow, lambda);
                terms.push(tape.scale(loss, weight));
            }
        }
        let total = tape.sum(&terms);
        if !tape.scalar(total).is_finite() {
            return Err(diverged());
        }
        tape.backward(total, &mut grads);
    }
    if !grads.all_finite() {
        return Err(diverged());
    }
    opt.factor.step(&mut model.params, &grads);

    // step B: everything but the factor encoder
    let mut grads = Grads::new(&model.params);
    let (prediction, factor_after) = {
        let mut tape = Tape::new(&model.params);
        let mut scores: HashMap<String, Var> = HashMap::new();
        let mut factor_total = 0.0;
        for (c, nz) in convs.iter().zip(&noise) {
            let opts = ForwardOptions {
                noise: Some(nz),
                ..ForwardOptions::default()
            };
            let vars = model.forward(&mut tape, c, opts)?;
            let weight = mult[&c.key()] as f64 / n_pairs;
            for (fv, bow) in vars.factors.iter().zip(&vars.bows) {
                // reported only; the factor encoder is not updated in this step
                let loss = model.factor.loss(&mut tape, fv, bow, lambda);
                factor_total += weight * tape.scalar(loss);
            }
            scores.insert(c.key(), vars.score);
        }
        let mut terms = Vec::with_capacity(batch.len());
        for p in batch {
            let margin = tape.sub(scores[&p.negative.key()], scores[&p.positive.key()]);
            let loss = tape.softplus(margin);
            terms.push(tape.scale(loss, 1.0 / n_pairs));
        }
        let total = tape.sum(&terms);
        let value = tape.scalar(total);
        if !value.is_finite() {
            return Err(diverged());
        }
        tape.backward(total, &mut grads);
        (value, factor_total)
    };
    if !grads.all_finite() || !factor_after.is_finite() {
        return Err(diverged());
    }
    opt.rest.step(&mut model.params, &grads);
    Ok(StepLosses {
        factor: factor_after,
        prediction,
    })
}

/// Train one model; returns the best-validation checkpoint and the log.
pub fn train(data: &DatasetSplit, config: &ModelConfig) -> Result<TrainOutcome> {
    if data.train.is_empty() || data.validation.is_empty() {
        return Err(Error::config(
            "training needs nonempty train and validation splits",
        ));
    }
    let mut model = Dtdmn::new(config.clone())?;
    let streams = Streams::new(config.seed);
    let mut opt = Optimizers::new(config.learning_rate);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = model.clone();
    let mut log = Vec::new();
    let batch_size = config.batch_size.max(1);
    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let order = epoch_order(&data.train, &streams, epoch);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(batch_size).enumerate() {
            let losses = train_step(&mut model, &mut opt, batch, &streams, epoch, b)?;
            loss_sum += losses.overall() * batch.len() as f64;
        }
        let val = evaluate(&model, &data.validation, config.seed)?;
        if stopper.observe(epoch, val.accuracy) {
            best = model.clone();
        }
        log.push(LogRow {
            epoch,
            train_loss: loss_sum / data.train.len() as f64,
            val_accuracy: val.accuracy,
            val_f1: val.f1,
            seconds: started.elapsed().as_secs_f64(),
        });
        log::info!(
            "{} epoch {epoch}: loss {:.4}, val acc {:.4}",
            config.variant,
            loss_sum / data.train.len() as f64,
            val.accuracy
        );
        if stopper.should_stop() {
            break;
        }
    }
    Ok(TrainOutcome {
        model: best,
        log,
        best_epoch: stopper.best_epoch,
        best_val_accuracy: stopper.best,
        steps: opt.rest.steps(),
    })
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub variant: Variant,
    pub outcome: TrainOutcome,
    pub test: EvaluationReport,
}

/// Train every variant with the same seed and data; evaluate on the test split.
pub fn ablate(data: &DatasetSplit, base: &ModelConfig) -> Result<Vec<AblationRow>> {
    Variant::ALL
        .iter()
        .map(|&variant| {
            let cfg = ModelConfig {
                variant,
                ..base.clone()
            };
            let outcome = train(data, &cfg)?;
            let test = evaluate(&outcome.model, &data.test, cfg.seed)?;
            Ok(AblationRow {
                variant,
                outcome,
                test,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub topics: usize,
    pub discourse: usize,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub rows: Vec<GridRow>,
    /// Index of the best row (first on ties).
    pub best: usize,
}

impl GridResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("topics,discourse,val_accuracy,best\n");
        for (i, r) in self.rows.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{:.6},{}",
                r.topics,
                r.discourse,
                r.val_accuracy,
                i == self.best
            );
        }
        out
    }
}

/// Train one model per `(K, D)` point; `max_epochs` optionally shortens each run.
pub fn grid_search(
    data: &DatasetSplit,
    topic_grid: &[usize],
    discourse_grid: &[usize],
    base: &ModelConfig,
    max_epochs: Option<usize>,
) -> Result<GridResult> {
    if topic_grid.is_empty() || discourse_grid.is_empty() {
        return Err(Error::config("grid search needs nonempty grids"));
    }
    let mut rows = Vec::new();
    for &topics in topic_grid {
        for &discourse in discourse_grid {
            let cfg = ModelConfig {
                topics,
                discourse,
                max_epochs: max_epochs.unwrap_or(base.max_epochs),
                ..base.clone()
            };
            let outcome = train(data, &cfg)?;
            rows.push(GridRow {
                topics,
                discourse,
                val_accuracy: outcome.best_val_accuracy.unwrap_or(0.0),
            });
        }
    }
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.val_accuracy > rows[best].val_accuracy {
            best = i;
        }
    }
    Ok(GridResult { rows, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopping_example() {
        let mut s = EarlyStopping::new(3);
        let mut stopped_after = None;
        for (i, acc) in [0.6, 0.62, 0.62, 0.62, 0.62, 0.7].iter().enumerate() {
            s.observe(i + 1, *acc);
            if s.should_stop() {
                stopped_after = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped_after, Some(5));
        assert_eq!(s.best_epoch, 2);
        assert_eq!(s.best, Some(0.62));
    }

    #[test]
    fn counter_resets_on_strict_improvement() {
        let mut s = EarlyStopping::new(5);
        s.observe(1, 0.5);
        s.observe(2, 0.5);
        assert_eq!(s.since_improvement, 1);
        s.observe(3, 0.51);
        assert_eq!(s.since_improvement, 0);
    }
}
