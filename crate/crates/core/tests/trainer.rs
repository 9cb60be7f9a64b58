//! Training-loop behavior on small synthetic data.

mod common;

use dtdmn::model::Dtdmn;
use dtdmn::params::Group;
use dtdmn::rng::Streams;
use dtdmn::synthetic::{LoserTopics, SyntheticConfig};
use dtdmn::trainer::{grid_search, train, train_step, Optimizers};
use dtdmn::Variant;

/// Groups whose parameters differ bitwise between two models.
fn changed_groups(before: &Dtdmn, after: &Dtdmn) -> Vec<Group> {
    let mut groups: Vec<Group> = before
        .params
        .entries()
        .iter()
        .zip(after.params.entries())
        .filter(|(a, b)| {
            a.tensor
                .data
                .iter()
                .zip(&b.tensor.data)
                .any(|(x, y)| x.to_bits() != y.to_bits())
        })
        .map(|(a, _)| a.group)
        .collect();
    groups.dedup();
    groups
}

/// One real mini-batch step with one optimizer's learning rate set to zero.
fn step_with_rates(factor_lr: f64, rest_lr: f64) -> Vec<Group> {
    let (data, cfg) = common::toy_split(6, Some(10), 14);
    let mut model = Dtdmn::new(cfg.clone()).unwrap();
    let before = model.clone();
    let mut opt = Optimizers::new(cfg.learning_rate);
    opt.factor.lr = factor_lr;
    opt.rest.lr = rest_lr;
    let batch: Vec<_> = data.train.iter().take(4).collect();
    train_step(&mut model, &mut opt, &batch, &Streams::new(cfg.seed), 1, 0).unwrap();
    changed_groups(&before, &model)
}

#[test]
fn loss_drops_by_a_third_on_fifty_pairs() {
    // two words per cluster and every content word on its turn's focus: the
    // bag of words is predictable enough for reconstruction to fall well below ln V
    let (data, mut cfg) = common::toy_split_from(
        SyntheticConfig {
            n_moots: 12,
            seed: 11,
            cluster_size: 2,
            content_words: 50,
            marker_words: 4,
            focus_share: 1.0,
            loser_topics: LoserTopics::Rotating,
            ..SyntheticConfig::default()
        },
        Some(50),
    );
    cfg.max_epochs = 30;
    cfg.batch_size = 5;
    cfg.patience = 1000;
    let out = train(&data, &cfg).unwrap();
    assert_eq!(out.log.len(), 30);
    let first = out.log[0].train_loss;
    let best = out
        .log
        .iter()
        .map(|r| r.train_loss)
        .fold(f64::INFINITY, f64::min);
    assert!(best <= 0.7 * first, "loss {first} -> {best}");
}

#[test]
fn returned_checkpoint_has_the_best_validation_accuracy() {
    let (data, mut cfg) = common::toy_split(12, Some(50), 12);
    cfg.max_epochs = 12;
    cfg.patience = 3;
    let out = train(&data, &cfg).unwrap();
    let best = out.log.iter().map(|r| r.val_accuracy).fold(0.0, f64::max);
    assert_eq!(out.best_val_accuracy, Some(best));
    assert_eq!(out.log[out.best_epoch - 1].val_accuracy, best);
    let again = dtdmn::analysis::evaluate(&out.model, &data.validation, cfg.seed).unwrap();
    assert_eq!(again.accuracy, best);
}

#[test]
fn every_variant_trains() {
    let (data, mut cfg) = common::toy_split(6, Some(20), 13);
    cfg.max_epochs = 2;
    for variant in Variant::ALL {
        cfg.variant = variant;
        let out = train(&data, &cfg).unwrap();
        assert!(
            out.log.iter().all(|r| r.train_loss.is_finite()),
            "{variant}"
        );
    }
}

#[test]
fn factor_step_touches_only_the_factor_encoder() {
    assert_eq!(step_with_rates(1e-2, 0.0), vec![Group::Factor]);
}

#[test]
fn prediction_step_leaves_the_factor_encoder_alone() {
    let changed = step_with_rates(0.0, 1e-2);
    assert!(!changed.is_empty());
    assert!(changed.iter().all(|g| *g == Group::Rest), "{changed:?}");
}

#[test]
fn same_seed_gives_identical_parameters() {
    let (data, mut cfg) = common::toy_split(6, Some(20), 15);
    cfg.max_epochs = 3;
    let a = train(&data, &cfg).unwrap().model;
    let b = train(&data, &cfg).unwrap().model;
    assert!(changed_groups(&a, &b).is_empty());
    cfg.seed += 1;
    let c = train(&data, &cfg).unwrap().model;
    assert!(!changed_groups(&a, &c).is_empty());
}

#[test]
fn one_topic_is_the_worst_grid_point_on_three_planted_topics() {
    let (data, cfg) = common::toy_split(200, None, 42);
    let grid = grid_search(&data, &[1, 3, 10], &[cfg.discourse], &cfg, None).unwrap();
    let acc: Vec<f64> = grid.rows.iter().map(|r| r.val_accuracy).collect();
    assert!(acc[0] < acc[1] && acc[0] < acc[2], "{}", grid.to_csv());
}
