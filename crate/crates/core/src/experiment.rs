//! The planted-signal experiment: synthesize a corpus, train every variant,
//! run a label-permutation control and the tf-idf baseline, and check how
//! well the learned factors recover the planted clusters and markers.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::Serialize;

use crate::analysis::{
    evaluate, lr_tfidf_baseline, metrics_csv, top_words, BaselineOptions, MetricsRow,
};
use crate::config::{ModelConfig, Variant};
use crate::corpus::{build_corpus, CorpusArtifacts, CorpusInput, CorpusOptions, Vocabulary};
use crate::error::Result;
use crate::factor::{FactorKind, FactorNoise};
use crate::model::Dtdmn;
use crate::synthetic::{
    desk_corpus_options, desk_model_config, synthesize, PlantedTruth, SyntheticConfig,
};
use crate::tape::Tape;
use crate::trainer::{ablate, train};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    pub synthetic: SyntheticConfig,
    pub corpus: CorpusOptions,
    /// `vocab_size` is filled in from the built corpus.
    pub model: ModelConfig,
    pub baseline: BaselineOptions,
}

impl ExperimentOptions {
    /// Desk-scale settings with one seed for every stage.
    pub fn desk(seed: u64) -> Self {
        Self {
            synthetic: SyntheticConfig {
                seed,
                ..SyntheticConfig::default()
            },
            corpus: desk_corpus_options(seed),
            model: desk_model_config(0, seed),
            baseline: BaselineOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub ablation: Vec<MetricsRow>,
    /// Full model trained and tested on label-permuted pairs.
    pub permuted: MetricsRow,
    pub baseline: MetricsRow,
    /// Share of planted marker tokens in the test conversations that the
    /// full model assigns to discourse.
    pub marker_discourse_share: f64,
    /// For each planted cluster, the largest number of its words among the
    /// top ten words of any learned topic.
    pub cluster_coverage: Vec<usize>,
    pub seconds: f64,
}

impl ExperimentReport {
    pub fn accuracy(&self, variant: Variant) -> f64 {
        self.ablation
            .iter()
            .find(|r| r.variant == variant.name())
            .map(|r| r.accuracy)
            .unwrap_or(f64::NAN)
    }

    /// Every metrics row: the four variants, the permuted control and the baseline.
    pub fn metrics_csv(&self) -> String {
        let mut rows = self.ablation.clone();
        rows.push(self.permuted.clone());
        rows.push(self.baseline.clone());
        metrics_csv(&rows)
    }
}

/// Fraction of marker tokens (counted with multiplicity over each turn's
/// full bag of words) whose word assignment is discourse.
pub fn marker_discourse_share(
    model: &Dtdmn,
    vocab: &Vocabulary,
    truth: &PlantedTruth,
    artifacts: &CorpusArtifacts,
) -> Result<f64> {
    let markers: BTreeSet<usize> = truth.marker_words().filter_map(|w| vocab.get(w)).collect();
    let mut seen = BTreeSet::new();
    let (mut hits, mut total) = (0u64, 0u64);
    for pair in &artifacts.data.test {
        for conv in [&pair.positive, &pair.negative] {
            if !seen.insert(conv.key()) {
                continue;
            }
            for turn in &conv.turns {
                let mut tape = Tape::new(&model.params);
                let vars = model
                    .factor
                    .forward(&mut tape, &turn.sparse_bow(), FactorNoise::Mean);
                let (z, d) = (tape.value(vars.z).to_vec(), tape.value(vars.d).to_vec());
                drop(tape);
                for &(w, c) in turn.bow.iter().filter(|(w, _)| markers.contains(w)) {
                    total += u64::from(c);
                    if model.factor.word_assignment(&model.params, w, &z, &d)?.kind
                        == FactorKind::Discourse
                    {
                        hits += u64::from(c);
                    }
                }
            }
        }
    }
    Ok(if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    })
}

/// Best overlap of each planted cluster with the top ten words of a topic.
pub fn cluster_coverage(
    model: &Dtdmn,
    vocab: &Vocabulary,
    truth: &PlantedTruth,
) -> Result<Vec<usize>> {
    let tops: Vec<Vec<String>> = (0..model.config.topics)
        .map(|k| top_words(model, vocab, FactorKind::Topic, k, 10))
        .collect::<Result<_>>()?;
    Ok(truth
        .clusters
        .iter()
        .map(|cluster| {
            tops.iter()
                .map(|top| top.iter().filter(|w| cluster.contains(w)).count())
                .max()
                .unwrap_or(0)
        })
        .collect())
}

pub fn run_experiment(opts: &ExperimentOptions) -> Result<ExperimentReport> {
    let start = Instant::now();
    let corpus = synthesize(&opts.synthetic)?;
    let input = CorpusInput::Cmv(corpus.posts);
    let artifacts = build_corpus(&input, &opts.corpus)?;
    let model_cfg = ModelConfig {
        vocab_size: artifacts.vocab.len(),
        ..opts.model.clone()
    };
    let seed = model_cfg.seed;

    let rows = ablate(&artifacts.data, &model_cfg)?;
    let ablation = rows
        .iter()
        .map(|r| MetricsRow::new(r.variant.name(), &r.test))
        .collect();
    let full = rows
        .iter()
        .find(|r| r.variant == Variant::Full)
        .map(|r| &r.outcome.model)
        .expect("ablation trains the full variant");
    let marker_share = marker_discourse_share(full, &artifacts.vocab, &corpus.truth, &artifacts)?;
    let coverage = cluster_coverage(full, &artifacts.vocab, &corpus.truth)?;

    let permuted_art = build_corpus(
        &input,
        &CorpusOptions {
            permute_labels: true,
            ..opts.corpus.clone()
        },
    )?;
    let permuted_cfg = ModelConfig {
        vocab_size: permuted_art.vocab.len(),
        variant: Variant::Full,
        ..model_cfg.clone()
    };
    let permuted_model = train(&permuted_art.data, &permuted_cfg)?.model;
    let permuted = MetricsRow::new(
        "full_permuted",
        &evaluate(&permuted_model, &permuted_art.data.test, seed)?,
    );

    let baseline = MetricsRow::new(
        "lr_tfidf",
        &lr_tfidf_baseline(
            &artifacts.data.train,
            &artifacts.data.test,
            seed,
            &opts.baseline,
        )?,
    );

    Ok(ExperimentReport {
        seed,
        ablation,
        permuted,
        baseline,
        marker_discourse_share: marker_share,
        cluster_coverage: coverage,
        seconds: start.elapsed().as_secs_f64(),
    })
}
