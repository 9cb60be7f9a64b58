//! Train the full model and its three ablations on one synthetic corpus.
//!
//! cargo run --release --example ablation

use dtdmn::analysis::{metrics_csv, MetricsRow};
use dtdmn::corpus::{build_corpus, CorpusInput};
use dtdmn::synthetic::{desk_corpus_options, desk_model_config, synthesize, SyntheticConfig};
use dtdmn::trainer::ablate;

fn main() -> dtdmn::Result<()> {
    env_logger::init();
    let seed = 7;
    let corpus = synthesize(&SyntheticConfig {
        n_moots: 60,
        seed,
        ..SyntheticConfig::default()
    })?;
    let art = build_corpus(&CorpusInput::Cmv(corpus.posts), &desk_corpus_options(seed))?;
    let mut cfg = desk_model_config(art.vocab.len(), seed);
    cfg.max_epochs = 15;

    let rows = ablate(&art.data, &cfg)?;
    for r in &rows {
        println!(
            "{:<13} best epoch {:>2}, validation {:.3}",
            r.variant.name(),
            r.outcome.best_epoch,
            r.outcome.best_val_accuracy.unwrap_or(f64::NAN)
        );
    }
    let metrics: Vec<MetricsRow> = rows
        .iter()
        .map(|r| MetricsRow::new(r.variant.name(), &r.test))
        .collect();
    print!("{}", metrics_csv(&metrics));
    Ok(())
}
