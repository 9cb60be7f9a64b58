//! Pick the number of topic and discourse factors by validation accuracy.
//!
//! cargo run --release --example grid_search

use dtdmn::corpus::{build_corpus, CorpusInput};
use dtdmn::synthetic::{desk_corpus_options, desk_model_config, synthesize, SyntheticConfig};
use dtdmn::trainer::grid_search;

fn main() -> dtdmn::Result<()> {
    env_logger::init();
    let seed = 11;
    let corpus = synthesize(&SyntheticConfig {
        n_moots: 60,
        seed,
        ..SyntheticConfig::default()
    })?;
    let art = build_corpus(&CorpusInput::Cmv(corpus.posts), &desk_corpus_options(seed))?;
    let base = desk_model_config(art.vocab.len(), seed);
    let grid = grid_search(&art.data, &[1, 3, 6], &[1, 2], &base, Some(10))?;
    print!("{}", grid.to_csv());
    let best = &grid.rows[grid.best];
    println!("best: {} topics, {} discourse", best.topics, best.discourse);
    Ok(())
}
