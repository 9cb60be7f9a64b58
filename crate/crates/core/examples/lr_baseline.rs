//! The tf-idf logistic-regression baseline, scored pairwise.
//!
//! cargo run --release --example lr_baseline

use dtdmn::analysis::{lr_tfidf_baseline, BaselineOptions};
use dtdmn::corpus::{build_corpus, CorpusInput};
use dtdmn::synthetic::{desk_corpus_options, synthesize, SyntheticConfig};

fn main() -> dtdmn::Result<()> {
    let seed = 3;
    let corpus = synthesize(&SyntheticConfig {
        n_moots: 100,
        seed,
        ..SyntheticConfig::default()
    })?;
    let art = build_corpus(&CorpusInput::Cmv(corpus.posts), &desk_corpus_options(seed))?;
    println!(
        "{} train and {} test pairs",
        art.data.train.len(),
        art.data.test.len()
    );
    for l1 in [0.0, 1e-4, 1e-2] {
        let opts = BaselineOptions {
            l1,
            ..BaselineOptions::default()
        };
        let r = lr_tfidf_baseline(&art.data.train, &art.data.test, seed, &opts)?;
        println!("l1 {l1:<7} accuracy {:.3} f1 {:.3}", r.accuracy, r.f1);
    }
    Ok(())
}
