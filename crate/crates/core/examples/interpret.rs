//! Train on a synthetic corpus, then inspect the learned factors: top words,
//! strong-topic counts per side, word assignments and discourse effects.
//!
//! cargo run --release --example interpret

use dtdmn::analysis::{
    assignment_map, discourse_effect_over_turns, effect_csv, factor_summaries, histogram_csv,
    masked_factor_effect, strong_topic_histogram,
};
use dtdmn::corpus::{build_corpus, CorpusInput};
use dtdmn::factor::FactorKind;
use dtdmn::synthetic::{desk_corpus_options, desk_model_config, synthesize, SyntheticConfig};
use dtdmn::trainer::train;

fn main() -> dtdmn::Result<()> {
    env_logger::init();
    let seed = 42;
    let corpus = synthesize(&SyntheticConfig {
        n_moots: 100,
        seed,
        ..SyntheticConfig::default()
    })?;
    let art = build_corpus(&CorpusInput::Cmv(corpus.posts), &desk_corpus_options(seed))?;
    let model = train(&art.data, &desk_model_config(art.vocab.len(), seed))?.model;

    println!("planted clusters:");
    for c in &corpus.truth.clusters {
        println!("    {}", c.join(" "));
    }
    println!(
        "planted markers: {}",
        corpus.truth.marker_words().collect::<Vec<_>>().join(" ")
    );
    for f in factor_summaries(&model, &art.vocab, 8)? {
        let kind = match f.kind {
            FactorKind::Topic => "topic",
            FactorKind::Discourse => "discourse",
        };
        println!("{kind} {}: {}", f.index, f.words.join(" "));
    }

    let test: Vec<_> = art
        .data
        .test
        .iter()
        .flat_map(|p| [p.positive.clone(), p.negative.clone()])
        .collect();
    print!(
        "{}",
        histogram_csv(&strong_topic_histogram(&model, &test, 0.5)?)
    );

    let conv = &test[0];
    let map = assignment_map(&model, &art.vocab, conv)?;
    println!("{} ({:?})", map.conv_id, conv.label);
    for turn in &map.turns {
        let words: Vec<String> = turn
            .iter()
            .map(|w| match w.assignment.kind {
                FactorKind::Topic => w.token.clone(),
                FactorKind::Discourse => format!("[{}]", w.token),
            })
            .collect();
        println!("    {}", words.join(" "));
    }
    for k in 0..model.config.topics + model.config.discourse {
        println!(
            "component {k} effect by prefix: {:.3?}",
            masked_factor_effect(&model, conv, k)?
        );
    }
    for d in 0..model.config.discourse {
        print!(
            "{}",
            effect_csv(&discourse_effect_over_turns(&model, &test, d)?)
        );
    }
    Ok(())
}
