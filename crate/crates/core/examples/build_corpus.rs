//! Flatten a small debate forest into conversations and pair them.
//!
//! cargo run --release --example build_corpus

use std::path::Path;

use dtdmn::corpus::{
    build_corpus, read_jsonl, CorpusInput, CorpusOptions, FlattenOptions, RawPost,
};

fn main() -> dtdmn::Result<()> {
    let input = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/debate_tree.jsonl");
    let posts: Vec<RawPost> = read_jsonl(&input)?;
    println!("{} posts in {} moots", posts.len(), {
        let mut moots: Vec<&str> = posts.iter().map(|p| p.moot_id.as_str()).collect();
        moots.dedup();
        moots.len()
    });

    // the fixture is tiny, so relax the length and challenger filters
    let opts = CorpusOptions {
        min_count: 1,
        max_len: 4,
        flatten: FlattenOptions {
            min_words: 3,
            min_challengers: 2,
        },
        ..CorpusOptions::default()
    };
    let art = build_corpus(&CorpusInput::Cmv(posts), &opts)?;
    println!("{}", serde_json::to_string_pretty(&art.stats)?);

    for c in &art.conversations {
        println!("{} {:?} {} turns", c.conv_id, c.label, c.num_turns());
        for t in &c.turns {
            let words: Vec<&str> = t.tokens().iter().map(|&i| art.vocab.token(i)).collect();
            println!("    {}", words.join(" "));
        }
    }
    for (name, part) in [
        ("train", &art.data.train),
        ("validation", &art.data.validation),
        ("test", &art.data.test),
    ] {
        for p in part {
            println!(
                "{name}: {} wins over {}",
                p.positive.conv_id, p.negative.conv_id
            );
        }
    }
    Ok(())
}
