//! Step the episodic memory through one conversation turn by turn and
//! compare with the model's own trace.
//!
//! cargo run --release --example memory_trace

use dtdmn::corpus::{encode_argument, normalize_text, Conversation, Label, Vocabulary};
use dtdmn::memory::memory_weight;
use dtdmn::model::{Dtdmn, Process};
use dtdmn::ModelConfig;

const TURNS: [&str; 3] = [
    "Taxes on sugar change what people buy.",
    "However the evidence on sugar taxes is mixed, so I disagree.",
    "Fair point, the data from Mexico shows a small drop in purchases.",
];

fn main() -> dtdmn::Result<()> {
    let tokens: Vec<Vec<String>> = TURNS.iter().map(|t| normalize_text(t)).collect();
    let mut lines = vec!["<pad>".to_string(), "<unk>".to_string()];
    for t in &tokens {
        for w in t {
            if !lines.contains(w) {
                lines.push(w.clone());
            }
        }
    }
    let vocab = Vocabulary::from_lines(&lines.join("\n"));
    let cfg = ModelConfig {
        topics: 2,
        discourse: 2,
        vocab_size: vocab.len(),
        hidden: 6,
        memory_dim: 4,
        word_embedding: 6,
        encoder_hidden: 8,
        latent_dim: 4,
        max_len: 8,
        seed: 9,
        ..ModelConfig::default()
    };
    let conv = Conversation {
        conv_id: "demo".into(),
        moot_id: "demo".into(),
        label: Label::Winning,
        turns: tokens
            .iter()
            .map(|t| encode_argument(t, &vocab, cfg.max_len))
            .collect(),
    };
    let model = Dtdmn::new(cfg.clone())?;
    let Process::Memory(memory) = &model.process else {
        unreachable!("the full variant keeps the memory");
    };

    let trace = model.trace(&conv)?;
    let mut state = memory.initial_state(&model.params);
    for (i, (turn, tt)) in conv.turns.iter().zip(&trace.turns).enumerate() {
        let w = memory_weight(&tt.z, &tt.d, cfg.topics, cfg.discourse)?;
        let (next, read) =
            memory.process_turn(&model.params, &state, &tt.z, &tt.d, &turn.seq, &turn.mask())?;
        let drift: f64 = next
            .data
            .iter()
            .zip(&state.data)
            .map(|(a, b)| (a - b).abs())
            .sum();
        let gap: f64 = read
            .iter()
            .zip(&tt.read)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("turn {}: weight {:.3?}", i + 1, w.w);
        println!("    read {read:.3?}");
        println!("    memory moved by {drift:.4}; read differs from the trace by {gap:.1e}");
        state = next;
    }
    println!("turn attention {:.3?}", trace.turn_attention);
    println!("score {:.4}", trace.score);
    Ok(())
}
