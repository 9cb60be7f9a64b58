//! Checks shared by the focused test files and the acceptance run.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use dtdmn::analysis::masked_factor_effect;
use dtdmn::corpus::{
    build_corpus, parse_jsonl, Conversation, CorpusArtifacts, CorpusInput, CorpusOptions,
    EncodedArgument, FlattenOptions, Label, RawPost, PAD,
};
use dtdmn::factor::{FactorEncoder, FactorNoise};
use dtdmn::gradcheck::{check_gradients, GradCheck};
use dtdmn::memory::DynamicMemory;
use dtdmn::model::{draw_noise, Dtdmn, ForwardOptions, Process};
use dtdmn::params::ParamSet;
use dtdmn::predictor::{pairwise_loss, pairwise_loss_grad, Predictor};
use dtdmn::rng::Streams;
use dtdmn::tape::{SparseInput, Tape, Var};
use dtdmn::{ModelConfig, Variant};
use proptest::prelude::*;

pub const GRAD_TOLERANCE: f64 = 1e-3;
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;
pub const V: usize = 20;
pub const MAX_LEN: usize = 6;

/// V=20, K=3, D=2, memory 8, hidden 8, L=6.
pub fn tiny() -> ModelConfig {
    ModelConfig {
        vocab_size: V,
        topics: 3,
        discourse: 2,
        memory_dim: 8,
        hidden: 8,
        max_len: MAX_LEN,
        word_embedding: 5,
        encoder_hidden: 7,
        latent_dim: 4,
        ..ModelConfig::default()
    }
}

const H: f64 = 1e-6;

fn bow() -> SparseInput {
    vec![(0, 2.0), (3, 1.0), (7, 4.0), (19, 1.0)].into()
}

pub fn factor_loss_gradient() -> GradCheck {
    let cfg = tiny();
    let mut params = ParamSet::new();
    let enc = FactorEncoder::register(&mut params, &cfg, &mut Streams::new(5).rng("init", &[]));
    let normal = [0.3, -1.2, 0.5, 0.9];
    let gumbel = [0.4, -0.2];
    check_gradients(&mut params, H, |tape| {
        let noise = FactorNoise::Sample {
            normal: &normal,
            gumbel: &gumbel,
            temperature: 0.67,
        };
        let vars = enc.forward(tape, &bow(), noise);
        enc.loss(tape, &vars, &bow(), 0.01)
    })
}

pub fn process_turn_gradient() -> GradCheck {
    let cfg = tiny();
    let mut params = ParamSet::new();
    let mem = DynamicMemory::register(&mut params, &cfg, &mut Streams::new(6).rng("init", &[]));
    let tokens = [4, 9, 9, 1, 17, 2];
    let w = [0.2, 0.5, 0.3, 0.9, 0.1];
    let probe: Vec<f64> = (0..cfg.memory_dim).map(|i| 0.3 - 0.1 * i as f64).collect();
    let init = mem.initial_state(&params).data;
    let mem_probe: Vec<f64> = (0..init.len()).map(|i| (i as f64 * 0.61).cos()).collect();
    check_gradients(&mut params, H, |tape| {
        let m0 = tape.input(init.clone());
        let wv = tape.input(w.to_vec());
        let out = mem.turn(tape, m0, wv, &tokens, None).unwrap();
        // project the read and the new memory to a scalar
        let p = tape.input(probe.clone());
        let r = tape.dot(out.read, p);
        let q = tape.input(mem_probe.clone());
        let m = tape.dot(out.memory, q);
        tape.sum(&[r, m])
    })
}

pub fn summarize_and_score_gradient() -> GradCheck {
    let cfg = tiny();
    let mut params = ParamSet::new();
    let pred = Predictor::register(&mut params, &cfg, &mut Streams::new(7).rng("init", &[]));
    let reads: Vec<Vec<f64>> = (0..3)
        .map(|t| {
            (0..cfg.memory_dim)
                .map(|i| ((t * 7 + i) as f64 * 0.37).sin())
                .collect()
        })
        .collect();
    check_gradients(&mut params, H, |tape| {
        let vars: Vec<Var> = reads.iter().map(|r| tape.input(r.clone())).collect();
        let s = pred.summarize(tape, &vars).unwrap();
        pred.score(tape, s.h_r)
    })
}

/// The closed-form derivative of the pairwise loss against central
/// differences, then the same loss on the tape through the score layer.
pub fn pairwise_loss_gradient() -> GradCheck {
    let mut closed = GradCheck {
        max_relative_error: 0.0,
        location: String::new(),
        entries: 0,
    };
    for (a, b) in [(0.0, 0.0), (1.0, -0.5), (-2.0, 3.0), (10.0, 9.5)] {
        let (ga, gb) = pairwise_loss_grad(a, b);
        let na = (pairwise_loss(a + H, b) - pairwise_loss(a - H, b)) / (2.0 * H);
        let nb = (pairwise_loss(a, b + H) - pairwise_loss(a, b - H)) / (2.0 * H);
        for (g, n, which) in [(ga, na, "positive"), (gb, nb, "negative")] {
            let err = (g - n).abs() / g.abs().max(n.abs()).max(1e-5);
            closed.entries += 1;
            if err > closed.max_relative_error {
                closed.max_relative_error = err;
                closed.location = format!("d/d{which} at ({a}, {b})");
            }
        }
    }
    let mut params = ParamSet::new();
    let cfg = tiny();
    let pred = Predictor::register(&mut params, &cfg, &mut Streams::new(8).rng("init", &[]));
    let (pos, neg) = (vec![0.2; cfg.memory_dim], vec![-0.4; cfg.memory_dim]);
    let taped = check_gradients(&mut params, H, |tape| {
        let hp = tape.input(pos.clone());
        let hn = tape.input(neg.clone());
        let yp = pred.score(tape, hp);
        let yn = pred.score(tape, hn);
        let margin = tape.sub(yn, yp);
        tape.softplus(margin)
    });
    let entries = closed.entries + taped.entries;
    let mut worst = if taped.max_relative_error > closed.max_relative_error {
        taped
    } else {
        closed
    };
    worst.entries = entries;
    worst
}

pub fn gradient_checks() -> Vec<(&'static str, GradCheck)> {
    vec![
        ("factor_loss", factor_loss_gradient()),
        ("process_turn", process_turn_gradient()),
        ("summarize+score", summarize_and_score_gradient()),
        ("pairwise_loss", pairwise_loss_gradient()),
    ]
}

// ---- normalization properties ----

/// Tiny model from `seed` with every parameter multiplied by `scale`.
pub fn scaled_model(seed: u64, scale: f64, temperature: f64) -> Dtdmn {
    let cfg = ModelConfig {
        word_embedding: 8,
        encoder_hidden: 8,
        gumbel_temperature: temperature,
        seed,
        variant: Variant::Full,
        ..tiny()
    };
    let mut m = Dtdmn::new(cfg).unwrap();
    let ids: Vec<_> = m.params.ids().collect();
    for id in ids {
        m.params
            .get_mut(id)
            .data
            .iter_mut()
            .for_each(|x| *x *= scale);
    }
    m
}

pub fn conversation(turns: &[Vec<usize>]) -> Conversation {
    let turns = turns
        .iter()
        .map(|tokens| {
            let mut bow: BTreeMap<usize, u32> = BTreeMap::new();
            for &t in tokens {
                *bow.entry(t).or_default() += 1;
            }
            let len = tokens.len().min(MAX_LEN);
            let mut seq = tokens[..len].to_vec();
            seq.resize(MAX_LEN, PAD);
            EncodedArgument {
                bow: bow.into_iter().collect(),
                seq,
                len,
            }
        })
        .collect();
    Conversation {
        conv_id: "c".into(),
        moot_id: "m".into(),
        label: Label::Winning,
        turns,
    }
}

pub fn turns_strategy() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(2..V, 1..12), 1..4)
}

pub fn assert_simplex(name: &str, v: &[f64]) -> Result<(), TestCaseError> {
    let sum: f64 = v.iter().sum();
    prop_assert!(
        (sum - 1.0).abs() <= SIMPLEX_TOLERANCE,
        "{name} sums to {sum}"
    );
    prop_assert!(
        v.iter().all(|x| *x >= 0.0),
        "{name} has a negative entry: {v:?}"
    );
    Ok(())
}

/// z, pi, d and all three word distributions of every turn are on their simplices.
pub fn check_factor_outputs(
    m: &Dtdmn,
    conv: &Conversation,
    sampled: bool,
) -> Result<(), TestCaseError> {
    let noise = draw_noise(
        &m.config,
        conv,
        &mut Streams::new(m.config.seed).rng("noise", &[]),
    );
    for (turn, nz) in conv.turns.iter().zip(&noise) {
        let mut tape = Tape::new(&m.params);
        let fnoise = if sampled {
            FactorNoise::Sample {
                normal: &nz.normal,
                gumbel: &nz.gumbel,
                temperature: m.config.gumbel_temperature,
            }
        } else {
            FactorNoise::Mean
        };
        let vars = m.factor.forward(&mut tape, &turn.sparse_bow(), fnoise);
        assert_simplex("z", tape.value(vars.z))?;
        assert_simplex("pi", tape.value(vars.pi))?;
        assert_simplex("d", tape.value(vars.d))?;
        assert_simplex("beta", tape.value(vars.beta))?;
        assert_simplex("beta_topic", tape.value(vars.beta_topic))?;
        assert_simplex("beta_discourse", tape.value(vars.beta_discourse))?;
    }
    Ok(())
}

/// `w` sums to 2 on both the training and the evaluation path.
pub fn check_memory_weight(m: &Dtdmn, conv: &Conversation) -> Result<(), TestCaseError> {
    let noise = draw_noise(
        &m.config,
        conv,
        &mut Streams::new(m.config.seed).rng("noise", &[]),
    );
    let mut tape = Tape::new(&m.params);
    let opts = ForwardOptions {
        noise: Some(&noise),
        ..ForwardOptions::default()
    };
    let vars = m.forward(&mut tape, conv, opts).unwrap();
    for w in &vars.weights {
        let sum: f64 = tape.value(*w).iter().sum();
        prop_assert!(
            (sum - 2.0).abs() <= SIMPLEX_TOLERANCE,
            "training w sums to {sum}"
        );
    }
    for t in m.trace(conv).unwrap().turns {
        let sum: f64 = t.w.iter().sum();
        prop_assert!(
            (sum - 2.0).abs() <= SIMPLEX_TOLERANCE,
            "evaluation w sums to {sum}"
        );
    }
    Ok(())
}

/// Token attention within each turn and turn attention over the conversation.
pub fn check_attention(m: &Dtdmn, conv: &Conversation) -> Result<(), TestCaseError> {
    let Process::Memory(mem) = &m.process else {
        return Err(TestCaseError::fail("expected the memory variant"));
    };
    for turn in &conv.turns {
        let enc = mem
            .sequence
            .encode(&m.params, &turn.seq, &turn.mask())
            .unwrap();
        assert_simplex("token attention", &enc.attention_weights)?;
        for (a, keep) in enc.attention_weights.iter().zip(turn.mask()) {
            prop_assert!(keep || *a == 0.0, "padding got attention {a}");
        }
    }
    assert_simplex("turn attention", &m.trace(conv).unwrap().turn_attention)
}

pub fn check_masked_effect(
    m: &Dtdmn,
    conv: &Conversation,
    component: usize,
) -> Result<(), TestCaseError> {
    let effects = masked_factor_effect(m, conv, component).unwrap();
    prop_assert_eq!(effects.len(), conv.turns.len());
    for e in effects {
        prop_assert!(e > 0.0 && e < 1.0, "effect {e}");
    }
    Ok(())
}

// ---- corpus fixture ----

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn fixture_posts() -> Vec<RawPost> {
    let text = fs::read_to_string(fixture("debate_tree.jsonl")).unwrap();
    parse_jsonl(&text, "debate_tree.jsonl").unwrap()
}

/// Options under which the six short fixture posts survive flattening.
pub fn fixture_options(jaccard: f64) -> CorpusOptions {
    CorpusOptions {
        min_count: 1,
        max_len: 4,
        jaccard,
        seed: 42,
        flatten: FlattenOptions {
            min_words: 3,
            min_challengers: 2,
        },
        permute_labels: false,
    }
}

pub fn fixture_corpus(jaccard: f64) -> CorpusArtifacts {
    build_corpus(
        &CorpusInput::Cmv(fixture_posts()),
        &fixture_options(jaccard),
    )
    .unwrap()
}

/// A synthetic corpus, optionally with its train split cut to `train_pairs`.
pub fn toy_split(
    moots: usize,
    train_pairs: Option<usize>,
    seed: u64,
) -> (dtdmn::corpus::DatasetSplit, ModelConfig) {
    toy_split_from(
        dtdmn::synthetic::SyntheticConfig {
            n_moots: moots,
            seed,
            ..Default::default()
        },
        train_pairs,
    )
}

pub fn toy_split_from(
    synthetic: dtdmn::synthetic::SyntheticConfig,
    train_pairs: Option<usize>,
) -> (dtdmn::corpus::DatasetSplit, ModelConfig) {
    use dtdmn::synthetic::{desk_corpus_options, desk_model_config, synthesize};
    let seed = synthetic.seed;
    let corpus = synthesize(&synthetic).unwrap();
    let artifacts =
        build_corpus(&CorpusInput::Cmv(corpus.posts), &desk_corpus_options(seed)).unwrap();
    let mut data = artifacts.data;
    if let Some(n) = train_pairs {
        assert!(
            data.train.len() >= n,
            "only {} train pairs",
            data.train.len()
        );
        data.train.truncate(n);
    }
    (data, desk_model_config(artifacts.vocab.len(), seed))
}
