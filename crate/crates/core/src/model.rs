//! The assembled model: factor encoder, dynamic memory (or its projection
//! ablation) and predictor, plus checkpoints.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, Variant};
use crate::corpus::Conversation;
use crate::error::{Error, Result};
use crate::factor::{FactorEncoder, FactorNoise, FactorVars};
use crate::memory::DynamicMemory;
use crate::memory::SequenceEncoder;
use crate::params::{Group, NamedTensor, ParamId, ParamSet};
use crate::predictor::{pick_winner, Predictor, SummaryVars, Winner};
use crate::rng::{StreamRng, Streams};
use crate::tape::{SparseInput, Tape, Var};

/// How turn encodings reach the predictor.
#[derive(Debug, Clone)]
pub enum Process {
    Memory(DynamicMemory),
    /// Memory ablation: an affine map from the turn encoding to the read size.
    Projection {
        sequence: SequenceEncoder,
        w: ParamId,
        b: ParamId,
    },
}

/// Per-turn random draws for one training pass over a conversation.
#[derive(Debug, Clone)]
pub struct TurnNoise {
    pub normal: Vec<f64>,
    pub gumbel: Vec<f64>,
    /// Word-dropout multipliers for the unpadded tokens.
    pub keep: Vec<f64>,
}

/// Draw the Gaussian, Gumbel and word-dropout noise for every turn.
pub fn draw_noise(cfg: &ModelConfig, conv: &Conversation, rng: &mut StreamRng) -> Vec<TurnNoise> {
    conv.turns
        .iter()
        .map(|turn| {
            let normal = (0..cfg.latent_dim)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let gumbel = (0..cfg.discourse)
                .map(|_| {
                    let u: f64 = rng.random_range(f64::EPSILON..1.0);
                    -(-u.ln()).ln()
                })
                .collect();
            let keep = (0..turn.len)
                .map(|_| {
                    if cfg.dropout > 0.0 && rng.random::<f64>() < cfg.dropout {
                        0.0
                    } else {
                        1.0 / (1.0 - cfg.dropout)
                    }
                })
                .collect();
            TurnNoise {
                normal,
                gumbel,
                keep,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOptions<'a> {
    /// Training noise per turn; `None` is the deterministic evaluation path.
    pub noise: Option<&'a [TurnNoise]>,
    /// Keep only this memory-weight component (the masked-factor analysis).
    pub keep_component: Option<usize>,
    /// Run only the first `turns` turns.
    pub turns: Option<usize>,
}

/// Graph handles for one conversation.
#[derive(Debug, Clone)]
pub struct ConversationVars {
    pub factors: Vec<FactorVars>,
    pub bows: Vec<SparseInput>,
    pub weights: Vec<Var>,
    pub reads: Vec<Var>,
    /// Memory after each turn; empty for the memory ablation.
    pub memories: Vec<Var>,
    pub summary: SummaryVars,
    pub score: Var,
}

/// Plain-valued record of one turn.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnTrace {
    pub z: Vec<f64>,
    pub pi: Vec<f64>,
    pub d: Vec<f64>,
    pub w: Vec<f64>,
    pub read: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConversationTrace {
    pub conv_id: String,
    pub turns: Vec<TurnTrace>,
    pub turn_attention: Vec<f64>,
    pub memory_updates: usize,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct Dtdmn {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub factor: FactorEncoder,
    pub process: Process,
    pub predictor: Predictor,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    config: ModelConfig,
    params: Vec<NamedTensor>,
}

impl Dtdmn {
    /// Lay out and initialize every parameter from the config's seed.
    ///
    /// Each component draws from its own substream, so the parameters shared
    /// by two variants start from identical values.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let streams = Streams::new(config.seed);
        let mut params = ParamSet::new();
        let factor = FactorEncoder::register(&mut params, &config, &mut streams.rng("init", &[0]));
        let mut seq_rng = streams.rng("init", &[1]);
        let process = match config.variant {
            Variant::NoMemory => {
                let sequence = SequenceEncoder::register(&mut params, &config, &mut seq_rng);
                let mut rng = streams.rng("init", &[3]);
                let scale = (6.0 / (config.hidden + config.memory_dim) as f64).sqrt();
                let w = params.add_uniform(
                    "proj.w",
                    Group::Rest,
                    config.memory_dim,
                    config.hidden,
                    scale,
                    &mut rng,
                );
                let b =
                    params.add_uniform("proj.b", Group::Rest, config.memory_dim, 1, 0.0, &mut rng);
                Process::Projection { sequence, w, b }
            }
            _ => Process::Memory(DynamicMemory::register(&mut params, &config, &mut seq_rng)),
        };
        let predictor = Predictor::register(&mut params, &config, &mut streams.rng("init", &[2]));
        Ok(Self {
            config,
            params,
            factor,
            process,
            predictor,
        })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    /// Memory weight for one turn under the active variant.
    fn weight(&self, tape: &mut Tape, vars: &FactorVars, keep: Option<usize>) -> Var {
        let z = tape.value(vars.z).to_vec();
        let d = tape.value(vars.d).to_vec();
        let mut w = match self.config.variant {
            Variant::NoTopic => [vec![0.0; z.len()], d].concat(),
            Variant::NoDiscourse => [z.clone(), vec![0.0; d.len()]].concat(),
            _ => [z, d].concat(),
        };
        if let Some(i) = keep {
            for (j, x) in w.iter_mut().enumerate() {
                if j != i {
                    *x = 0.0;
                }
            }
        }
        // factors are trained only through their own objective
        tape.input(w)
    }

    /// Build the graph for one conversation.
    pub fn forward(
        &self,
        tape: &mut Tape,
        conv: &Conversation,
        opts: ForwardOptions,
    ) -> Result<ConversationVars> {
        let n = opts.turns.unwrap_or(conv.turns.len()).min(conv.turns.len());
        if n == 0 {
            return Err(Error::config(format!(
                "conversation `{}` has no turns",
                conv.conv_id
            )));
        }
        if let Some(i) = opts.keep_component {
            if i >= self.config.memory_rows() {
                return Err(Error::dimension(
                    "factor index",
                    format!("< {}", self.config.memory_rows()),
                    i,
                ));
            }
        }
        let mut memory = match &self.process {
            Process::Memory(m) => Some(tape.input(m.initial_state(&self.params).data)),
            Process::Projection { .. } => None,
        };
        let mut factors = Vec::with_capacity(n);
        let mut bows = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut reads = Vec::with_capacity(n);
        let mut memories = Vec::new();
        for (t, turn) in conv.turns[..n].iter().enumerate() {
            let bow = turn.sparse_bow();
            self.factor.check_bow(&bow)?;
            let noise = opts.noise.map(|all| &all[t]);
            let factor_noise = match noise {
                Some(nz) => FactorNoise::Sample {
                    normal: &nz.normal,
                    gumbel: &nz.gumbel,
                    temperature: self.config.gumbel_temperature,
                },
                None => FactorNoise::Mean,
            };
            let fv = self.factor.forward(tape, &bow, factor_noise);
            let w = self.weight(tape, &fv, opts.keep_component);
            let keep = noise.map(|nz| nz.keep.as_slice());
            let read = match &self.process {
                Process::Memory(m) => {
                    let tv = m.turn(
                        tape,
                        memory.expect("memory variant"),
                        w,
                        turn.tokens(),
                        keep,
                    )?;
                    memory = Some(tv.memory);
                    memories.push(tv.memory);
                    tv.read
                }
                Process::Projection { sequence, w: pw, b } => {
                    let h_x = sequence.forward(tape, turn.tokens(), keep)?;
                    tape.affine(*pw, Some(*b), h_x)
                }
            };
            factors.push(fv);
            bows.push(bow);
            weights.push(w);
            reads.push(read);
        }
        let summary = self.predictor.summarize(tape, &reads)?;
        let score = self.predictor.score(tape, summary.h_r);
        Ok(ConversationVars {
            factors,
            bows,
            weights,
            reads,
            memories,
            summary,
            score,
        })
    }

    /// Deterministic persuasiveness score.
    pub fn score(&self, conv: &Conversation) -> Result<f64> {
        let mut tape = Tape::new(&self.params);
        let vars = self.forward(&mut tape, conv, ForwardOptions::default())?;
        Ok(tape.scalar(vars.score))
    }

    /// Score of the first `turns` turns with the memory weight masked to a
    /// single component.
    pub fn masked_score(&self, conv: &Conversation, component: usize, turns: usize) -> Result<f64> {
        let mut tape = Tape::new(&self.params);
        let opts = ForwardOptions {
            keep_component: Some(component),
            turns: Some(turns),
            ..ForwardOptions::default()
        };
        let vars = self.forward(&mut tape, conv, opts)?;
        Ok(tape.scalar(vars.score))
    }

    /// Scores both conversations independently; ties go to the first.
    pub fn predict_pair(&self, first: &Conversation, second: &Conversation) -> Result<Winner> {
        Ok(pick_winner(self.score(first)?, self.score(second)?))
    }

    pub fn trace(&self, conv: &Conversation) -> Result<ConversationTrace> {
        let mut tape = Tape::new(&self.params);
        let vars = self.forward(&mut tape, conv, ForwardOptions::default())?;
        let turns = vars
            .factors
            .iter()
            .zip(&vars.weights)
            .zip(&vars.reads)
            .map(|((f, w), r)| TurnTrace {
                z: tape.value(f.z).to_vec(),
                pi: tape.value(f.pi).to_vec(),
                d: tape.value(f.d).to_vec(),
                w: tape.value(*w).to_vec(),
                read: tape.value(*r).to_vec(),
            })
            .collect();
        Ok(ConversationTrace {
            conv_id: conv.conv_id.clone(),
            turns,
            turn_attention: tape.attention_weights(vars.summary.h_r).to_vec(),
            memory_updates: vars.memories.len(),
            score: tape.scalar(vars.score),
        })
    }

    /// Fail with the first architectural field that differs.
    pub fn check_compatible(&self, other: &ModelConfig) -> Result<()> {
        let a = &self.config;
        let fields = [
            ("topics", a.topics, other.topics),
            ("discourse", a.discourse, other.discourse),
            ("vocab_size", a.vocab_size, other.vocab_size),
            ("hidden", a.hidden, other.hidden),
            ("memory_dim", a.memory_dim, other.memory_dim),
            ("word_embedding", a.word_embedding, other.word_embedding),
            ("encoder_hidden", a.encoder_hidden, other.encoder_hidden),
            ("latent_dim", a.latent_dim, other.latent_dim),
        ];
        for (name, have, want) in fields {
            if have != want {
                return Err(Error::dimension(name, want, have));
            }
        }
        if a.variant != other.variant {
            return Err(Error::dimension("variant", other.variant, a.variant));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let ck = Checkpoint {
            config: self.config.clone(),
            params: self.params.entries().to_vec(),
        };
        Ok(serde_json::to_string(&ck)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        let mut model = Self::new(ck.config)?;
        model.params.load_from(ck.params)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EncodedArgument;

    pub(crate) fn tiny_config(variant: Variant) -> ModelConfig {
        ModelConfig {
            topics: 3,
            discourse: 2,
            vocab_size: 20,
            hidden: 8,
            memory_dim: 8,
            word_embedding: 6,
            encoder_hidden: 10,
            latent_dim: 4,
            max_len: 6,
            variant,
            ..ModelConfig::default()
        }
    }

    fn conv(turns: &[&[usize]]) -> Conversation {
        Conversation {
            conv_id: "c".into(),
            moot_id: "m".into(),
            label: crate::corpus::Label::Winning,
            turns: turns
                .iter()
                .map(|t| EncodedArgument {
                    bow: {
                        let mut v: Vec<(usize, u32)> = Vec::new();
                        for &i in t.iter() {
                            match v.iter_mut().find(|(j, _)| *j == i) {
                                Some(e) => e.1 += 1,
                                None => v.push((i, 1)),
                            }
                        }
                        v.sort();
                        v
                    },
                    seq: t.to_vec(),
                    len: t.len(),
                })
                .collect(),
        }
    }

    #[test]
    fn variants_shape_the_memory_weight() {
        let c = conv(&[&[5, 6, 7], &[8, 9]]);
        for variant in Variant::ALL {
            let model = Dtdmn::new(tiny_config(variant)).unwrap();
            let tr = model.trace(&c).unwrap();
            let w = &tr.turns[0].w;
            let (zs, ds): (f64, f64) = (w[..3].iter().sum(), w[3..].iter().sum());
            match variant {
                Variant::NoTopic => assert_eq!((zs, ds), (0.0, 1.0)),
                Variant::NoDiscourse => assert!(zs > 0.999 && ds == 0.0),
                _ => assert!((zs + ds - 2.0).abs() < 1e-9),
            }
            let expected_updates = if variant == Variant::NoMemory { 0 } else { 2 };
            assert_eq!(tr.memory_updates, expected_updates);
        }
    }

    #[test]
    fn shared_parameters_start_equal_across_variants() {
        let full = Dtdmn::new(tiny_config(Variant::Full)).unwrap();
        let ablated = Dtdmn::new(tiny_config(Variant::NoMemory)).unwrap();
        for name in [
            "factor.enc.w",
            "seq.embedding",
            "seq.fwd.w_ih",
            "pred.score.w",
        ] {
            assert_eq!(
                full.params.by_name(name),
                ablated.params.by_name(name),
                "{name}"
            );
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let model = Dtdmn::new(tiny_config(Variant::Full)).unwrap();
        let back = Dtdmn::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(model.params, back.params);
        let c = conv(&[&[1, 2], &[3, 4, 5]]);
        assert_eq!(
            model.score(&c).unwrap().to_bits(),
            back.score(&c).unwrap().to_bits()
        );
    }

    #[test]
    fn mismatched_checkpoint_names_the_field() {
        let model = Dtdmn::new(tiny_config(Variant::Full)).unwrap();
        let mut json: serde_json::Value = serde_json::from_str(&model.to_json().unwrap()).unwrap();
        json["config"]["topics"] = 4.into();
        let err = Dtdmn::from_json(&json.to_string()).unwrap_err().to_string();
        assert!(err.contains("factor.z.w"), "{err}");
        let mut other = model.config.clone();
        other.memory_dim = 9;
        let err = model.check_compatible(&other).unwrap_err().to_string();
        assert!(err.contains("memory_dim"), "{err}");
    }

    #[test]
    fn pair_prediction_is_antisymmetric() {
        let model = Dtdmn::new(tiny_config(Variant::Full)).unwrap();
        let a = conv(&[&[1, 2], &[3]]);
        let b = conv(&[&[7, 8], &[9, 10]]);
        let (ya, yb) = (model.score(&a).unwrap(), model.score(&b).unwrap());
        assert_ne!(ya, yb);
        let ab = model.predict_pair(&a, &b).unwrap();
        let ba = model.predict_pair(&b, &a).unwrap();
        assert_ne!(ab, ba);
        assert_eq!(model.predict_pair(&a, &a).unwrap(), Winner::First);
    }

    #[test]
    fn out_of_vocabulary_index_is_a_dimension_error() {
        let model = Dtdmn::new(tiny_config(Variant::Full)).unwrap();
        let err = model.score(&conv(&[&[25], &[1]])).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }
}
