//! Argument factor encoder.
//!
//! A variational encoder maps a turn's bag of words to a Gaussian latent
//! (`mu`, `log_sigma`), a topic mixture `z = softmax(f_z(eps))` and a
//! discourse posterior `pi = softmax(f_pi(bow))`. A relaxed one-hot discourse
//! sample `d` is drawn with the Gumbel-Softmax trick, and the turn is
//! reconstructed from `beta = softmax(phi_T^T z + phi_D^T d)`.
//!
//! The closed-form pieces of the objective are plain functions so they can be
//! checked against hand values; the model trains through the tape versions in
//! [`FactorEncoder`].

use std::rc::Rc;

use rand::Rng;
use serde::Serialize;

use crate::config::{EncoderInput, ModelConfig};
use crate::error::{Error, Result};
use crate::params::{Group, ParamId, ParamSet};
use crate::tape::{softmax_in_place, SparseInput, Tape, Var, LOG_FLOOR};

fn flog(x: f64) -> f64 {
    x.max(LOG_FLOOR).ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut v = logits.to_vec();
    softmax_in_place(&mut v);
    v
}

/// `epsilon = mu + exp(log_sigma) * noise`.
pub fn reparameterize(mu: &[f64], log_sigma: &[f64], noise: &[f64]) -> Vec<f64> {
    mu.iter()
        .zip(log_sigma)
        .zip(noise)
        .map(|((m, l), n)| m + l.exp() * n)
        .collect()
}

/// Gumbel-Softmax relaxation `softmax((log pi + g) / temperature)`.
pub fn sample_discourse(pi: &[f64], temperature: f64, gumbel_noise: &[f64]) -> Result<Vec<f64>> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(Error::config(format!(
            "Gumbel-Softmax temperature must be positive, got {temperature}"
        )));
    }
    if pi.len() != gumbel_noise.len() {
        return Err(Error::dimension(
            "gumbel_noise",
            pi.len(),
            gumbel_noise.len(),
        ));
    }
    let logits: Vec<f64> = pi
        .iter()
        .zip(gumbel_noise)
        .map(|(p, g)| (flog(*p) + g) / temperature)
        .collect();
    Ok(softmax(&logits))
}

/// Evaluation-time discourse: one-hot at the posterior mode (first index on ties).
pub fn hard_discourse(pi: &[f64]) -> Vec<f64> {
    let best = argmax(pi);
    (0..pi.len())
        .map(|i| if i == best { 1.0 } else { 0.0 })
        .collect()
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// `KL(N(mu, sigma^2) || N(0, I)) = 0.5 * sum(mu^2 + sigma^2 - 1 - 2 log sigma)`.
pub fn kl_normal(mu: &[f64], log_sigma: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(log_sigma)
        .map(|(m, l)| m * m + (2.0 * l).exp() - 1.0 - 2.0 * l)
        .sum::<f64>()
}

/// `KL(pi || uniform) = sum_i pi_i log(pi_i * D)`.
pub fn kl_discourse(pi: &[f64]) -> f64 {
    let d = pi.len() as f64;
    pi.iter().map(|p| p * (flog(*p) + d.ln())).sum()
}

/// `-sum_n bow_n log beta_n`.
pub fn reconstruction_loss(bow: &[f64], beta: &[f64]) -> f64 {
    -bow.iter()
        .zip(beta)
        .filter(|(c, _)| **c != 0.0)
        .map(|(c, b)| c * flog(*b))
        .sum::<f64>()
}

/// Mutual information `I(word; source)` for a binary, equiprobable source
/// (topic vs discourse) with word conditionals `beta_topic` and
/// `beta_discourse`. Zero when the conditionals coincide, `ln 2` when their
/// supports are disjoint.
pub fn mi_penalty(beta_topic: &[f64], beta_discourse: &[f64]) -> f64 {
    beta_topic
        .iter()
        .zip(beta_discourse)
        .map(|(a, b)| {
            let lm = flog(0.5 * (a + b));
            0.5 * (a * (flog(*a) - lm) + b * (flog(*b) - lm))
        })
        .sum()
}

/// Every intermediate of one pass through the factor encoder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorSample {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub z: Vec<f64>,
    pub pi: Vec<f64>,
    pub d: Vec<f64>,
    /// Joint word distribution `softmax(phi_T^T z + phi_D^T d)`.
    pub beta: Vec<f64>,
    pub beta_topic: Vec<f64>,
    pub beta_discourse: Vec<f64>,
}

/// Minimization form of the factor objective:
/// reconstruction + KL(z) + KL(d) - lambda * MI.
pub fn factor_loss(sample: &FactorSample, bow: &[f64], lambda: f64) -> f64 {
    reconstruction_loss(bow, &sample.beta)
        + kl_normal(&sample.mu, &sample.log_sigma)
        + kl_discourse(&sample.pi)
        - lambda * mi_penalty(&sample.beta_topic, &sample.beta_discourse)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    Topic,
    Discourse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Assignment {
    pub kind: FactorKind,
    pub confidence: f64,
}

/// Compare `p(w|z)` against `p(w|d)`; ties go to the topic side.
pub fn assign_word(p_topic: f64, p_discourse: f64) -> Assignment {
    let total = p_topic + p_discourse;
    let (kind, top) = if p_topic >= p_discourse {
        (FactorKind::Topic, p_topic)
    } else {
        (FactorKind::Discourse, p_discourse)
    };
    let confidence = if total > 0.0 { top / total } else { 0.5 };
    Assignment { kind, confidence }
}

/// Noise injected into a forward pass.
#[derive(Debug, Clone, Copy)]
pub enum FactorNoise<'a> {
    /// Training: reparameterized Gaussian draw and relaxed Gumbel sample.
    Sample {
        normal: &'a [f64],
        gumbel: &'a [f64],
        temperature: f64,
    },
    /// Evaluation: `epsilon = mu` and `d = one_hot(argmax pi)`.
    Mean,
}

#[derive(Debug, Clone, Copy)]
pub struct FactorVars {
    pub mu: Var,
    pub log_sigma: Var,
    pub epsilon: Var,
    pub z: Var,
    pub pi: Var,
    pub d: Var,
    pub beta_topic: Var,
    pub beta_discourse: Var,
    pub beta: Var,
}

#[derive(Debug, Clone, Copy)]
struct Affine {
    w: ParamId,
    b: ParamId,
}

/// Parameter layout of the factor encoder (all in [`Group::Factor`]).
#[derive(Debug, Clone)]
pub struct FactorEncoder {
    enc: Affine,
    mu: Affine,
    log_sigma: Affine,
    pi: Affine,
    topic: Affine,
    /// `K x V` topic-word weights.
    pub topic_words: ParamId,
    /// `D x V` discourse-word weights.
    pub discourse_words: ParamId,
    input: EncoderInput,
    vocab: usize,
    topics: usize,
    discourse: usize,
}

fn xavier(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

impl FactorEncoder {
    pub fn register<R: Rng>(params: &mut ParamSet, cfg: &ModelConfig, rng: &mut R) -> Self {
        let v = cfg.vocab_size;
        let hdim = cfg.encoder_hidden;
        let zdim = cfg.latent_dim;
        let mut affine = |name: &str, rows: usize, cols: usize, rng: &mut R| Affine {
            w: params.add_uniform(
                &format!("factor.{name}.w"),
                Group::Factor,
                rows,
                cols,
                xavier(rows, cols),
                rng,
            ),
            b: params.add_uniform(
                &format!("factor.{name}.b"),
                Group::Factor,
                rows,
                1,
                0.0,
                rng,
            ),
        };
        let enc = affine("enc", hdim, v, rng);
        let mu = affine("mu", zdim, hdim, rng);
        let log_sigma = affine("log_sigma", zdim, hdim, rng);
        let pi = affine("pi", cfg.discourse, v, rng);
        let topic = affine("z", cfg.topics, zdim, rng);
        let topic_words =
            params.add_uniform("factor.topic_words", Group::Factor, cfg.topics, v, 0.1, rng);
        let discourse_words = params.add_uniform(
            "factor.discourse_words",
            Group::Factor,
            cfg.discourse,
            v,
            0.1,
            rng,
        );
        Self {
            enc,
            mu,
            log_sigma,
            pi,
            topic,
            topic_words,
            discourse_words,
            input: cfg.encoder_input,
            vocab: v,
            topics: cfg.topics,
            discourse: cfg.discourse,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    pub fn check_bow(&self, bow: &[(usize, f64)]) -> Result<()> {
        if let Some(&(i, _)) = bow.iter().find(|(i, _)| *i >= self.vocab) {
            return Err(Error::dimension(
                "bow index",
                format!("< {}", self.vocab),
                i,
            ));
        }
        Ok(())
    }

    /// What the `f_e` layer sees of a count vector.
    fn inference_input(&self, bow: &SparseInput) -> SparseInput {
        match self.input {
            EncoderInput::Counts => bow.clone(),
            EncoderInput::Frequencies => {
                let total: f64 = bow.iter().map(|&(_, c)| c).sum();
                if total > 0.0 {
                    bow.iter().map(|&(i, c)| (i, c / total)).collect()
                } else {
                    bow.clone()
                }
            }
        }
    }

    /// Build the encoder graph for one turn from its word counts.
    pub fn forward(&self, tape: &mut Tape, bow: &SparseInput, noise: FactorNoise) -> FactorVars {
        let pre = tape.affine_sparse(self.enc.w, Some(self.enc.b), self.inference_input(bow));
        let hidden = tape.tanh(pre);
        let mu = tape.affine(self.mu.w, Some(self.mu.b), hidden);
        let log_sigma = tape.affine(self.log_sigma.w, Some(self.log_sigma.b), hidden);
        let pi_logits = tape.affine_sparse(self.pi.w, Some(self.pi.b), bow.clone());
        let pi = tape.softmax(pi_logits);
        let (epsilon, d) = match noise {
            FactorNoise::Sample {
                normal,
                gumbel,
                temperature,
            } => {
                let n = tape.input(normal.to_vec());
                let sigma = tape.exp(log_sigma);
                let scaled = tape.mul(sigma, n);
                let eps = tape.add(mu, scaled);
                let log_pi = tape.log(pi);
                let g = tape.input(gumbel.to_vec());
                let shifted = tape.add(log_pi, g);
                let tempered = tape.scale(shifted, 1.0 / temperature);
                (eps, tape.softmax(tempered))
            }
            FactorNoise::Mean => {
                let hard = hard_discourse(tape.value(pi));
                (mu, tape.input(hard))
            }
        };
        let z_logits = tape.affine(self.topic.w, Some(self.topic.b), epsilon);
        let z = tape.softmax(z_logits);
        let topic_logits = tape.transpose_mul(self.topic_words, z);
        let discourse_logits = tape.transpose_mul(self.discourse_words, d);
        let beta_topic = tape.softmax(topic_logits);
        let beta_discourse = tape.softmax(discourse_logits);
        let joint = tape.add(topic_logits, discourse_logits);
        let beta = tape.softmax(joint);
        FactorVars {
            mu,
            log_sigma,
            epsilon,
            z,
            pi,
            d,
            beta_topic,
            beta_discourse,
            beta,
        }
    }

    /// Minimization-form factor loss of one turn as a graph node.
    pub fn loss(&self, tape: &mut Tape, vars: &FactorVars, bow: &SparseInput, lambda: f64) -> Var {
        let rec = tape.reconstruction(bow.clone(), vars.beta);
        let klz = tape.kl_normal(vars.mu, vars.log_sigma);
        let kld = tape.kl_uniform(vars.pi);
        let mi = tape.mutual_info(vars.beta_topic, vars.beta_discourse);
        let mi_term = tape.scale(mi, -lambda);
        tape.sum(&[rec, klz, kld, mi_term])
    }

    /// Read every intermediate of a forward pass back out of the tape.
    pub fn sample(tape: &Tape, vars: &FactorVars) -> FactorSample {
        FactorSample {
            mu: tape.value(vars.mu).to_vec(),
            log_sigma: tape.value(vars.log_sigma).to_vec(),
            epsilon: tape.value(vars.epsilon).to_vec(),
            z: tape.value(vars.z).to_vec(),
            pi: tape.value(vars.pi).to_vec(),
            d: tape.value(vars.d).to_vec(),
            beta: tape.value(vars.beta).to_vec(),
            beta_topic: tape.value(vars.beta_topic).to_vec(),
            beta_discourse: tape.value(vars.beta_discourse).to_vec(),
        }
    }

    /// `(mu, log_sigma, pi)` for a dense bag of words.
    pub fn encode(&self, params: &ParamSet, bow: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        if bow.len() != self.vocab {
            return Err(Error::dimension("bow", self.vocab, bow.len()));
        }
        let sparse = dense_to_sparse(bow);
        let mut tape = Tape::new(params);
        let vars = self.forward(&mut tape, &sparse, FactorNoise::Mean);
        Ok((
            tape.value(vars.mu).to_vec(),
            tape.value(vars.log_sigma).to_vec(),
            tape.value(vars.pi).to_vec(),
        ))
    }

    /// `z = softmax(f_z(epsilon))`.
    pub fn topic_mixture(&self, params: &ParamSet, epsilon: &[f64]) -> Result<Vec<f64>> {
        let w = params.get(self.topic.w);
        if epsilon.len() != w.cols {
            return Err(Error::dimension("epsilon", w.cols, epsilon.len()));
        }
        let mut tape = Tape::new(params);
        let e = tape.input(epsilon.to_vec());
        let logits = tape.affine(self.topic.w, Some(self.topic.b), e);
        let z = tape.softmax(logits);
        Ok(tape.value(z).to_vec())
    }

    /// Joint word distribution `beta` together with its topic and discourse parts.
    pub fn decode(
        &self,
        params: &ParamSet,
        z: &[f64],
        d: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        if z.len() != self.topics {
            return Err(Error::dimension("z", self.topics, z.len()));
        }
        if d.len() != self.discourse {
            return Err(Error::dimension("d", self.discourse, d.len()));
        }
        let mut tape = Tape::new(params);
        let zv = tape.input(z.to_vec());
        let dv = tape.input(d.to_vec());
        let tl = tape.transpose_mul(self.topic_words, zv);
        let dl = tape.transpose_mul(self.discourse_words, dv);
        let joint = tape.add(tl, dl);
        let beta = tape.softmax(joint);
        let bt = tape.softmax(tl);
        let bd = tape.softmax(dl);
        Ok((
            tape.value(beta).to_vec(),
            tape.value(bt).to_vec(),
            tape.value(bd).to_vec(),
        ))
    }

    /// Decide whether token `w` is explained by the topic or the discourse side.
    pub fn word_assignment(
        &self,
        params: &ParamSet,
        w: usize,
        z: &[f64],
        d: &[f64],
    ) -> Result<Assignment> {
        if w >= self.vocab {
            return Err(Error::dimension(
                "token index",
                format!("< {}", self.vocab),
                w,
            ));
        }
        let (_, bt, bd) = self.decode(params, z, d)?;
        Ok(assign_word(bt[w], bd[w]))
    }

    /// Row `index` of the topic (or discourse) word weights after softmax.
    pub fn word_distribution(
        &self,
        params: &ParamSet,
        kind: FactorKind,
        index: usize,
    ) -> Result<Vec<f64>> {
        let (id, count) = match kind {
            FactorKind::Topic => (self.topic_words, self.topics),
            FactorKind::Discourse => (self.discourse_words, self.discourse),
        };
        if index >= count {
            return Err(Error::dimension(
                "factor index",
                format!("< {count}"),
                index,
            ));
        }
        Ok(softmax(params.get(id).row(index)))
    }
}

pub fn dense_to_sparse(bow: &[f64]) -> SparseInput {
    let v: Vec<(usize, f64)> = bow
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(i, c)| (i, *c))
        .collect();
    Rc::from(v)
}
