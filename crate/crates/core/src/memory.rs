//! Dynamic process encoder: memory weights, the attentive bidirectional GRU
//! over a turn's tokens, and the gated erase/add episodic memory.

use rand::Rng;
use serde::Serialize;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::params::{Group, ParamId, ParamSet, Tensor};
use crate::tape::{AttnParams, GruCell, Tape, Var};

/// Memory weight `w = [z; d]` (topic block first).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryWeights {
    pub w: Vec<f64>,
}

pub fn memory_weight(
    z: &[f64],
    d: &[f64],
    topics: usize,
    discourse: usize,
) -> Result<MemoryWeights> {
    if z.len() != topics {
        return Err(Error::dimension("z", topics, z.len()));
    }
    if d.len() != discourse {
        return Err(Error::dimension("d", discourse, d.len()));
    }
    let mut w = Vec::with_capacity(topics + discourse);
    w.extend_from_slice(z);
    w.extend_from_slice(d);
    Ok(MemoryWeights { w })
}

/// Episodic memory: `(K + D) x E`, rows indexed by topics then discourse.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryState {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub turn_index: usize,
}

impl MemoryState {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "memory data does not match its shape"
        );
        Self {
            rows,
            cols,
            data,
            turn_index: 0,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// `M'_i = M_i * (1 - w_i e) + w_i a` for every row `i`.
pub fn update_memory(m: &MemoryState, w: &[f64], e: &[f64], a: &[f64]) -> Result<MemoryState> {
    if w.len() != m.rows {
        return Err(Error::dimension("memory weight", m.rows, w.len()));
    }
    if e.len() != m.cols || a.len() != m.cols {
        return Err(Error::dimension(
            "erase/add vector",
            m.cols,
            e.len().max(a.len()),
        ));
    }
    let mut data = m.data.clone();
    for (i, &wi) in w.iter().enumerate() {
        for j in 0..m.cols {
            let x = &mut data[i * m.cols + j];
            *x = *x * (1.0 - wi * e[j]) + wi * a[j];
        }
    }
    Ok(MemoryState {
        rows: m.rows,
        cols: m.cols,
        data,
        turn_index: m.turn_index + 1,
    })
}

/// `r = sum_i w_i M_i`.
pub fn read_memory(m: &MemoryState, w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != m.rows {
        return Err(Error::dimension("memory weight", m.rows, w.len()));
    }
    let mut r = vec![0.0; m.cols];
    for (i, &wi) in w.iter().enumerate() {
        for (o, x) in r.iter_mut().zip(m.row(i)) {
            *o += wi * x;
        }
    }
    Ok(r)
}

/// Attention-pooled bidirectional encoding of one turn.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnEncoding {
    pub h_x: Vec<f64>,
    /// One weight per sequence position; zero on padding.
    pub attention_weights: Vec<f64>,
}

pub(crate) fn gru_cell<R: Rng>(
    params: &mut ParamSet,
    prefix: &str,
    input: usize,
    hidden: usize,
    rng: &mut R,
) -> GruCell {
    let scale = 1.0 / (hidden as f64).sqrt();
    GruCell {
        w_ih: params.add_uniform(
            &format!("{prefix}.w_ih"),
            Group::Rest,
            3 * hidden,
            input,
            scale,
            rng,
        ),
        w_hh: params.add_uniform(
            &format!("{prefix}.w_hh"),
            Group::Rest,
            3 * hidden,
            hidden,
            scale,
            rng,
        ),
        b_ih: params.add_uniform(
            &format!("{prefix}.b_ih"),
            Group::Rest,
            3 * hidden,
            1,
            scale,
            rng,
        ),
        b_hh: params.add_uniform(
            &format!("{prefix}.b_hh"),
            Group::Rest,
            3 * hidden,
            1,
            scale,
            rng,
        ),
        hidden,
    }
}

pub(crate) fn attn_params<R: Rng>(
    params: &mut ParamSet,
    prefix: &str,
    dim: usize,
    rng: &mut R,
) -> AttnParams {
    let scale = 1.0 / (dim as f64).sqrt();
    AttnParams {
        w: params.add_uniform(&format!("{prefix}.w"), Group::Rest, dim, dim, scale, rng),
        b: params.add_uniform(&format!("{prefix}.b"), Group::Rest, dim, 1, 0.0, rng),
        v: params.add_uniform(&format!("{prefix}.v"), Group::Rest, dim, 1, scale, rng),
    }
}

/// Word embeddings, forward/backward GRUs (independent parameters) and
/// additive attention over the concatenated directional states.
#[derive(Debug, Clone)]
pub struct SequenceEncoder {
    pub embedding: ParamId,
    forward: GruCell,
    backward: GruCell,
    attn: AttnParams,
    hidden: usize,
}

impl SequenceEncoder {
    pub fn register<R: Rng>(params: &mut ParamSet, cfg: &ModelConfig, rng: &mut R) -> Self {
        let half = cfg.hidden / 2;
        let embedding = params.add_uniform(
            "seq.embedding",
            Group::Rest,
            cfg.vocab_size,
            cfg.word_embedding,
            0.1,
            rng,
        );
        let forward = gru_cell(params, "seq.fwd", cfg.word_embedding, half, rng);
        let backward = gru_cell(params, "seq.bwd", cfg.word_embedding, half, rng);
        let attn = attn_params(params, "seq.attn", cfg.hidden, rng);
        Self {
            embedding,
            forward,
            backward,
            attn,
            hidden: cfg.hidden,
        }
    }

    /// Encode the unpadded `tokens`. `keep` optionally scales each word
    /// embedding (word dropout); `None` is the deterministic path.
    pub fn forward(&self, tape: &mut Tape, tokens: &[usize], keep: Option<&[f64]>) -> Result<Var> {
        if tokens.is_empty() {
            return Err(Error::config(
                "cannot encode a turn that is entirely padding",
            ));
        }
        let vocab = tape.params().get(self.embedding).rows;
        let mut inputs = Vec::with_capacity(tokens.len());
        for (j, &tok) in tokens.iter().enumerate() {
            if tok >= vocab {
                return Err(Error::dimension("token index", format!("< {vocab}"), tok));
            }
            let mut x = tape.embed(self.embedding, tok);
            if let Some(keep) = keep {
                if keep[j] != 1.0 {
                    x = tape.scale(x, keep[j]);
                }
            }
            inputs.push(x);
        }
        let half = self.hidden / 2;
        let mut h = tape.input(vec![0.0; half]);
        let mut fwd = Vec::with_capacity(tokens.len());
        for x in &inputs {
            h = tape.gru(self.forward, *x, h);
            fwd.push(h);
        }
        let mut h = tape.input(vec![0.0; half]);
        let mut bwd = vec![h; tokens.len()];
        for (j, x) in inputs.iter().enumerate().rev() {
            h = tape.gru(self.backward, *x, h);
            bwd[j] = h;
        }
        let states: Vec<Var> = fwd
            .iter()
            .zip(&bwd)
            .map(|(f, b)| tape.concat(&[*f, *b]))
            .collect();
        Ok(tape.attention(self.attn, &states))
    }

    /// Deterministic encoding of a padded sequence with its mask.
    pub fn encode(&self, params: &ParamSet, seq: &[usize], mask: &[bool]) -> Result<TurnEncoding> {
        if seq.len() != mask.len() {
            return Err(Error::dimension("mask", seq.len(), mask.len()));
        }
        let tokens: Vec<usize> = seq
            .iter()
            .zip(mask)
            .filter(|(_, m)| **m)
            .map(|(t, _)| *t)
            .collect();
        let mut tape = Tape::new(params);
        let pooled = self.forward(&mut tape, &tokens, None)?;
        let alpha = tape.attention_weights(pooled);
        let mut weights = vec![0.0; seq.len()];
        let mut k = 0;
        for (slot, m) in weights.iter_mut().zip(mask) {
            if *m {
                *slot = alpha[k];
                k += 1;
            }
        }
        Ok(TurnEncoding {
            h_x: tape.value(pooled).to_vec(),
            attention_weights: weights,
        })
    }
}

/// Erase gate `e = sigmoid(W_e h + b_e)` and augment vector `a = tanh(W_a h + b_a)`.
#[derive(Debug, Clone, Copy)]
pub struct MemoryGates {
    pub erase_w: ParamId,
    pub erase_b: ParamId,
    pub add_w: ParamId,
    pub add_b: ParamId,
}

impl MemoryGates {
    pub fn register<R: Rng>(params: &mut ParamSet, cfg: &ModelConfig, rng: &mut R) -> Self {
        let scale = (6.0 / (cfg.hidden + cfg.memory_dim) as f64).sqrt();
        let (e, h) = (cfg.memory_dim, cfg.hidden);
        Self {
            erase_w: params.add_uniform("mem.erase.w", Group::Rest, e, h, scale, rng),
            erase_b: params.add_uniform("mem.erase.b", Group::Rest, e, 1, 0.0, rng),
            add_w: params.add_uniform("mem.add.w", Group::Rest, e, h, scale, rng),
            add_b: params.add_uniform("mem.add.b", Group::Rest, e, 1, 0.0, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, h_x: Var) -> (Var, Var) {
        let ep = tape.affine(self.erase_w, Some(self.erase_b), h_x);
        let e = tape.sigmoid(ep);
        let ap = tape.affine(self.add_w, Some(self.add_b), h_x);
        let a = tape.tanh(ap);
        (e, a)
    }

    pub fn erase_add(&self, params: &ParamSet, h_x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let cols = params.get(self.erase_w).cols;
        if h_x.len() != cols {
            return Err(Error::dimension("h_x", cols, h_x.len()));
        }
        let mut tape = Tape::new(params);
        let h = tape.input(h_x.to_vec());
        let (e, a) = self.forward(&mut tape, h);
        Ok((tape.value(e).to_vec(), tape.value(a).to_vec()))
    }
}

/// Full dynamic process encoder: sequence encoder, gates and the stored
/// initial memory `M_0` (a frozen parameter).
#[derive(Debug, Clone)]
pub struct DynamicMemory {
    pub sequence: SequenceEncoder,
    pub gates: MemoryGates,
    pub init: ParamId,
    rows: usize,
    cols: usize,
}

impl DynamicMemory {
    pub fn register<R: Rng>(params: &mut ParamSet, cfg: &ModelConfig, rng: &mut R) -> Self {
        let sequence = SequenceEncoder::register(params, cfg, rng);
        let gates = MemoryGates::register(params, cfg, rng);
        let init = params.add_uniform(
            "mem.init",
            Group::Frozen,
            cfg.memory_rows(),
            cfg.memory_dim,
            0.05,
            rng,
        );
        Self {
            sequence,
            gates,
            init,
            rows: cfg.memory_rows(),
            cols: cfg.memory_dim,
        }
    }

    pub fn initial_state(&self, params: &ParamSet) -> MemoryState {
        let t: &Tensor = params.get(self.init);
        MemoryState::new(self.rows, self.cols, t.data.clone())
    }

    /// One turn on the tape: encode, gate, update then read from the updated memory.
    pub fn turn(
        &self,
        tape: &mut Tape,
        memory: Var,
        w: Var,
        tokens: &[usize],
        keep: Option<&[f64]>,
    ) -> Result<TurnVars> {
        let h_x = self.sequence.forward(tape, tokens, keep)?;
        let (e, a) = self.gates.forward(tape, h_x);
        let memory = tape.mem_update(memory, w, e, a);
        let read = tape.mem_read(memory, w);
        Ok(TurnVars { h_x, memory, read })
    }

    /// Deterministic single-turn update on plain values.
    pub fn process_turn(
        &self,
        params: &ParamSet,
        state: &MemoryState,
        z: &[f64],
        d: &[f64],
        seq: &[usize],
        mask: &[bool],
    ) -> Result<(MemoryState, Vec<f64>)> {
        let topics = z.len();
        let w = memory_weight(z, d, topics, self.rows.saturating_sub(topics))?;
        if w.w.len() != state.rows {
            return Err(Error::dimension("memory weight", state.rows, w.w.len()));
        }
        let enc = self.sequence.encode(params, seq, mask)?;
        let (e, a) = self.gates.erase_add(params, &enc.h_x)?;
        let next = update_memory(state, &w.w, &e, &a)?;
        let r = read_memory(&next, &w.w)?;
        Ok((next, r))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TurnVars {
    pub h_x: Var,
    pub memory: Var,
    pub read: Var,
}
