//! Reverse-mode automatic differentiation over small dense vectors.
//!
//! A [`Tape`] records eagerly evaluated operations. Parameters are read in
//! place from a borrowed [`ParamSet`]; [`Tape::backward`] accumulates their
//! gradients into a [`Grads`] buffer. Recurrent cells, attention pooling, the
//! episodic-memory update and the factor-encoder loss terms are fused ops with
//! hand-written adjoints, which keeps graphs small enough for CPU training.

use std::rc::Rc;

use crate::params::{Grads, ParamId, ParamSet, Tensor};

/// Lower bound applied to every logarithm argument.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Parameters of one GRU cell (PyTorch gate layout: reset, update, new).
#[derive(Debug, Clone, Copy)]
pub struct GruCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub hidden: usize,
}

/// Additive attention: `score_j = v . tanh(W s_j + b)`.
#[derive(Debug, Clone, Copy)]
pub struct AttnParams {
    pub w: ParamId,
    pub b: ParamId,
    pub v: ParamId,
}

/// Sparse constant input vector (`(index, value)` pairs).
pub type SparseInput = Rc<[(usize, f64)]>;

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    Affine {
        w: ParamId,
        b: Option<ParamId>,
        x: Var,
    },
    AffineSparse {
        w: ParamId,
        b: Option<ParamId>,
        x: SparseInput,
    },
    TransposeMul {
        w: ParamId,
        x: Var,
    },
    Embed {
        table: ParamId,
        row: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Softmax(Var),
    Softplus(Var),
    Concat(Vec<Var>),
    Sum(Vec<Var>),
    Dot(Var, Var),
    Gru {
        cell: GruCell,
        x: Var,
        h: Var,
    },
    Attention {
        attn: AttnParams,
        states: Vec<Var>,
    },
    MemUpdate {
        m: Var,
        w: Var,
        e: Var,
        a: Var,
    },
    MemRead {
        m: Var,
        w: Var,
    },
    KlNormal {
        mu: Var,
        log_sigma: Var,
    },
    KlUniform(Var),
    Recon {
        bow: SparseInput,
        beta: Var,
    },
    MutualInfo(Var, Var),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Vec<f64>,
    cache: Vec<f64>,
}

pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

fn flog(x: f64) -> f64 {
    x.max(LOG_FLOOR).ln()
}

/// `out += W x` for a row-major `W`.
fn matvec_acc(w: &Tensor, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.cols, x.len());
    debug_assert_eq!(w.rows, out.len());
    for (r, o) in out.iter_mut().enumerate() {
        let row = w.row(r);
        let mut s = 0.0;
        for (a, b) in row.iter().zip(x) {
            s += a * b;
        }
        *o += s;
    }
}

/// `out += W^T g`.
fn matvec_t_acc(w: &Tensor, g: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.rows, g.len());
    debug_assert_eq!(w.cols, out.len());
    for (r, &gr) in g.iter().enumerate() {
        if gr == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(w.row(r)) {
            *o += a * gr;
        }
    }
}

/// `dW += g x^T` into a flat row-major buffer with `cols = x.len()`.
fn outer_acc(dw: &mut [f64], g: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &gr) in g.iter().enumerate() {
        if gr == 0.0 {
            continue;
        }
        let row = &mut dw[r * cols..(r + 1) * cols];
        for (d, xv) in row.iter_mut().zip(x) {
            *d += gr * xv;
        }
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match &self.nodes[v.0].op {
            Op::Param(id) => &self.params.get(*id).data,
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        debug_assert_eq!(val.len(), 1);
        val[0]
    }

    /// Attention weights recorded by an [`Tape::attention`] node.
    pub fn attention_weights(&self, v: Var) -> &[f64] {
        match &self.nodes[v.0].op {
            Op::Attention { states, .. } => &self.nodes[v.0].cache[..states.len()],
            _ => panic!("node is not an attention node"),
        }
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> Var {
        self.push_cached(op, value, Vec::new())
    }

    fn push_cached(&mut self, op: Op, value: Vec<f64>, cache: Vec<f64>) -> Var {
        self.nodes.push(Node { op, value, cache });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Vec<f64>) -> Var {
        self.push(Op::Input, value)
    }

    /// Copy of `v` that gradients do not flow through.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).to_vec();
        self.input(value)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.push(Op::Param(id), Vec::new())
    }

    pub fn affine(&mut self, w: ParamId, b: Option<ParamId>, x: Var) -> Var {
        let wt = self.params.get(w);
        let mut out = match b {
            Some(b) => self.params.get(b).data.clone(),
            None => vec![0.0; wt.rows],
        };
        matvec_acc(wt, self.value(x), &mut out);
        self.push(Op::Affine { w, b, x }, out)
    }

    pub fn affine_sparse(&mut self, w: ParamId, b: Option<ParamId>, x: SparseInput) -> Var {
        let wt = self.params.get(w);
        let mut out = match b {
            Some(b) => self.params.get(b).data.clone(),
            None => vec![0.0; wt.rows],
        };
        for &(j, xv) in x.iter() {
            for (r, o) in out.iter_mut().enumerate() {
                *o += wt.data[r * wt.cols + j] * xv;
            }
        }
        self.push(Op::AffineSparse { w, b, x }, out)
    }

    /// `W^T x`: maps a row-indexed mixture onto the column space of `W`.
    pub fn transpose_mul(&mut self, w: ParamId, x: Var) -> Var {
        let wt = self.params.get(w);
        let mut out = vec![0.0; wt.cols];
        matvec_t_acc(wt, self.value(x), &mut out);
        self.push(Op::TransposeMul { w, x }, out)
    }

    pub fn embed(&mut self, table: ParamId, row: usize) -> Var {
        let value = self.params.get(table).row(row).to_vec();
        self.push(Op::Embed { table, row }, value)
    }

    fn zip_op(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.len(), vb.len(), "elementwise op on mismatched lengths");
        let value = va.iter().zip(vb).map(|(x, y)| f(*x, *y)).collect();
        self.push(op, value)
    }

    fn map_op(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).iter().map(|x| f(*x)).collect();
        self.push(op, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_op(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_op(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_op(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map_op(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map_op(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map_op(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map_op(a, f64::exp, Op::Exp(a))
    }

    /// Natural log with the argument floored at [`LOG_FLOOR`].
    pub fn log(&mut self, a: Var) -> Var {
        self.map_op(a, flog, Op::Log(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.map_op(a, softplus, Op::Softplus(a))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let mut value = self.value(a).to_vec();
        softmax_in_place(&mut value);
        self.push(Op::Softmax(a), value)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut value = Vec::new();
        for p in parts {
            value.extend_from_slice(self.value(*p));
        }
        self.push(Op::Concat(parts.to_vec()), value)
    }

    pub fn sum(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "sum of no terms");
        let mut value = self.value(parts[0]).to_vec();
        for p in &parts[1..] {
            for (acc, x) in value.iter_mut().zip(self.value(*p)) {
                *acc += x;
            }
        }
        self.push(Op::Sum(parts.to_vec()), value)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let s = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .sum();
        self.push(Op::Dot(a, b), vec![s])
    }

    /// One GRU step: `h' = (1 - u) * n + u * h`.
    pub fn gru(&mut self, cell: GruCell, x: Var, h: Var) -> Var {
        let hs = cell.hidden;
        let p = self.params;
        let mut gi = p.get(cell.b_ih).data.clone();
        matvec_acc(p.get(cell.w_ih), self.value(x), &mut gi);
        let mut gh = p.get(cell.b_hh).data.clone();
        let hv = self.value(h);
        matvec_acc(p.get(cell.w_hh), hv, &mut gh);
        // cache layout: r | u | n | hn
        let mut cache = vec![0.0; 4 * hs];
        let mut out = vec![0.0; hs];
        for k in 0..hs {
            let r = sigmoid(gi[k] + gh[k]);
            let u = sigmoid(gi[hs + k] + gh[hs + k]);
            let hn = gh[2 * hs + k];
            let n = (gi[2 * hs + k] + r * hn).tanh();
            out[k] = (1.0 - u) * n + u * hv[k];
            cache[k] = r;
            cache[hs + k] = u;
            cache[2 * hs + k] = n;
            cache[3 * hs + k] = hn;
        }
        self.push_cached(Op::Gru { cell, x, h }, out, cache)
    }

    /// Additive attention pooling over `states`.
    pub fn attention(&mut self, attn: AttnParams, states: &[Var]) -> Var {
        assert!(!states.is_empty(), "attention over an empty sequence");
        let p = self.params;
        let w = p.get(attn.w);
        let a_dim = w.rows;
        let dim = self.value(states[0]).len();
        let n = states.len();
        // cache layout: alpha (n) | tanh hidden (n * a_dim)
        let mut cache = vec![0.0; n + n * a_dim];
        let mut scores = vec![0.0; n];
        for (j, s) in states.iter().enumerate() {
            let u = &mut cache[n + j * a_dim..n + (j + 1) * a_dim];
            u.copy_from_slice(&p.get(attn.b).data);
            matvec_acc(w, self.value(*s), u);
            let mut sc = 0.0;
            for (uk, vk) in u.iter_mut().zip(&p.get(attn.v).data) {
                *uk = uk.tanh();
                sc += *uk * vk;
            }
            scores[j] = sc;
        }
        softmax_in_place(&mut scores);
        cache[..n].copy_from_slice(&scores);
        let mut out = vec![0.0; dim];
        for (j, s) in states.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(self.value(*s)) {
                *o += scores[j] * x;
            }
        }
        self.push_cached(
            Op::Attention {
                attn,
                states: states.to_vec(),
            },
            out,
            cache,
        )
    }

    /// Gated erase/add update, row-wise: `M'_i = M_i * (1 - w_i e) + w_i a`.
    pub fn mem_update(&mut self, m: Var, w: Var, e: Var, a: Var) -> Var {
        let (mv, wv, ev, av) = (self.value(m), self.value(w), self.value(e), self.value(a));
        let cols = ev.len();
        assert_eq!(av.len(), cols);
        assert_eq!(mv.len(), wv.len() * cols, "memory shape mismatch");
        let mut out = vec![0.0; mv.len()];
        for (i, &wi) in wv.iter().enumerate() {
            for j in 0..cols {
                out[i * cols + j] = mv[i * cols + j] * (1.0 - wi * ev[j]) + wi * av[j];
            }
        }
        self.push(Op::MemUpdate { m, w, e, a }, out)
    }

    /// Weighted row sum `r = sum_i w_i M_i`.
    pub fn mem_read(&mut self, m: Var, w: Var) -> Var {
        let (mv, wv) = (self.value(m), self.value(w));
        let rows = wv.len();
        assert!(rows > 0 && mv.len() % rows == 0, "memory shape mismatch");
        let cols = mv.len() / rows;
        let mut out = vec![0.0; cols];
        for (i, &wi) in wv.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(&mv[i * cols..(i + 1) * cols]) {
                *o += wi * x;
            }
        }
        self.push(Op::MemRead { m, w }, out)
    }

    /// KL divergence of `N(mu, exp(log_sigma)^2)` from the standard normal.
    pub fn kl_normal(&mut self, mu: Var, log_sigma: Var) -> Var {
        let v = crate::factor::kl_normal(self.value(mu), self.value(log_sigma));
        self.push(Op::KlNormal { mu, log_sigma }, vec![v])
    }

    /// KL divergence of a categorical from the uniform distribution.
    pub fn kl_uniform(&mut self, pi: Var) -> Var {
        let v = crate::factor::kl_discourse(self.value(pi));
        self.push(Op::KlUniform(pi), vec![v])
    }

    /// Negative log-likelihood of sparse counts under `beta`.
    pub fn reconstruction(&mut self, bow: SparseInput, beta: Var) -> Var {
        let b = self.value(beta);
        let v = -bow.iter().map(|&(i, c)| c * flog(b[i])).sum::<f64>();
        self.push(Op::Recon { bow, beta }, vec![v])
    }

    /// Mutual information between the word and an equiprobable binary source
    /// whose conditionals are `a` and `b`.
    pub fn mutual_info(&mut self, a: Var, b: Var) -> Var {
        let v = crate::factor::mi_penalty(self.value(a), self.value(b));
        self.push(Op::MutualInfo(a, b), vec![v])
    }

    /// Backpropagate from the scalar `root`, accumulating parameter gradients.
    pub fn backward(&self, root: Var, grads: &mut Grads) {
        assert_eq!(self.value(root).len(), 1, "backward from a non-scalar");
        let mut g: Vec<Vec<f64>> = vec![Vec::new(); root.0 + 1];
        g[root.0] = vec![1.0];
        for i in (0..=root.0).rev() {
            if g[i].is_empty() {
                continue;
            }
            let gi = std::mem::take(&mut g[i]);
            self.backprop_node(i, &gi, &mut g, grads);
        }
    }

    fn backprop_node(&self, i: usize, gi: &[f64], g: &mut [Vec<f64>], grads: &mut Grads) {
        let node = &self.nodes[i];
        let y = &node.value;
        let p = self.params;
        match &node.op {
            Op::Input => {}
            Op::Param(id) => {
                let slot = grads.slot(*id, gi.len());
                slot.iter_mut().zip(gi).for_each(|(s, x)| *s += x);
            }
            Op::Affine { w, b, x } => {
                let wt = p.get(*w);
                outer_acc(grads.slot(*w, wt.data.len()), gi, self.value(*x));
                if let Some(b) = b {
                    let slot = grads.slot(*b, gi.len());
                    slot.iter_mut().zip(gi).for_each(|(s, x)| *s += x);
                }
                let len = wt.cols;
                matvec_t_acc(wt, gi, acc(g, *x, len));
            }
            Op::AffineSparse { w, b, x } => {
                let wt = p.get(*w);
                let cols = wt.cols;
                let slot = grads.slot(*w, wt.data.len());
                for &(j, xv) in x.iter() {
                    for (r, &gr) in gi.iter().enumerate() {
                        slot[r * cols + j] += gr * xv;
                    }
                }
                if let Some(b) = b {
                    let slot = grads.slot(*b, gi.len());
                    slot.iter_mut().zip(gi).for_each(|(s, x)| *s += x);
                }
            }
            Op::TransposeMul { w, x } => {
                // y = W^T x  =>  dW += x g^T, dx = W g
                let wt = p.get(*w);
                outer_acc(grads.slot(*w, wt.data.len()), self.value(*x), gi);
                let len = wt.rows;
                matvec_acc(wt, gi, acc(g, *x, len));
            }
            Op::Embed { table, row } => {
                let t = p.get(*table);
                let cols = t.cols;
                let slot = grads.slot(*table, t.data.len());
                for (s, x) in slot[row * cols..(row + 1) * cols].iter_mut().zip(gi) {
                    *s += x;
                }
            }
            Op::Add(a, b) => {
                add_into(acc(g, *a, gi.len()), gi);
                add_into(acc(g, *b, gi.len()), gi);
            }
            Op::Sub(a, b) => {
                add_into(acc(g, *a, gi.len()), gi);
                let gb = acc(g, *b, gi.len());
                gb.iter_mut().zip(gi).for_each(|(s, x)| *s -= x);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).to_vec(), self.value(*b).to_vec());
                let ga = acc(g, *a, gi.len());
                for k in 0..gi.len() {
                    ga[k] += gi[k] * vb[k];
                }
                let gb = acc(g, *b, gi.len());
                for k in 0..gi.len() {
                    gb[k] += gi[k] * va[k];
                }
            }
            Op::Scale(a, c) => {
                let ga = acc(g, *a, gi.len());
                ga.iter_mut().zip(gi).for_each(|(s, x)| *s += c * x);
            }
            Op::Tanh(a) => {
                let ga = acc(g, *a, gi.len());
                for k in 0..gi.len() {
                    ga[k] += gi[k] * (1.0 - y[k] * y[k]);
                }
            }
            Op::Sigmoid(a) => {
                let ga = acc(g, *a, gi.len());
                for k in 0..gi.len() {
                    ga[k] += gi[k] * y[k] * (1.0 - y[k]);
                }
            }
            Op::Exp(a) => {
                let ga = acc(g, *a, gi.len());
                for k in 0..gi.len() {
                    ga[k] += gi[k] * y[k];
                }
            }
            Op::Log(a) => {
                let va = self.value(*a).to_vec();
                let ga = acc(g, *a, gi.len());
                for k in 0..gi.len() {
                    if va[k] > LOG_FLOOR {
                        ga[k] += gi[k] / va[k];
                    }
                }
            }
            Op::Softplus(a) => {
                let va = self.value(*a).to_vec();
                let ga = acc(g, *a, gi.len());
                for k in 0..gi.len() {
                    ga[k] += gi[k] * sigmoid(va[k]);
                }
            }
            Op::Softmax(a) => {
                let dotp: f64 = y.iter().zip(gi).map(|(s, x)| s * x).sum();
                let ga = acc(g, *a, gi.len());
                for k in 0..gi.len() {
                    ga[k] += y[k] * (gi[k] - dotp);
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for part in parts {
                    let len = self.value(*part).len();
                    add_into(acc(g, *part, len), &gi[off..off + len]);
                    off += len;
                }
            }
            Op::Sum(parts) => {
                for part in parts {
                    add_into(acc(g, *part, gi.len()), gi);
                }
            }
            Op::Dot(a, b) => {
                let s = gi[0];
                let (va, vb) = (self.value(*a).to_vec(), self.value(*b).to_vec());
                let ga = acc(g, *a, va.len());
                ga.iter_mut().zip(&vb).for_each(|(d, x)| *d += s * x);
                let gb = acc(g, *b, vb.len());
                gb.iter_mut().zip(&va).for_each(|(d, x)| *d += s * x);
            }
            Op::Gru { cell, x, h } => {
                let hs = cell.hidden;
                let c = &node.cache;
                let hv = self.value(*h).to_vec();
                let xv = self.value(*x).to_vec();
                let mut d_gi = vec![0.0; 3 * hs];
                let mut d_gh = vec![0.0; 3 * hs];
                let mut dh = vec![0.0; hs];
                for k in 0..hs {
                    let (r, u, n, hn) = (c[k], c[hs + k], c[2 * hs + k], c[3 * hs + k]);
                    let gk = gi[k];
                    let dn = gk * (1.0 - u);
                    let du = gk * (hv[k] - n);
                    dh[k] = gk * u;
                    let dn_pre = dn * (1.0 - n * n);
                    let dr = dn_pre * hn;
                    let dhn = dn_pre * r;
                    let dr_pre = dr * r * (1.0 - r);
                    let du_pre = du * u * (1.0 - u);
                    d_gi[k] = dr_pre;
                    d_gi[hs + k] = du_pre;
                    d_gi[2 * hs + k] = dn_pre;
                    d_gh[k] = dr_pre;
                    d_gh[hs + k] = du_pre;
                    d_gh[2 * hs + k] = dhn;
                }
                let w_ih = p.get(cell.w_ih);
                let w_hh = p.get(cell.w_hh);
                outer_acc(grads.slot(cell.w_ih, w_ih.data.len()), &d_gi, &xv);
                add_into(grads.slot(cell.b_ih, 3 * hs), &d_gi);
                outer_acc(grads.slot(cell.w_hh, w_hh.data.len()), &d_gh, &hv);
                add_into(grads.slot(cell.b_hh, 3 * hs), &d_gh);
                matvec_t_acc(w_ih, &d_gi, acc(g, *x, xv.len()));
                matvec_t_acc(w_hh, &d_gh, &mut dh);
                add_into(acc(g, *h, hs), &dh);
            }
            Op::Attention { attn, states } => {
                let n = states.len();
                let w = p.get(attn.w);
                let a_dim = w.rows;
                let vvec = &p.get(attn.v).data;
                let alpha = &node.cache[..n];
                let hidden = &node.cache[n..];
                let mut d_alpha = vec![0.0; n];
                for (j, s) in states.iter().enumerate() {
                    d_alpha[j] = self.value(*s).iter().zip(gi).map(|(a, b)| a * b).sum();
                }
                let mean: f64 = alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
                let mut dv = vec![0.0; a_dim];
                let mut db = vec![0.0; a_dim];
                let mut dw = vec![0.0; w.data.len()];
                for (j, s) in states.iter().enumerate() {
                    let sv = self.value(*s).to_vec();
                    let dscore = alpha[j] * (d_alpha[j] - mean);
                    let u = &hidden[j * a_dim..(j + 1) * a_dim];
                    let mut dpre = vec![0.0; a_dim];
                    for k in 0..a_dim {
                        dv[k] += dscore * u[k];
                        dpre[k] = dscore * vvec[k] * (1.0 - u[k] * u[k]);
                    }
                    add_into(&mut db, &dpre);
                    outer_acc(&mut dw, &dpre, &sv);
                    let gs = acc(g, *s, sv.len());
                    for (d, x) in gs.iter_mut().zip(gi) {
                        *d += alpha[j] * x;
                    }
                    matvec_t_acc(w, &dpre, gs);
                }
                add_into(grads.slot(attn.v, a_dim), &dv);
                add_into(grads.slot(attn.b, a_dim), &db);
                add_into(grads.slot(attn.w, dw.len()), &dw);
            }
            Op::MemUpdate { m, w, e, a } => {
                let (mv, wv, ev, av) = (
                    self.value(*m).to_vec(),
                    self.value(*w).to_vec(),
                    self.value(*e).to_vec(),
                    self.value(*a).to_vec(),
                );
                let rows = wv.len();
                let cols = ev.len();
                let mut dm = vec![0.0; mv.len()];
                let mut dw = vec![0.0; rows];
                let mut de = vec![0.0; cols];
                let mut da = vec![0.0; cols];
                for i in 0..rows {
                    for j in 0..cols {
                        let gij = gi[i * cols + j];
                        let mij = mv[i * cols + j];
                        dm[i * cols + j] = gij * (1.0 - wv[i] * ev[j]);
                        dw[i] += gij * (av[j] - mij * ev[j]);
                        de[j] -= gij * mij * wv[i];
                        da[j] += gij * wv[i];
                    }
                }
                add_into(acc(g, *m, mv.len()), &dm);
                add_into(acc(g, *w, rows), &dw);
                add_into(acc(g, *e, cols), &de);
                add_into(acc(g, *a, cols), &da);
            }
            Op::MemRead { m, w } => {
                let (mv, wv) = (self.value(*m).to_vec(), self.value(*w).to_vec());
                let rows = wv.len();
                let cols = gi.len();
                let mut dm = vec![0.0; mv.len()];
                let mut dw = vec![0.0; rows];
                for i in 0..rows {
                    for j in 0..cols {
                        dw[i] += gi[j] * mv[i * cols + j];
                        dm[i * cols + j] = wv[i] * gi[j];
                    }
                }
                add_into(acc(g, *m, mv.len()), &dm);
                add_into(acc(g, *w, rows), &dw);
            }
            Op::KlNormal { mu, log_sigma } => {
                let s = gi[0];
                let (mv, lv) = (self.value(*mu).to_vec(), self.value(*log_sigma).to_vec());
                let gm = acc(g, *mu, mv.len());
                gm.iter_mut().zip(&mv).for_each(|(d, m)| *d += s * m);
                let gl = acc(g, *log_sigma, lv.len());
                gl.iter_mut()
                    .zip(&lv)
                    .for_each(|(d, l)| *d += s * ((2.0 * l).exp() - 1.0));
            }
            Op::KlUniform(pi) => {
                let s = gi[0];
                let pv = self.value(*pi).to_vec();
                let dim = pv.len() as f64;
                let gp = acc(g, *pi, pv.len());
                for (d, &x) in gp.iter_mut().zip(&pv) {
                    if x > LOG_FLOOR {
                        *d += s * ((x * dim).ln() + 1.0);
                    } else {
                        *d += s * (flog(x) + dim.ln());
                    }
                }
            }
            Op::Recon { bow, beta } => {
                let s = gi[0];
                let bv = self.value(*beta).to_vec();
                let gb = acc(g, *beta, bv.len());
                for &(idx, c) in bow.iter() {
                    if bv[idx] > LOG_FLOOR {
                        gb[idx] -= s * c / bv[idx];
                    }
                }
            }
            Op::MutualInfo(a, b) => {
                let s = gi[0];
                let (va, vb) = (self.value(*a).to_vec(), self.value(*b).to_vec());
                let mut da = vec![0.0; va.len()];
                let mut db = vec![0.0; vb.len()];
                for k in 0..va.len() {
                    let pm = 0.5 * (va[k] + vb[k]);
                    let lp = flog(pm);
                    da[k] = s * 0.5 * (flog(va[k]) - lp);
                    db[k] = s * 0.5 * (flog(vb[k]) - lp);
                }
                add_into(acc(g, *a, va.len()), &da);
                add_into(acc(g, *b, vb.len()), &db);
            }
        }
    }
}

fn acc(g: &mut [Vec<f64>], v: Var, len: usize) -> &mut [f64] {
    let slot = &mut g[v.0];
    if slot.is_empty() {
        slot.resize(len, 0.0);
    }
    slot
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Group;
    use rand::SeedableRng;

    fn numeric_check<F>(params: &mut ParamSet, f: F)
    where
        F: Fn(&mut Tape) -> Var,
    {
        let mut grads = Grads::new(params);
        {
            let mut tape = Tape::new(params);
            let out = f(&mut tape);
            tape.backward(out, &mut grads);
        }
        let h = 1e-6;
        let ids: Vec<ParamId> = params.ids().collect();
        for id in ids {
            for k in 0..params.get(id).data.len() {
                let orig = params.get(id).data[k];
                params.get_mut(id).data[k] = orig + h;
                let plus = {
                    let mut t = Tape::new(params);
                    let o = f(&mut t);
                    t.scalar(o)
                };
                params.get_mut(id).data[k] = orig - h;
                let minus = {
                    let mut t = Tape::new(params);
                    let o = f(&mut t);
                    t.scalar(o)
                };
                params.get_mut(id).data[k] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let analytic = grads.get(id).map_or(0.0, |g| g[k]);
                let denom = numeric.abs().max(analytic.abs()).max(1e-6);
                assert!(
                    (numeric - analytic).abs() / denom < 1e-4,
                    "{}[{k}]: analytic {analytic} numeric {numeric}",
                    params.name(id)
                );
            }
        }
    }

    fn random_params(shapes: &[(&str, usize, usize)]) -> ParamSet {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut p = ParamSet::new();
        for (name, r, c) in shapes {
            p.add_uniform(name, Group::Rest, *r, *c, 0.8, &mut rng);
        }
        p
    }

    #[test]
    fn gru_and_attention_gradients() {
        let mut p = random_params(&[
            ("wi", 6, 3),
            ("wh", 6, 2),
            ("bi", 6, 1),
            ("bh", 6, 1),
            ("aw", 4, 2),
            ("ab", 4, 1),
            ("av", 4, 1),
            ("x", 3, 3),
        ]);
        numeric_check(&mut p, |t| {
            let ps = t.params();
            let cell = GruCell {
                w_ih: ps.id("wi").unwrap(),
                w_hh: ps.id("wh").unwrap(),
                b_ih: ps.id("bi").unwrap(),
                b_hh: ps.id("bh").unwrap(),
                hidden: 2,
            };
            let attn = AttnParams {
                w: ps.id("aw").unwrap(),
                b: ps.id("ab").unwrap(),
                v: ps.id("av").unwrap(),
            };
            let table = ps.id("x").unwrap();
            let mut h = t.input(vec![0.1, -0.2]);
            let mut states = Vec::new();
            for row in 0..3 {
                let x = t.embed(table, row);
                h = t.gru(cell, x, h);
                states.push(h);
            }
            let pooled = t.attention(attn, &states);
            let sq = t.mul(pooled, pooled);
            let ones = t.input(vec![1.0, 2.0]);
            t.dot(sq, ones)
        });
    }

    #[test]
    fn memory_and_loss_term_gradients() {
        let mut p = random_params(&[
            ("m", 3, 2),
            ("w", 3, 1),
            ("e", 2, 1),
            ("a", 2, 1),
            ("l", 4, 1),
            ("k", 4, 1),
        ]);
        numeric_check(&mut p, |t| {
            let ps = t.params();
            let m = t.param(ps.id("m").unwrap());
            let wl = t.param(ps.id("w").unwrap());
            let w = t.softmax(wl);
            let el = t.param(ps.id("e").unwrap());
            let e = t.sigmoid(el);
            let al = t.param(ps.id("a").unwrap());
            let a = t.tanh(al);
            let m1 = t.mem_update(m, w, e, a);
            let r = t.mem_read(m1, w);
            let rr = t.dot(r, r);
            let lv = t.param(ps.id("l").unwrap());
            let beta_a = t.softmax(lv);
            let kv = t.param(ps.id("k").unwrap());
            let beta_b = t.softmax(kv);
            let mi = t.mutual_info(beta_a, beta_b);
            let rec = t.reconstruction(Rc::from(vec![(0usize, 2.0), (3, 1.0)]), beta_a);
            let klu = t.kl_uniform(beta_b);
            let sp = t.softplus(rr);
            t.sum(&[sp, mi, rec, klu])
        });
    }
}
