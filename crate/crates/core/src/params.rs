//! Named parameter storage, gradient buffers and the Adam optimizer.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Optimization group a parameter belongs to. The trainer alternates updates
/// between [`Group::Factor`] and [`Group::Rest`]; [`Group::Frozen`] is never
/// updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Factor,
    Rest,
    Frozen,
}

/// Dense row-major matrix (a vector is a single column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub group: Group,
    #[serde(flatten)]
    pub tensor: Tensor,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<NamedTensor>,
    index: BTreeMap<String, ParamId>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, group: Group, tensor: Tensor) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "parameter `{name}` registered twice"
        );
        let id = ParamId(self.entries.len());
        self.entries.push(NamedTensor {
            name: name.to_string(),
            group,
            tensor,
        });
        self.index.insert(name.to_string(), id);
        id
    }

    /// Register a parameter drawn uniformly from `[-scale, scale]`.
    pub fn add_uniform<R: Rng>(
        &mut self,
        name: &str,
        group: Group,
        rows: usize,
        cols: usize,
        scale: f64,
        rng: &mut R,
    ) -> ParamId {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        self.add(name, group, Tensor { rows, cols, data })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn group(&self, id: ParamId) -> Group {
        self.entries[id.0].group
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn entries(&self) -> &[NamedTensor] {
        &self.entries
    }

    /// Replace every parameter value from `stored`, checking names, groups
    /// and shapes against this (freshly laid out) set.
    pub fn load_from(&mut self, stored: Vec<NamedTensor>) -> Result<()> {
        if stored.len() != self.entries.len() {
            return Err(Error::dimension(
                "parameter count",
                self.entries.len(),
                stored.len(),
            ));
        }
        for item in stored {
            let id = self
                .id(&item.name)
                .ok_or_else(|| Error::config(format!("unexpected parameter `{}`", item.name)))?;
            let slot = &mut self.entries[id.0];
            let expected = (slot.tensor.rows, slot.tensor.cols);
            let found = (item.tensor.rows, item.tensor.cols);
            if expected != found || item.tensor.data.len() != found.0 * found.1 {
                return Err(Error::dimension(
                    item.name.clone(),
                    format!("{}x{}", expected.0, expected.1),
                    format!(
                        "{}x{} ({} values)",
                        found.0,
                        found.1,
                        item.tensor.data.len()
                    ),
                ));
            }
            slot.tensor = item.tensor;
        }
        Ok(())
    }
}

/// Gradient buffers aligned with a [`ParamSet`]; buffers are allocated lazily.
#[derive(Debug, Clone, Default)]
pub struct Grads {
    bufs: Vec<Vec<f64>>,
}

impl Grads {
    pub fn new(params: &ParamSet) -> Self {
        Self {
            bufs: vec![Vec::new(); params.len()],
        }
    }

    pub(crate) fn slot(&mut self, id: ParamId, len: usize) -> &mut [f64] {
        if self.bufs.len() <= id.0 {
            self.bufs.resize(id.0 + 1, Vec::new());
        }
        let buf = &mut self.bufs[id.0];
        if buf.is_empty() {
            buf.resize(len, 0.0);
        }
        buf
    }

    /// Gradient for `id`, or `None` if nothing flowed into it.
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.bufs
            .get(id.0)
            .filter(|b| !b.is_empty())
            .map(Vec::as_slice)
    }

    pub fn scale(&mut self, factor: f64) {
        for buf in &mut self.bufs {
            buf.iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.bufs.iter().flatten().all(|g| g.is_finite())
    }
}

/// Adam moments for one parameter group.
#[derive(Debug, Clone)]
pub struct Adam {
    pub group: Group,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(group: Group, lr: f64) -> Self {
        Self {
            group,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Apply one update to every parameter of this optimizer's group.
    /// Parameters without a gradient still decay their moments.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Grads) {
        self.step += 1;
        let n = params.len();
        if self.m.len() < n {
            self.m.resize(n, Vec::new());
            self.v.resize(n, Vec::new());
        }
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for id in 0..n {
            let entry = &mut params.entries[id];
            if entry.group != self.group {
                continue;
            }
            let len = entry.tensor.data.len();
            let m = &mut self.m[id];
            let v = &mut self.v[id];
            if m.is_empty() {
                m.resize(len, 0.0);
                v.resize(len, 0.0);
            }
            let g = grads.get(ParamId(id));
            for k in 0..len {
                let gk = g.map_or(0.0, |g| g[k]);
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                entry.tensor.data[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}
