//! Pairwise logistic regression over tf-idf n-gram features.
//!
//! Unigram counts come from each turn's full bag of words and bigrams from
//! its token sequence, so bigrams only cover the first `max_len` tokens.
//! A conversation's vector is the L2-normalized tf-idf of all its turns; a
//! pair is represented by the difference of its two vectors. The weights are
//! fitted without an intercept by proximal gradient descent with an l1 penalty.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::analysis::{evaluate_with, EvaluationReport};
use crate::corpus::{Conversation, ConversationPair, PAD};
use crate::error::{Error, Result};

type Sparse = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOptions {
    /// Strength of the l1 penalty on the mean logistic loss.
    pub l1: f64,
    pub iterations: usize,
    pub step: f64,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self {
            l1: 1e-4,
            iterations: 500,
            step: 1.0,
        }
    }
}

/// Raw unigram and bigram counts of a conversation, keyed by n-gram.
fn ngram_counts(conv: &Conversation) -> BTreeMap<(usize, Option<usize>), f64> {
    let mut counts = BTreeMap::new();
    for turn in &conv.turns {
        for &(w, c) in &turn.bow {
            if w != PAD {
                *counts.entry((w, None)).or_default() += f64::from(c);
            }
        }
        for pair in turn.tokens().windows(2) {
            *counts.entry((pair[0], Some(pair[1]))).or_default() += 1.0;
        }
    }
    counts
}

#[derive(Debug, Clone)]
pub struct TfidfFeatures {
    index: HashMap<(usize, Option<usize>), usize>,
    idf: Vec<f64>,
}

impl TfidfFeatures {
    /// Fit the n-gram index and smoothed idf, `ln((1 + N) / (1 + df)) + 1`,
    /// on a set of conversations.
    pub fn fit<'a, I>(convs: I) -> Self
    where
        I: IntoIterator<Item = &'a Conversation>,
    {
        let mut df: BTreeMap<(usize, Option<usize>), usize> = BTreeMap::new();
        let mut n = 0usize;
        for c in convs {
            n += 1;
            for key in ngram_counts(c).into_keys() {
                *df.entry(key).or_default() += 1;
            }
        }
        let mut index = HashMap::with_capacity(df.len());
        let mut idf = Vec::with_capacity(df.len());
        for (key, d) in df {
            index.insert(key, idf.len());
            idf.push(((1 + n) as f64 / (1 + d) as f64).ln() + 1.0);
        }
        Self { index, idf }
    }

    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    /// L2-normalized tf-idf vector; n-grams unseen at fit time are ignored.
    pub fn transform(&self, conv: &Conversation) -> Sparse {
        let mut v: Sparse = ngram_counts(conv)
            .into_iter()
            .filter_map(|(key, tf)| self.index.get(&key).map(|&i| (i, tf * self.idf[i])))
            .collect();
        v.sort_unstable_by_key(|&(i, _)| i);
        let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|(_, x)| *x /= norm);
        }
        v
    }
}

fn sparse_diff(a: &Sparse, b: &Sparse) -> Sparse {
    let mut out: BTreeMap<usize, f64> = a.iter().copied().collect();
    for &(i, x) in b {
        *out.entry(i).or_default() -= x;
    }
    out.into_iter().filter(|&(_, x)| x != 0.0).collect()
}

fn dot(w: &[f64], x: &Sparse) -> f64 {
    x.iter().map(|&(i, v)| w[i] * v).sum()
}

#[derive(Debug, Clone)]
pub struct LrTfidf {
    pub features: TfidfFeatures,
    pub weights: Vec<f64>,
}

impl LrTfidf {
    /// Fit on training pairs, where the positive conversation should score
    /// higher than the negative one.
    pub fn fit(pairs: &[ConversationPair], opts: &BaselineOptions) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::config(
                "the baseline needs at least one training pair",
            ));
        }
        let mut seen = HashMap::new();
        for p in pairs {
            for c in [&p.positive, &p.negative] {
                seen.entry(c.key()).or_insert(c);
            }
        }
        let mut convs: Vec<&Conversation> = seen.into_values().collect();
        convs.sort_by_key(|c| c.key());
        let features = TfidfFeatures::fit(convs.iter().copied());
        let xs: Vec<Sparse> = pairs
            .iter()
            .map(|p| {
                sparse_diff(
                    &features.transform(&p.positive),
                    &features.transform(&p.negative),
                )
            })
            .collect();
        let n = xs.len() as f64;
        let mut w = vec![0.0; features.dim()];
        let mut grad = vec![0.0; features.dim()];
        for _ in 0..opts.iterations {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for x in &xs {
                // d/dm softplus(-m) = -sigmoid(-m)
                let m = dot(&w, x);
                let coef = -crate::analysis::logistic(-m) / n;
                for &(i, v) in x {
                    grad[i] += coef * v;
                }
            }
            let shrink = opts.step * opts.l1;
            for (wi, gi) in w.iter_mut().zip(&grad) {
                let u = *wi - opts.step * gi;
                *wi = u.signum() * (u.abs() - shrink).max(0.0);
            }
        }
        Ok(Self {
            features,
            weights: w,
        })
    }

    pub fn score(&self, conv: &Conversation) -> f64 {
        dot(&self.weights, &self.features.transform(conv))
    }

    /// Number of nonzero weights.
    pub fn support(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }
}

/// Train on `train` and evaluate on `test` in the same seeded presentation
/// order as the neural model.
pub fn lr_tfidf_baseline(
    train: &[ConversationPair],
    test: &[ConversationPair],
    seed: u64,
    opts: &BaselineOptions,
) -> Result<EvaluationReport> {
    let model = LrTfidf::fit(train, opts)?;
    evaluate_with(test, seed, |c| Ok(model.score(c)))
}
