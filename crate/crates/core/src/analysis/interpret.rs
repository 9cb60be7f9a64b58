use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::{Conversation, Label, Vocabulary};
use crate::error::{Error, Result};
use crate::factor::{Assignment, FactorKind};
use crate::model::{ConversationTrace, Dtdmn};

/// Indices of the `n` largest entries, ties broken by the tie key.
fn top_indices<K: Ord>(probs: &[f64], n: usize, tie: impl Fn(usize) -> K) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| {
        probs[b]
            .total_cmp(&probs[a])
            .then_with(|| tie(a).cmp(&tie(b)))
    });
    idx.truncate(n);
    idx
}

/// The `n` most probable words of one factor's word distribution, ties
/// broken lexicographically. `n` beyond the vocabulary is clipped.
pub fn top_words(
    model: &Dtdmn,
    vocab: &Vocabulary,
    kind: FactorKind,
    index: usize,
    n: usize,
) -> Result<Vec<String>> {
    Ok(top_word_probs(model, vocab, kind, index, n)?
        .into_iter()
        .map(|(w, _)| w)
        .collect())
}

pub fn top_word_probs(
    model: &Dtdmn,
    vocab: &Vocabulary,
    kind: FactorKind,
    index: usize,
    n: usize,
) -> Result<Vec<(String, f64)>> {
    let probs = model.factor.word_distribution(&model.params, kind, index)?;
    if probs.len() != vocab.len() {
        return Err(Error::dimension(
            "vocabulary size",
            probs.len(),
            vocab.len(),
        ));
    }
    if n > probs.len() {
        log::warn!(
            "requested {n} top words but the vocabulary has {}",
            probs.len()
        );
    }
    Ok(top_indices(&probs, n, |i| vocab.token(i).to_string())
        .into_iter()
        .map(|i| (vocab.token(i).to_string(), probs[i]))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorSummary {
    pub kind: FactorKind,
    pub index: usize,
    pub words: Vec<String>,
}

pub fn factor_summaries(model: &Dtdmn, vocab: &Vocabulary, n: usize) -> Result<Vec<FactorSummary>> {
    let mut out = Vec::new();
    for (kind, count) in [
        (FactorKind::Topic, model.config.topics),
        (FactorKind::Discourse, model.config.discourse),
    ] {
        for index in 0..count {
            out.push(FactorSummary {
                kind,
                index,
                words: top_words(model, vocab, kind, index, n)?,
            });
        }
    }
    Ok(out)
}

/// Topics whose weight exceeds `threshold`.
pub fn strong_topics(z: &[f64], threshold: f64) -> BTreeSet<usize> {
    z.iter()
        .enumerate()
        .filter(|(_, &p)| p > threshold)
        .map(|(k, _)| k)
        .collect()
}

/// Number of distinct strong topics across the turns of a conversation.
pub fn strong_topic_count<'a, I>(turn_mixtures: I, threshold: f64) -> usize
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut all = BTreeSet::new();
    for z in turn_mixtures {
        all.extend(strong_topics(z, threshold));
    }
    all.len()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramRow {
    pub side: Label,
    pub count: usize,
    /// Share of the side's conversations with this many strong topics.
    pub frequency: f64,
    pub conversations: usize,
}

/// Distribution of per-conversation strong-topic counts for each side.
pub fn strong_topic_histogram(
    model: &Dtdmn,
    convs: &[Conversation],
    threshold: f64,
) -> Result<Vec<HistogramRow>> {
    let mut counts: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for c in convs {
        let trace = model.trace(c)?;
        let n = strong_topic_count(trace.turns.iter().map(|t| t.z.as_slice()), threshold);
        let side = usize::from(c.label == Label::Losing);
        if counts[side].len() <= n {
            counts[side].resize(n + 1, 0);
        }
        counts[side][n] += 1;
    }
    let mut rows = Vec::new();
    for (side, hist) in [Label::Winning, Label::Losing].into_iter().zip(&counts) {
        let total: usize = hist.iter().sum();
        for (count, &k) in hist.iter().enumerate() {
            rows.push(HistogramRow {
                side,
                count,
                frequency: k as f64 / total.max(1) as f64,
                conversations: k,
            });
        }
    }
    Ok(rows)
}

pub fn histogram_csv(rows: &[HistogramRow]) -> String {
    let mut out = String::from("side,count,frequency\n");
    for r in rows {
        let side = match r.side {
            Label::Winning => "winning",
            Label::Losing => "losing",
        };
        let _ = writeln!(out, "{side},{},{:.6}", r.count, r.frequency);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WordAnnotation {
    pub token: String,
    #[serde(flatten)]
    pub assignment: Assignment,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssignmentMap {
    pub conv_id: String,
    pub turns: Vec<Vec<WordAnnotation>>,
}

/// Topic-or-discourse annotation of every unpadded token, using each turn's
/// deterministic factors.
pub fn assignment_map(
    model: &Dtdmn,
    vocab: &Vocabulary,
    conv: &Conversation,
) -> Result<AssignmentMap> {
    let trace = model.trace(conv)?;
    let mut turns = Vec::with_capacity(conv.turns.len());
    for (turn, tt) in conv.turns.iter().zip(&trace.turns) {
        let (_, beta_t, beta_d) = model.factor.decode(&model.params, &tt.z, &tt.d)?;
        let words = turn
            .tokens()
            .iter()
            .map(|&w| WordAnnotation {
                token: vocab.token(w).to_string(),
                assignment: crate::factor::assign_word(beta_t[w], beta_d[w]),
            })
            .collect();
        turns.push(words);
    }
    Ok(AssignmentMap {
        conv_id: conv.conv_id.clone(),
        turns,
    })
}

/// Memory-weight trace: one row per turn, topic columns then discourse columns.
pub fn weight_trace_csv(trace: &ConversationTrace, topics: usize, discourse: usize) -> String {
    let mut out = String::from("turn");
    for k in 0..topics {
        let _ = write!(out, ",topic_{k}");
    }
    for j in 0..discourse {
        let _ = write!(out, ",discourse_{j}");
    }
    out.push('\n');
    for (t, turn) in trace.turns.iter().enumerate() {
        let _ = write!(out, "{}", t + 1);
        for w in &turn.w {
            let _ = write!(out, ",{w:.6}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strong_topic_examples() {
        assert_eq!(
            strong_topics(&[0.25, 0.05, 0.7], 0.2),
            BTreeSet::from([0, 2])
        );
        assert!(strong_topics(&[0.02; 50], 0.2).is_empty());
        assert_eq!(strong_topics(&[0.0, 1.0, 0.0], 0.2).len(), 1);
    }

    #[test]
    fn strong_topic_counts() {
        let same = [vec![0.9, 0.1, 0.0], vec![0.8, 0.1, 0.1]];
        assert_eq!(strong_topic_count(same.iter().map(Vec::as_slice), 0.2), 1);
        let disjoint = [vec![0.9, 0.1, 0.0], vec![0.0, 0.1, 0.9]];
        assert_eq!(
            strong_topic_count(disjoint.iter().map(Vec::as_slice), 0.2),
            2
        );
        let flat = [vec![0.2, 0.2, 0.2, 0.2, 0.2]];
        assert_eq!(strong_topic_count(flat.iter().map(Vec::as_slice), 0.2), 0);
    }

    #[test]
    fn top_indices_break_ties_by_key() {
        let probs = [0.25; 4];
        let names = ["d", "b", "a", "c"];
        assert_eq!(top_indices(&probs, 4, |i| names[i]), vec![2, 1, 3, 0]);
        assert_eq!(top_indices(&[0.0, 1.0, 0.0], 1, |i| i), vec![1]);
        assert_eq!(top_indices(&[0.5, 0.5], 10, |i| i).len(), 2);
    }
}
