use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use super::{Conversation, ConversationPair, Label, RawConversation};
use crate::rng::{key_hash, Streams};

/// Jaccard similarity of the supports of two dense count vectors.
pub fn jaccard(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    let (mut inter, mut union) = (0usize, 0usize);
    for i in 0..n {
        let x = a.get(i).copied().unwrap_or(0.0) > 0.0;
        let y = b.get(i).copied().unwrap_or(0.0) > 0.0;
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Jaccard similarity of two index sets.
pub fn jaccard_support(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Vocabulary indices used anywhere in the conversation.
pub fn conversation_support(conv: &Conversation) -> BTreeSet<usize> {
    conv.turns
        .iter()
        .flat_map(|t| t.bow.iter().filter(|(_, c)| *c > 0).map(|(i, _)| *i))
        .collect()
}

fn truncated(conv: &Conversation, turns: usize) -> Conversation {
    Conversation {
        turns: conv.turns[..turns].to_vec(),
        ..conv.clone()
    }
}

/// Cartesian product of positives and negatives from the same moot.
///
/// Negatives shorter than their positive are dropped and longer ones are cut
/// to the positive's turn count. The similarity filter is applied to the
/// truncated pair, so every emitted pair meets the threshold as stored.
pub fn build_pairs(
    positives: &[Conversation],
    negatives: &[Conversation],
    threshold: f64,
) -> Vec<ConversationPair> {
    let mut out = Vec::new();
    for pos in positives {
        let pos_support = conversation_support(pos);
        for neg in negatives {
            if neg.moot_id != pos.moot_id || neg.num_turns() < pos.num_turns() {
                continue;
            }
            let neg = truncated(neg, pos.num_turns());
            if jaccard_support(&pos_support, &conversation_support(&neg)) < threshold {
                continue;
            }
            out.push(ConversationPair {
                pair_id: format!("{}::{}::{}", pos.moot_id, pos.conv_id, neg.conv_id),
                moot_id: pos.moot_id.clone(),
                positive: pos.clone(),
                negative: neg,
            });
        }
    }
    out
}

/// Shuffle win/lose labels among the conversations of each moot.
///
/// This keeps the per-moot label counts but destroys any link between text
/// and outcome; it is the control condition for planted-signal experiments.
pub fn permute_labels(convs: &mut [RawConversation], seed: u64) {
    let streams = Streams::new(seed);
    let mut by_moot: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, c) in convs.iter().enumerate() {
        by_moot.entry(c.moot_id.clone()).or_default().push(i);
    }
    for (moot, idx) in by_moot {
        let mut labels: Vec<Label> = idx.iter().map(|&i| convs[i].label).collect();
        labels.shuffle(&mut streams.rng("permute", &[key_hash(&moot)]));
        for (&i, l) in idx.iter().zip(labels) {
            convs[i].label = l;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EncodedArgument;

    fn conv(id: &str, label: Label, turn_words: &[&[usize]]) -> Conversation {
        Conversation {
            conv_id: id.into(),
            moot_id: "m".into(),
            label,
            turns: turn_words
                .iter()
                .map(|w| EncodedArgument {
                    bow: w.iter().map(|&i| (i, 1)).collect(),
                    seq: w.to_vec(),
                    len: w.len(),
                })
                .collect(),
        }
    }

    #[test]
    fn jaccard_cases() {
        assert_eq!(jaccard(&[1.0, 2.0], &[3.0, 1.0]), 1.0);
        assert_eq!(jaccard(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(jaccard(&[1.0, 1.0, 1.0, 0.0], &[0.0, 1.0, 1.0, 1.0]), 0.5);
        assert_eq!(jaccard(&[0.0; 3], &[0.0; 3]), 1.0);
    }

    #[test]
    fn cartesian_product() {
        let p: Vec<_> = (0..2)
            .map(|i| conv(&format!("p{i}"), Label::Winning, &[&[5], &[6]]))
            .collect();
        let n: Vec<_> = (0..3)
            .map(|i| conv(&format!("n{i}"), Label::Losing, &[&[5], &[6]]))
            .collect();
        assert_eq!(build_pairs(&p, &n, 0.5).len(), 6);
    }

    #[test]
    fn low_similarity_is_filtered() {
        // supports {1,2,3,4} and {3,4,5}: 2/5
        let p = conv("p", Label::Winning, &[&[1, 2], &[3, 4]]);
        let n = conv("n", Label::Losing, &[&[3, 4], &[5]]);
        assert!(
            (jaccard_support(&conversation_support(&p), &conversation_support(&n)) - 0.4).abs()
                < 1e-12
        );
        assert!(build_pairs(&[p], &[n], 0.5).is_empty());
    }

    #[test]
    fn long_negatives_are_truncated_and_short_ones_dropped() {
        let p = conv("p", Label::Winning, &[&[1], &[1], &[1]]);
        let long = conv("n", Label::Losing, &[&[1], &[1], &[1], &[2], &[2]]);
        let short = conv("s", Label::Losing, &[&[1], &[1]]);
        let pairs = build_pairs(&[p], &[long.clone(), short], 0.5);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].negative.turns, long.turns[..3].to_vec());
        assert_eq!(pairs[0].pair_id, "m::p::n");
    }
}
