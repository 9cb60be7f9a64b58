//! Corpus construction: normalization, vocabulary, debate-tree flattening,
//! pair building with the Jaccard and turn-count filters, and splits.

mod court;
mod io;
mod pairs;
mod pipeline;
mod split;
mod text;
mod tree;
mod vocab;

use std::rc::Rc;

use serde::{Deserialize, Serialize};

pub use court::{court_conversations, CourtRecord};
pub use io::{parse_jsonl, read_jsonl, read_pairs, write_pairs, CorpusStats, PairRecord};
pub use pairs::{build_pairs, conversation_support, jaccard, jaccard_support, permute_labels};
pub use pipeline::{
    build_corpus, CorpusArtifacts, CorpusInput, CorpusOptions, PAIRS_FILE, STATS_FILE, VOCAB_FILE,
};
pub use split::{split_dataset, split_moots, DatasetSplit, Split};
pub use text::{normalize_text, raw_word_count, DIGIT_TAG, QUOTE_TAG, URL_TAG};
pub use tree::{flatten_forest, flatten_tree, FlattenOptions};
pub use vocab::{build_vocabulary, Vocabulary, PAD, RESERVED, UNK};

/// One post of a debate tree as read from the JSON Lines input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPost {
    pub post_id: String,
    pub parent_id: Option<String>,
    pub moot_id: String,
    pub author: String,
    pub body: String,
    #[serde(default)]
    pub delta: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Winning,
    Losing,
}

/// An argumentation process before encoding: normalized tokens per turn.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConversation {
    pub conv_id: String,
    pub moot_id: String,
    pub post_ids: Vec<String>,
    pub turns: Vec<Vec<String>>,
    pub label: Label,
}

/// One turn as counts over the vocabulary plus a padded index sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedArgument {
    /// Sparse counts `(index, count)`, sorted by index, over the full turn.
    pub bow: Vec<(usize, u32)>,
    /// Token indices truncated to `max_len` and padded with [`PAD`].
    pub seq: Vec<usize>,
    /// Number of unpadded positions in `seq`.
    pub len: usize,
}

impl EncodedArgument {
    pub fn tokens(&self) -> &[usize] {
        &self.seq[..self.len]
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.seq.len()).map(|i| i < self.len).collect()
    }

    pub fn dense_bow(&self, vocab_size: usize) -> Vec<f64> {
        let mut v = vec![0.0; vocab_size];
        for &(i, c) in &self.bow {
            v[i] = f64::from(c);
        }
        v
    }

    pub fn sparse_bow(&self) -> Rc<[(usize, f64)]> {
        self.bow.iter().map(|&(i, c)| (i, f64::from(c))).collect()
    }

    pub fn total_count(&self) -> u32 {
        self.bow.iter().map(|(_, c)| c).sum()
    }
}

/// Count tokens over the whole turn, then truncate and pad the sequence.
pub fn encode_argument(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> EncodedArgument {
    let indices: Vec<usize> = tokens.iter().map(|t| vocab.lookup(t)).collect();
    let mut counts = std::collections::BTreeMap::new();
    for &i in &indices {
        *counts.entry(i).or_insert(0u32) += 1;
    }
    let len = indices.len().min(max_len);
    let mut seq = indices[..len].to_vec();
    seq.resize(max_len, PAD);
    EncodedArgument {
        bow: counts.into_iter().collect(),
        seq,
        len,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub conv_id: String,
    pub moot_id: String,
    pub label: Label,
    pub turns: Vec<EncodedArgument>,
}

impl Conversation {
    pub fn num_turns(&self) -> usize {
        self.turns.len()
    }

    /// Cache key that distinguishes a truncated copy from its original.
    pub fn key(&self) -> String {
        format!("{}#{}", self.conv_id, self.turns.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationPair {
    pub pair_id: String,
    pub moot_id: String,
    #[serde(rename = "positive_conv")]
    pub positive: Conversation,
    #[serde(rename = "negative_conv")]
    pub negative: Conversation,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_counts_and_truncates() {
        let vocab = build_vocabulary(&[vec!["cat".to_string(); 3]], 1);
        let cat = vocab.get("cat").unwrap();
        let url = vocab.get(URL_TAG).unwrap();
        let toks: Vec<String> = ["cat", "cat", "<url>", "zebra"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let enc = encode_argument(&toks, &vocab, 3);
        let dense = enc.dense_bow(vocab.len());
        assert_eq!(dense[cat], 2.0);
        assert_eq!(dense[url], 1.0);
        assert_eq!(dense[UNK], 1.0);
        assert_eq!(enc.seq, vec![cat, cat, url]);

        let long: Vec<String> = (0..200).map(|_| "cat".to_string()).collect();
        let enc = encode_argument(&long, &vocab, 150);
        assert_eq!(enc.len, 150);
        assert_eq!(enc.total_count(), 200);
        let short = encode_argument(&toks[..1], &vocab, 4);
        assert_eq!(short.seq, vec![cat, PAD, PAD, PAD]);
        assert_eq!(short.mask(), vec![true, false, false, false]);
    }
}
