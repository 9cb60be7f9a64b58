use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::court::{court_conversations, CourtRecord};
use super::io::{write_pairs, CorpusStats};
use super::pairs::{build_pairs, permute_labels};
use super::split::{split_moots, DatasetSplit, Split};
use super::tree::{flatten_forest, FlattenOptions};
use super::vocab::{build_vocabulary, Vocabulary};
use super::{encode_argument, Conversation, Label, RawConversation, RawPost};
use crate::error::Result;

#[derive(Debug, Clone)]
pub enum CorpusInput {
    Cmv(Vec<RawPost>),
    Court(Vec<CourtRecord>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusOptions {
    pub min_count: usize,
    pub max_len: usize,
    pub jaccard: f64,
    pub seed: u64,
    pub flatten: FlattenOptions,
    /// Shuffle win/lose labels within each moot before pairing.
    pub permute_labels: bool,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            min_count: 10,
            max_len: 150,
            jaccard: 0.5,
            seed: 42,
            flatten: FlattenOptions::default(),
            permute_labels: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusArtifacts {
    pub vocab: Vocabulary,
    pub data: DatasetSplit,
    pub stats: CorpusStats,
    /// Every encoded conversation, sorted by `conv_id`, before pairing.
    pub conversations: Vec<Conversation>,
}

pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const STATS_FILE: &str = "stats.json";

impl CorpusArtifacts {
    /// Write the pairs, vocabulary and stats files; returns their paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let pairs = dir.join(PAIRS_FILE);
        write_pairs(&pairs, &self.data)?;
        let vocab = dir.join(VOCAB_FILE);
        fs::write(&vocab, self.vocab.to_lines())?;
        let stats = dir.join(STATS_FILE);
        fs::write(&stats, serde_json::to_string_pretty(&self.stats)? + "\n")?;
        Ok(vec![pairs, vocab, stats])
    }
}

/// Flatten, split by moot, build the vocabulary from training moots only,
/// encode every turn and pair conversations within each moot.
pub fn build_corpus(input: &CorpusInput, opts: &CorpusOptions) -> Result<CorpusArtifacts> {
    let mut raw: Vec<RawConversation> = match input {
        CorpusInput::Cmv(posts) => flatten_forest(posts, opts.flatten)?,
        CorpusInput::Court(records) => court_conversations(records),
    };
    if raw.is_empty() {
        log::warn!("input produced no conversations");
    }
    if opts.permute_labels {
        permute_labels(&mut raw, opts.seed);
    }

    let (train_moots, val_moots, test_moots) =
        split_moots(raw.iter().map(|c| c.moot_id.as_str()), opts.seed);
    let vocab = build_vocabulary(
        raw.iter()
            .filter(|c| train_moots.contains(&c.moot_id))
            .flat_map(|c| c.turns.iter()),
        opts.min_count,
    );

    let conversations: Vec<Conversation> = raw
        .iter()
        .map(|c| Conversation {
            conv_id: c.conv_id.clone(),
            moot_id: c.moot_id.clone(),
            label: c.label,
            turns: c
                .turns
                .iter()
                .map(|t| encode_argument(t, &vocab, opts.max_len))
                .collect(),
        })
        .collect();

    let mut by_moot: BTreeMap<&str, (Vec<Conversation>, Vec<Conversation>)> = BTreeMap::new();
    for c in &conversations {
        let entry = by_moot.entry(c.moot_id.as_str()).or_default();
        match c.label {
            Label::Winning => entry.0.push(c.clone()),
            Label::Losing => entry.1.push(c.clone()),
        }
    }
    let mut data = DatasetSplit {
        seed: opts.seed,
        ..DatasetSplit::default()
    };
    for (moot, (pos, neg)) in &by_moot {
        let split = if test_moots.contains(*moot) {
            Split::Test
        } else if val_moots.contains(*moot) {
            Split::Validation
        } else {
            Split::Train
        };
        for pair in build_pairs(pos, neg, opts.jaccard) {
            data.push(split, pair);
        }
    }

    let turns: usize = raw.iter().map(|c| c.turns.len()).sum();
    let words: usize = raw.iter().flat_map(|c| c.turns.iter()).map(Vec::len).sum();
    let stats = CorpusStats {
        moots: by_moot.len(),
        convs: raw.len(),
        turns,
        avg_words_per_turn: if turns == 0 {
            0.0
        } else {
            words as f64 / turns as f64
        },
        vocab_size: vocab.len(),
        pairs: data.len(),
    };
    Ok(CorpusArtifacts {
        vocab,
        data,
        stats,
        conversations,
    })
}
