use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ConversationPair;
use crate::rng::Streams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<ConversationPair>,
    pub validation: Vec<ConversationPair>,
    pub test: Vec<ConversationPair>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn part(&self, split: Split) -> &[ConversationPair] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, split: Split, pair: ConversationPair) {
        match split {
            Split::Train => self.train.push(pair),
            Split::Validation => self.validation.push(pair),
            Split::Test => self.test.push(pair),
        }
    }
}

/// Assign moots to splits: 20% test, then 20% of the remainder validation.
///
/// Returns `(train, validation, test)` moot sets; deterministic in `seed`.
pub fn split_moots<'a, I>(
    moot_ids: I,
    seed: u64,
) -> (BTreeSet<String>, BTreeSet<String>, BTreeSet<String>)
where
    I: IntoIterator<Item = &'a str>,
{
    let unique: BTreeSet<&str> = moot_ids.into_iter().collect();
    let mut ids: Vec<&str> = unique.into_iter().collect();
    ids.shuffle(&mut Streams::new(seed).rng("split", &[]));
    let n = ids.len();
    let n_test = (0.2 * n as f64).round() as usize;
    let pool = n - n_test;
    let n_val = (0.2 * pool as f64).round() as usize;
    if n > 0 && (n_test == 0 || n_val == 0) {
        log::warn!("only {n} moots: validation or test split is empty");
    }
    let own = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<BTreeSet<_>>();
    (
        own(&ids[n_test + n_val..]),
        own(&ids[n_test..n_test + n_val]),
        own(&ids[..n_test]),
    )
}

/// Split pairs by moot so no debate appears in more than one split.
pub fn split_dataset(pairs: Vec<ConversationPair>, seed: u64) -> DatasetSplit {
    let (_, val, test) = split_moots(pairs.iter().map(|p| p.moot_id.as_str()), seed);
    let mut out = DatasetSplit {
        seed,
        ..DatasetSplit::default()
    };
    for p in pairs {
        let split = if test.contains(&p.moot_id) {
            Split::Test
        } else if val.contains(&p.moot_id) {
            Split::Validation
        } else {
            Split::Train
        };
        out.push(split, p);
    }
    out
}
