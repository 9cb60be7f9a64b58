use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::text::{DIGIT_TAG, QUOTE_TAG, URL_TAG};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Tokens that always hold the first indices, in order.
pub const RESERVED: [&str; 5] = [PAD_TOKEN, UNK_TOKEN, QUOTE_TAG, DIGIT_TAG, URL_TAG];

/// Dense token index `[0, V)`: the reserved block first, then tokens by
/// descending count with lexicographic tie-break.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or the unknown symbol.
    pub fn lookup(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; the line number is the index.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_lines(text: &str) -> Self {
        Self::from(text.lines().map(str::to_string).collect::<Vec<_>>())
    }
}

/// Count tokens and keep those seen at least `min_count` times.
pub fn build_vocabulary<'a, I, T>(token_lists: I, min_count: usize) -> Vocabulary
where
    I: IntoIterator<Item = &'a T>,
    T: AsRef<[String]> + 'a + ?Sized,
{
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for list in token_lists {
        for tok in list.as_ref() {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_count && !RESERVED.contains(t))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    tokens.extend(kept.into_iter().map(|(t, _)| t.to_string()));
    Vocabulary::from(tokens)
}
