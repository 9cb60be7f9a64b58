use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Conversation, ConversationPair, DatasetSplit, Split};
use crate::error::{Error, Result};

/// Parse JSON Lines text; blank lines are skipped, errors carry line numbers.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str, source: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: source.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path)?;
    parse_jsonl(&text, &path.display().to_string())
}

/// One line of the pairs file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub moot_id: String,
    pub split: Split,
    pub positive_conv: Conversation,
    pub negative_conv: Conversation,
}

pub fn write_pairs(path: &Path, data: &DatasetSplit) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for split in [Split::Train, Split::Validation, Split::Test] {
        for p in data.part(split) {
            let rec = PairRecord {
                pair_id: p.pair_id.clone(),
                moot_id: p.moot_id.clone(),
                split,
                positive_conv: p.positive.clone(),
                negative_conv: p.negative.clone(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs(path: &Path, seed: u64) -> Result<DatasetSplit> {
    let records: Vec<PairRecord> = read_jsonl(path)?;
    let mut out = DatasetSplit {
        seed,
        ..DatasetSplit::default()
    };
    for r in records {
        out.push(
            r.split,
            ConversationPair {
                pair_id: r.pair_id,
                moot_id: r.moot_id,
                positive: r.positive_conv,
                negative: r.negative_conv,
            },
        );
    }
    Ok(out)
}

/// Corpus size report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub moots: usize,
    pub convs: usize,
    pub turns: usize,
    pub avg_words_per_turn: f64,
    pub vocab_size: usize,
    pub pairs: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::RawPost;

    #[test]
    fn parse_error_names_the_line() {
        let text = "{\"post_id\":\"a\",\"parent_id\":null,\"moot_id\":\"m\",\"author\":\"x\",\"body\":\"\"}\n\n{oops\n";
        let err = parse_jsonl::<RawPost>(text, "in.jsonl").unwrap_err();
        assert!(err.to_string().starts_with("in.jsonl:3:"), "{err}");
    }
}
