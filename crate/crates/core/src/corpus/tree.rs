use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::text::{normalize_text, raw_word_count};
use super::{Label, RawConversation, RawPost};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlattenOptions {
    /// Replies with this many raw words or fewer are dropped.
    pub min_words: usize,
    /// Discussions with fewer distinct challengers are dropped.
    pub min_challengers: usize,
}

impl Default for FlattenOptions {
    fn default() -> Self {
        Self {
            min_words: 50,
            min_challengers: 10,
        }
    }
}

/// Flatten one debate tree into root-to-leaf argumentation processes.
///
/// The root is the original post; it and every other post by its author are
/// excluded from the turns. A path is winning when any of its posts carries a
/// delta. Output is sorted by `conv_id`.
pub fn flatten_tree(posts: &[RawPost], opts: FlattenOptions) -> Result<Vec<RawConversation>> {
    let Some(first) = posts.first() else {
        return Ok(Vec::new());
    };
    let moot_id = first.moot_id.clone();
    let by_id: HashMap<&str, &RawPost> = posts.iter().map(|p| (p.post_id.as_str(), p)).collect();
    if by_id.len() != posts.len() {
        return Err(Error::MalformedTree {
            moot_id,
            reason: "duplicate post ids".into(),
        });
    }
    let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut roots = Vec::new();
    for p in posts {
        match &p.parent_id {
            None => roots.push(p),
            Some(parent) => {
                if !by_id.contains_key(parent.as_str()) {
                    return Err(Error::OrphanPost {
                        moot_id,
                        post_id: p.post_id.clone(),
                        parent_id: parent.clone(),
                    });
                }
                children
                    .entry(parent.as_str())
                    .or_default()
                    .push(p.post_id.as_str());
            }
        }
    }
    if roots.len() != 1 {
        return Err(Error::MalformedTree {
            moot_id,
            reason: format!("expected exactly one root post, found {}", roots.len()),
        });
    }
    for list in children.values_mut() {
        list.sort_unstable();
    }
    let root = roots[0];
    let op_author = root.author.as_str();

    let challengers: BTreeSet<&str> = posts
        .iter()
        .filter(|p| p.parent_id.is_some() && p.author != op_author)
        .map(|p| p.author.as_str())
        .collect();
    let has_delta = posts.iter().any(|p| p.delta);
    if challengers.len() < opts.min_challengers || !has_delta {
        return Ok(Vec::new());
    }

    let mut out = Vec::new();
    // depth-first over (post, path-so-far); the root itself never becomes a turn
    let mut stack: Vec<(&str, Vec<&RawPost>)> = vec![(root.post_id.as_str(), Vec::new())];
    let mut visited = 0usize;
    while let Some((id, path)) = stack.pop() {
        visited += 1;
        if visited > posts.len() {
            return Err(Error::MalformedTree {
                moot_id,
                reason: "cycle in parent links".into(),
            });
        }
        match children.get(id) {
            Some(kids) => {
                for kid in kids.iter().rev() {
                    let mut next = path.clone();
                    next.push(by_id[kid]);
                    stack.push((kid, next));
                }
            }
            None => {
                let label = if path.iter().any(|p| p.delta) {
                    Label::Winning
                } else {
                    Label::Losing
                };
                let kept: Vec<&RawPost> = path
                    .iter()
                    .copied()
                    .filter(|p| p.author != op_author && raw_word_count(&p.body) > opts.min_words)
                    .collect();
                if kept.len() < 2 {
                    continue;
                }
                out.push(RawConversation {
                    conv_id: format!("{}/{}", moot_id, id),
                    moot_id: moot_id.clone(),
                    post_ids: kept.iter().map(|p| p.post_id.clone()).collect(),
                    turns: kept.iter().map(|p| normalize_text(&p.body)).collect(),
                    label,
                });
            }
        }
    }
    out.sort_by(|a, b| a.conv_id.cmp(&b.conv_id));
    Ok(out)
}

/// Group posts by `moot_id` and flatten each tree; output sorted by `conv_id`.
pub fn flatten_forest(posts: &[RawPost], opts: FlattenOptions) -> Result<Vec<RawConversation>> {
    let mut moots: BTreeMap<&str, Vec<RawPost>> = BTreeMap::new();
    for p in posts {
        moots.entry(p.moot_id.as_str()).or_default().push(p.clone());
    }
    let mut out = Vec::new();
    for tree in moots.values() {
        out.extend(flatten_tree(tree, opts)?);
    }
    out.sort_by(|a, b| a.conv_id.cmp(&b.conv_id));
    Ok(out)
}
