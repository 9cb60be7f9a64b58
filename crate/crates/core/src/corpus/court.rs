use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::text::normalize_text;
use super::{Label, RawConversation};

/// One side of a court case: the utterances of one party, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourtRecord {
    pub case_id: String,
    pub side: String,
    pub winner_side: String,
    pub utterances: Vec<String>,
}

/// Each party's utterance stream becomes one conversation of its case,
/// labeled winning when the party is the case winner.
///
/// Records sharing a case and side are concatenated in input order. Empty
/// utterances are dropped, and streams with fewer than two turns vanish.
pub fn court_conversations(records: &[CourtRecord]) -> Vec<RawConversation> {
    let mut grouped: BTreeMap<(String, String), (String, Vec<&str>)> = BTreeMap::new();
    for r in records {
        let entry = grouped
            .entry((r.case_id.clone(), r.side.clone()))
            .or_insert_with(|| (r.winner_side.clone(), Vec::new()));
        entry.1.extend(r.utterances.iter().map(String::as_str));
    }
    let mut out = Vec::new();
    for ((case_id, side), (winner, utterances)) in grouped {
        let turns: Vec<Vec<String>> = utterances
            .iter()
            .map(|u| normalize_text(u))
            .filter(|t| !t.is_empty())
            .collect();
        if turns.len() < 2 {
            continue;
        }
        out.push(RawConversation {
            conv_id: format!("{case_id}/{side}"),
            moot_id: case_id,
            post_ids: (0..turns.len()).map(|i| format!("{side}-{i}")).collect(),
            turns,
            label: if side == winner {
                Label::Winning
            } else {
                Label::Losing
            },
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_sides_two_conversations() {
        let rec = |side: &str| CourtRecord {
            case_id: "c1".into(),
            side: side.into(),
            winner_side: "petitioner".into(),
            utterances: vec!["we argue this".into(), "and that".into()],
        };
        let convs = court_conversations(&[rec("respondent"), rec("petitioner")]);
        assert_eq!(convs.len(), 2);
        assert_eq!(convs[0].conv_id, "c1/petitioner");
        assert_eq!(convs[0].label, Label::Winning);
        assert_eq!(convs[1].label, Label::Losing);
    }
}
