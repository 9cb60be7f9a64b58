use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::Conversation;
use crate::error::{Error, Result};
use crate::model::Dtdmn;

/// Numerically stable logistic map.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Effect of one memory component on each prefix of a conversation: the
/// prefix is rescored with the memory weight masked to that component and
/// squashed to (0, 1). `component` indexes topics first, then discourse.
pub fn masked_factor_effect(
    model: &Dtdmn,
    conv: &Conversation,
    component: usize,
) -> Result<Vec<f64>> {
    (1..=conv.num_turns())
        .map(|t| model.masked_score(conv, component, t).map(logistic))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectRow {
    pub factor_id: String,
    /// Number of turns of the conversations in this bucket.
    pub turn_bucket: usize,
    pub mean_effect: f64,
    pub n: usize,
}

/// Mean whole-conversation effect of discourse factor `index`, grouped by
/// conversation length. Lengths with no conversations produce no row.
pub fn discourse_effect_over_turns(
    model: &Dtdmn,
    convs: &[Conversation],
    index: usize,
) -> Result<Vec<EffectRow>> {
    let cfg = &model.config;
    if index >= cfg.discourse {
        return Err(Error::dimension(
            "discourse index",
            format!("< {}", cfg.discourse),
            index,
        ));
    }
    let component = cfg.topics + index;
    let mut buckets: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for c in convs {
        let effect = logistic(model.masked_score(c, component, c.num_turns())?);
        let slot = buckets.entry(c.num_turns()).or_default();
        slot.0 += effect;
        slot.1 += 1;
    }
    Ok(buckets
        .into_iter()
        .map(|(turns, (sum, n))| EffectRow {
            factor_id: format!("discourse_{index}"),
            turn_bucket: turns,
            mean_effect: sum / n as f64,
            n,
        })
        .collect())
}

pub fn effect_csv(rows: &[EffectRow]) -> String {
    let mut out = String::from("factor_id,turn_bucket,mean_effect,n\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.6},{}",
            r.factor_id, r.turn_bucket, r.mean_effect, r.n
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_values() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logistic(2.0) - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
        assert!((logistic(-2.0) + logistic(2.0) - 1.0).abs() < 1e-15);
        let far = logistic(-800.0);
        assert!(far.is_finite() && far >= 0.0);
    }

    #[test]
    fn csv_layout() {
        let rows = [EffectRow {
            factor_id: "discourse_1".into(),
            turn_bucket: 3,
            mean_effect: 0.25,
            n: 4,
        }];
        assert_eq!(
            effect_csv(&rows),
            "factor_id,turn_bucket,mean_effect,n\ndiscourse_1,3,0.250000,4\n"
        );
    }
}
