use std::collections::{BTreeMap, BTreeSet};

use super::{FeatureSpan, MERGED};
use crate::error::{Error, Result};
use crate::taxonomy::{Taxonomy, Tier};

type Interval = (usize, usize);
type GroupKey = (usize, String);

/// Unions overlapping same-feature spans within each turn. Adjacent spans
/// (`end == start`) do not overlap and stay separate. Output is sorted by
/// `(turn_index, feature_id, start)`.
pub fn premerge(spans: &[FeatureSpan]) -> Vec<FeatureSpan> {
    let mut groups: BTreeMap<(String, GroupKey, String), Vec<Interval>> = BTreeMap::new();
    for s in spans {
        groups
            .entry((
                s.dialogue_id.clone(),
                (s.turn_index, s.feature_id.clone()),
                s.annotator_id.clone(),
            ))
            .or_default()
            .push((s.start, s.end));
    }
    let mut out = Vec::with_capacity(spans.len());
    for ((dialogue_id, (turn_index, feature_id), annotator_id), intervals) in groups {
        for (start, end) in union_intervals(intervals) {
            out.push(FeatureSpan {
                dialogue_id: dialogue_id.clone(),
                turn_index,
                feature_id: feature_id.clone(),
                start,
                end,
                annotator_id: annotator_id.clone(),
            });
        }
    }
    out
}

fn union_intervals(mut intervals: Vec<Interval>) -> Vec<Interval> {
    intervals.sort_unstable();
    let mut out: Vec<Interval> = Vec::with_capacity(intervals.len());
    for (s, e) in intervals {
        match out.last_mut() {
            Some(last) if s < last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

fn overlaps(a: Interval, b: Interval) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// Preference order for a tier: token-level prefers the shorter span,
/// utterance-level the longer; position breaks ties.
fn preference_key(iv: Interval, tier: Tier) -> (i64, usize, usize) {
    let len = (iv.1 - iv.0) as i64;
    match tier {
        Tier::TokenLevel => (len, iv.0, iv.1),
        Tier::UtteranceLevel => (-len, iv.0, iv.1),
    }
}

fn choose(a: Interval, b: Interval, tier: Tier) -> Interval {
    if preference_key(a, tier) <= preference_key(b, tier) {
        a
    } else {
        b
    }
}

/// Pairs the two annotators' (pre-merged, sorted, disjoint) intervals
/// greedily by ascending start. An overlapping pair contributes the span
/// preferred by the tier; unpaired spans pass through.
fn pair_walk(a: &[Interval], b: &[Interval], tier: Tier) -> Vec<Interval> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len() + b.len());
    while i < a.len() && j < b.len() {
        if overlaps(a[i], b[j]) {
            out.push(choose(a[i], b[j], tier));
            i += 1;
            j += 1;
        } else if a[i].0 < b[j].0 {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// A pass-through span can still overlap a span chosen from a different
/// pair. Keep a non-overlapping subset, picking by tier preference.
fn drop_overlaps(mut candidates: Vec<Interval>, tier: Tier) -> Vec<Interval> {
    candidates.sort_by_key(|&iv| preference_key(iv, tier));
    let mut kept: Vec<Interval> = Vec::with_capacity(candidates.len());
    for iv in candidates {
        if !kept.iter().any(|&k| overlaps(k, iv)) {
            kept.push(iv);
        }
    }
    kept
}

fn grouped(spans: &[FeatureSpan]) -> BTreeMap<GroupKey, Vec<Interval>> {
    let mut groups: BTreeMap<GroupKey, Vec<Interval>> = BTreeMap::new();
    for s in spans {
        groups
            .entry((s.turn_index, s.feature_id.clone()))
            .or_default()
            .push((s.start, s.end));
    }
    groups
        .into_iter()
        .map(|(k, v)| (k, union_intervals(v)))
        .collect()
}

/// Merges two annotators' spans for one dialogue. For every turn and
/// feature, overlapping spans resolve to the shorter one for token-level
/// features and the longer one for utterance-level features; spans without
/// a counterpart pass through. Output carries annotator id `merged`, sorted
/// by `(turn_index, start, feature_id)`.
pub fn aggregate_spans(
    a1: &[FeatureSpan],
    a2: &[FeatureSpan],
    taxonomy: &Taxonomy,
) -> Result<Vec<FeatureSpan>> {
    let dialogue_ids: BTreeSet<&str> = a1
        .iter()
        .chain(a2)
        .map(|s| s.dialogue_id.as_str())
        .collect();
    if dialogue_ids.len() > 1 {
        return Err(Error::Integrity(format!(
            "spans from different dialogues cannot be aggregated: {dialogue_ids:?}"
        )));
    }
    let Some(dialogue_id) = dialogue_ids.into_iter().next() else {
        return Ok(Vec::new());
    };
    for s in a1.iter().chain(a2) {
        taxonomy.resolve(&s.feature_id)?;
        if s.start >= s.end {
            return Err(Error::Integrity(format!(
                "empty span [{}, {}) in dialogue `{dialogue_id}`",
                s.start, s.end
            )));
        }
    }

    let left = grouped(a1);
    let right = grouped(a2);
    let keys: BTreeSet<&GroupKey> = left.keys().chain(right.keys()).collect();
    let empty = Vec::new();

    let mut out = Vec::new();
    for key in keys {
        let tier = taxonomy.tier(&key.1)?;
        let a = left.get(key).unwrap_or(&empty);
        let b = right.get(key).unwrap_or(&empty);
        for (start, end) in drop_overlaps(pair_walk(a, b, tier), tier) {
            out.push(FeatureSpan {
                dialogue_id: dialogue_id.to_string(),
                turn_index: key.0,
                feature_id: key.1.clone(),
                start,
                end,
                annotator_id: MERGED.to_string(),
            });
        }
    }
    out.sort_by(|x, y| {
        (x.turn_index, x.start, &x.feature_id, x.end).cmp(&(
            y.turn_index,
            y.start,
            &y.feature_id,
            y.end,
        ))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(ann: &str, turn: usize, feature: &str, start: usize, end: usize) -> FeatureSpan {
        FeatureSpan {
            dialogue_id: "d1".into(),
            turn_index: turn,
            feature_id: feature.into(),
            start,
            end,
            annotator_id: ann.into(),
        }
    }

    fn ranges(spans: &[FeatureSpan]) -> Vec<(usize, usize, usize)> {
        spans.iter().map(|s| (s.turn_index, s.start, s.end)).collect()
    }

    #[test]
    fn token_level_takes_shorter() {
        let tax = Taxonomy::builtin();
        let m = aggregate_spans(
            &[sp("a", 0, "reference_word", 3, 6)],
            &[sp("b", 0, "reference_word", 3, 8)],
            &tax,
        )
        .unwrap();
        assert_eq!(ranges(&m), vec![(0, 3, 6)]);
        assert_eq!(m[0].annotator_id, MERGED);
    }

    #[test]
    fn utterance_level_takes_longer() {
        let tax = Taxonomy::builtin();
        let m = aggregate_spans(
            &[sp("a", 1, "formulaic_response", 0, 10)],
            &[sp("b", 1, "formulaic_response", 0, 14)],
            &tax,
        )
        .unwrap();
        assert_eq!(ranges(&m), vec![(1, 0, 14)]);
    }

    #[test]
    fn disjoint_turns_pass_through() {
        let tax = Taxonomy::builtin();
        let m = aggregate_spans(
            &[sp("a", 2, "backchannel", 0, 2)],
            &[sp("b", 4, "backchannel", 1, 3)],
            &tax,
        )
        .unwrap();
        assert_eq!(ranges(&m), vec![(2, 0, 2), (4, 1, 3)]);
    }

    #[test]
    fn mixed_dialogues_rejected() {
        let tax = Taxonomy::builtin();
        let mut other = sp("b", 0, "backchannel", 0, 1);
        other.dialogue_id = "d2".into();
        assert!(matches!(
            aggregate_spans(&[sp("a", 0, "backchannel", 0, 1)], &[other], &tax),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn unknown_feature_rejected() {
        let tax = Taxonomy::builtin();
        assert!(matches!(
            aggregate_spans(&[sp("a", 0, "nonsense", 0, 1)], &[], &tax),
            Err(Error::UnknownFeature(_))
        ));
    }

    #[test]
    fn premerge_unions_within_annotator() {
        let merged = premerge(&[
            sp("a", 0, "backchannel", 0, 3),
            sp("a", 0, "backchannel", 2, 5),
            sp("a", 0, "backchannel", 5, 6),
        ]);
        assert_eq!(ranges(&merged), vec![(0, 0, 5), (0, 5, 6)]);
    }

    #[test]
    fn passthrough_overlapping_a_chosen_span_is_dropped() {
        let tax = Taxonomy::builtin();
        // a0 pairs with b0 -> shorter [3,6); a1 [5,9) would overlap it.
        let m = aggregate_spans(
            &[sp("a", 0, "reference_word", 0, 4), sp("a", 0, "reference_word", 5, 9)],
            &[sp("b", 0, "reference_word", 3, 6)],
            &tax,
        )
        .unwrap();
        assert_eq!(ranges(&m), vec![(0, 3, 6)]);
    }
}
