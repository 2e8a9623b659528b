use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{MacroAnnotation, OverallAnnotation, MERGED};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::taxonomy::{Aspect, MacroScores, Score};

/// Resolves one aspect label for a segment annotated by two annotators.
///
/// Agreement wins outright. Otherwise the label is the mode of
/// `conversation_pool`, the scores from every segment of the parent
/// conversation by both annotators. Tied modes go to the one closest to the
/// pool mean, then to the lower score.
pub fn resolve_macro_label(segment: [Score; 2], conversation_pool: &[Score]) -> Result<Score> {
    if conversation_pool.is_empty() {
        return Err(Error::Integrity(
            "empty conversation pool for macro-label resolution".into(),
        ));
    }
    if segment[0] == segment[1] {
        return Ok(segment[0]);
    }
    Ok(pool_mode(conversation_pool))
}

fn pool_mode(pool: &[Score]) -> Score {
    let mut counts = [0usize; 6];
    for s in pool {
        counts[s.get() as usize] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    let n = pool.len() as i64;
    let sum: i64 = pool.iter().map(|s| s.get() as i64).sum();
    // |c - sum/n| compared exactly as |c*n - sum|.
    Score::all()
        .filter(|s| counts[s.get() as usize] == best)
        .min_by_key(|s| ((s.get() as i64) * n - sum).abs())
        .expect("non-empty pool has a mode")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedMacro {
    pub dialogue_id: String,
    pub scores: MacroScores,
    /// Aspects where the annotators disagreed and the conversation mode was used.
    pub pooled: Vec<Aspect>,
}

impl ResolvedMacro {
    pub fn to_annotation(&self) -> MacroAnnotation {
        MacroAnnotation {
            dialogue_id: self.dialogue_id.clone(),
            annotator_id: MERGED.to_string(),
            scores: self.scores,
        }
    }
}

pub(super) fn pair_by_dialogue<'a, T>(
    items: &'a [T],
    dialogue_id: impl Fn(&T) -> &str,
    annotator_id: impl Fn(&T) -> &str,
) -> Result<BTreeMap<&'a str, [&'a T; 2]>> {
    let mut grouped: BTreeMap<&str, Vec<&T>> = BTreeMap::new();
    for item in items {
        grouped.entry(dialogue_id(item)).or_default().push(item);
    }
    let mut out = BTreeMap::new();
    for (id, mut group) in grouped {
        if group.len() != 2 {
            return Err(Error::Integrity(format!(
                "dialogue `{id}` has {} annotation(s); exactly two are required",
                group.len()
            )));
        }
        group.sort_by(|a, b| annotator_id(a).cmp(annotator_id(b)));
        if annotator_id(group[0]) == annotator_id(group[1]) {
            return Err(Error::Integrity(format!(
                "dialogue `{id}` is annotated twice by `{}`",
                annotator_id(group[0])
            )));
        }
        out.insert(id, [group[0], group[1]]);
    }
    Ok(out)
}

/// Resolves all macro labels, pooling disagreements per conversation.
/// Output follows corpus order and covers every annotated dialogue.
pub fn resolve_macro_annotations(
    corpus: &Corpus,
    annotations: &[MacroAnnotation],
) -> Result<Vec<ResolvedMacro>> {
    let pairs = pair_by_dialogue(annotations, |a| &a.dialogue_id, |a| &a.annotator_id)?;

    let mut pools: HashMap<(&str, Aspect), Vec<Score>> = HashMap::new();
    for (id, pair) in &pairs {
        let dialogue = corpus.get(id).ok_or_else(|| {
            Error::Integrity(format!("macro annotation for unknown dialogue `{id}`"))
        })?;
        for ann in pair {
            for aspect in Aspect::ALL {
                pools
                    .entry((dialogue.conversation_id.as_str(), aspect))
                    .or_default()
                    .push(ann.scores.get(aspect));
            }
        }
    }

    let mut out = Vec::with_capacity(pairs.len());
    for dialogue in corpus {
        let Some([a, b]) = pairs.get(dialogue.dialogue_id.as_str()) else {
            continue;
        };
        let mut scores = a.scores;
        let mut pooled = Vec::new();
        for aspect in Aspect::ALL {
            let pool = &pools[&(dialogue.conversation_id.as_str(), aspect)];
            let seg = [a.scores.get(aspect), b.scores.get(aspect)];
            scores.set(aspect, resolve_macro_label(seg, pool)?);
            if seg[0] != seg[1] {
                pooled.push(aspect);
            }
        }
        out.push(ResolvedMacro {
            dialogue_id: dialogue.dialogue_id.clone(),
            scores,
            pooled,
        });
    }
    Ok(out)
}

/// A dialogue whose two overall scores disagree; resolution is manual.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjudicationItem {
    pub dialogue_id: String,
    pub annotations: Vec<OverallAnnotation>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Adjudication {
    /// Agreed overall scores, annotator id `merged`.
    pub agreed: Vec<OverallAnnotation>,
    pub queue: Vec<AdjudicationItem>,
}

/// Splits overall-score annotations into agreed gold labels and a queue of
/// disagreements carrying both scores and justifications.
pub fn adjudicate_overall(annotations: &[OverallAnnotation]) -> Result<Adjudication> {
    for a in annotations {
        a.validate()?;
    }
    let pairs = pair_by_dialogue(annotations, |a| &a.dialogue_id, |a| &a.annotator_id)?;
    let mut result = Adjudication::default();
    for (id, [a, b]) in pairs {
        if a.score == b.score {
            result.agreed.push(OverallAnnotation {
                dialogue_id: id.to_string(),
                annotator_id: MERGED.to_string(),
                score: a.score,
                justification: format!(
                    "{}: {} | {}: {}",
                    a.annotator_id, a.justification, b.annotator_id, b.justification
                ),
            });
        } else {
            result.queue.push(AdjudicationItem {
                dialogue_id: id.to_string(),
                annotations: vec![a.clone(), b.clone()],
            });
        }
    }
    Ok(result)
}
