//! Dual-annotator span aggregation, macro-label resolution, overall-score
//! adjudication and agreement statistics.

mod aggregate;
mod agreement;
mod resolve;
pub mod tokenize;

use serde::{Deserialize, Serialize};

use crate::corpus::Dialogue;
use crate::error::{Error, Result};
use crate::taxonomy::{MacroScores, Score, Taxonomy};

pub use aggregate::{aggregate_spans, premerge};
pub use agreement::{
    krippendorff_alpha, macro_agreement, micro_agreement, micro_agreement_per_feature,
    overall_agreement, pearson_r,
    AgreementLevel, AgreementReport,
};
pub use resolve::{
    adjudicate_overall, resolve_macro_annotations, resolve_macro_label, Adjudication,
    AdjudicationItem, ResolvedMacro,
};
pub use tokenize::{dialogue_tokens, tokenize, Token};

/// Reserved annotator id for aggregated gold spans.
pub const MERGED: &str = "merged";
/// Reserved annotator id for model output.
pub const PREDICTED: &str = "predicted";

/// One annotated occurrence of a micro-level feature. Offsets are Unicode
/// scalar values into the turn text, half-open.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureSpan {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub feature_id: String,
    pub start: usize,
    pub end: usize,
    pub annotator_id: String,
}

impl FeatureSpan {
    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn overlaps(&self, other: &FeatureSpan) -> bool {
        self.turn_index == other.turn_index && self.start < other.end && other.start < self.end
    }

    /// Checks offsets against the dialogue text and the feature id against
    /// the registry.
    pub fn validate(&self, dialogue: &Dialogue, taxonomy: &Taxonomy) -> Result<()> {
        taxonomy.resolve(&self.feature_id)?;
        self.validate_offsets(dialogue)
    }

    pub fn validate_offsets(&self, dialogue: &Dialogue) -> Result<()> {
        if self.dialogue_id != dialogue.dialogue_id {
            return Err(Error::Integrity(format!(
                "span for dialogue `{}` checked against `{}`",
                self.dialogue_id, dialogue.dialogue_id
            )));
        }
        let turn = dialogue.turn(self.turn_index).ok_or_else(|| {
            Error::Integrity(format!(
                "dialogue `{}` has no turn {}",
                self.dialogue_id, self.turn_index
            ))
        })?;
        if self.start >= self.end || self.end > turn.char_len() {
            return Err(Error::Integrity(format!(
                "span [{}, {}) outside turn {} of dialogue `{}` (length {})",
                self.start,
                self.end,
                self.turn_index,
                self.dialogue_id,
                turn.char_len()
            )));
        }
        Ok(())
    }

    /// The covered text.
    pub fn text(&self, dialogue: &Dialogue) -> Option<String> {
        let turn = dialogue.turn(self.turn_index)?;
        Some(
            turn.text
                .chars()
                .skip(self.start)
                .take(self.len())
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacroAnnotation {
    pub dialogue_id: String,
    pub annotator_id: String,
    pub scores: MacroScores,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverallAnnotation {
    pub dialogue_id: String,
    pub annotator_id: String,
    pub score: Score,
    pub justification: String,
}

impl OverallAnnotation {
    pub fn validate(&self) -> Result<()> {
        if self.justification.trim().is_empty() {
            return Err(Error::Integrity(format!(
                "overall annotation by `{}` for `{}` has no justification",
                self.annotator_id, self.dialogue_id
            )));
        }
        Ok(())
    }
}

/// Presence (1) or absence (0) of `feature_id`, as marked by `annotator_id`,
/// for every word token of the dialogue. A token counts as covered when a
/// span overlaps it by at least one character.
pub fn binarize_spans(
    dialogue: &Dialogue,
    spans: &[FeatureSpan],
    feature_id: &str,
    annotator_id: &str,
) -> Result<Vec<u8>> {
    let relevant: Vec<&FeatureSpan> = spans
        .iter()
        .filter(|s| {
            s.dialogue_id == dialogue.dialogue_id
                && s.feature_id == feature_id
                && s.annotator_id == annotator_id
        })
        .collect();
    for span in &relevant {
        span.validate_offsets(dialogue)?;
    }
    Ok(dialogue_tokens(dialogue)
        .iter()
        .map(|tok| {
            relevant.iter().any(|s| {
                s.turn_index == tok.turn_index && s.start < tok.end && tok.start < s.end
            }) as u8
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::dialogue;

    fn span(turn: usize, start: usize, end: usize) -> FeatureSpan {
        FeatureSpan {
            dialogue_id: "d1".into(),
            turn_index: turn,
            feature_id: "backchannel".into(),
            start,
            end,
            annotator_id: "a1".into(),
        }
    }

    #[test]
    fn no_spans_gives_all_zero() {
        let d = dialogue("d1", "c1", &["hello there", "嗯嗯 ok"]);
        let v = binarize_spans(&d, &[], "backchannel", "a1").unwrap();
        assert_eq!(v, vec![0, 0, 0, 0, 0]);
    }

    #[test]
    fn whole_dialogue_cover_gives_all_one() {
        let d = dialogue("d1", "c1", &["hello there", "嗯嗯 ok"]);
        let spans = vec![span(0, 0, 11), span(1, 0, 5)];
        let v = binarize_spans(&d, &spans, "backchannel", "a1").unwrap();
        assert_eq!(v, vec![1; 5]);
    }

    #[test]
    fn partial_token_overlap_counts() {
        let d = dialogue("d1", "c1", &["hello there", "ok"]);
        let v = binarize_spans(&d, &[span(0, 3, 4)], "backchannel", "a1").unwrap();
        assert_eq!(v, vec![1, 0, 0]);
    }

    #[test]
    fn other_features_and_annotators_are_ignored() {
        let d = dialogue("d1", "c1", &["hello there", "ok"]);
        let mut other = span(0, 0, 5);
        other.annotator_id = "a2".into();
        let mut wrong_feature = span(1, 0, 2);
        wrong_feature.feature_id = "reference_word".into();
        let v = binarize_spans(&d, &[other, wrong_feature], "backchannel", "a1").unwrap();
        assert_eq!(v, vec![0, 0, 0]);
    }

    #[test]
    fn out_of_range_offsets_are_integrity_errors() {
        let d = dialogue("d1", "c1", &["hello", "ok"]);
        assert!(matches!(
            binarize_spans(&d, &[span(0, 2, 9)], "backchannel", "a1"),
            Err(Error::Integrity(_))
        ));
        assert!(matches!(
            binarize_spans(&d, &[span(7, 0, 1)], "backchannel", "a1"),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn span_text_uses_scalar_offsets() {
        let d = dialogue("d1", "c1", &["我觉得, well", "ok"]);
        let s = span(0, 5, 9);
        assert_eq!(s.text(&d).unwrap(), "well");
    }

    #[test]
    fn overall_requires_justification() {
        let a = OverallAnnotation {
            dialogue_id: "d".into(),
            annotator_id: "x".into(),
            score: Score::new(3).unwrap(),
            justification: " ".into(),
        };
        assert!(a.validate().is_err());
    }
}
