use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::resolve::pair_by_dialogue;
use super::{binarize_spans, FeatureSpan, MacroAnnotation, OverallAnnotation};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::taxonomy::{Aspect, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementLevel {
    Micro,
    Macro,
    Overall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub alpha: f64,
    pub pearson_r: f64,
    pub n_units: usize,
    pub level: AgreementLevel,
}

impl AgreementReport {
    fn compute(u1: &[f64], u2: &[f64], level: AgreementLevel) -> Result<Self> {
        let c1: Vec<u64> = u1.iter().map(|&v| v as u64).collect();
        let c2: Vec<u64> = u2.iter().map(|&v| v as u64).collect();
        Ok(Self {
            alpha: krippendorff_alpha(&c1, &c2)?,
            pearson_r: pearson_r(u1, u2)?,
            n_units: u1.len(),
            level,
        })
    }
}

fn check_pair_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Domain(format!("length mismatch: {a} vs {b}")));
    }
    if a < 2 {
        return Err(Error::Domain(format!(
            "at least 2 units are required, got {a}"
        )));
    }
    Ok(())
}

/// Krippendorff's alpha for two coders, complete data, nominal distance.
///
/// With `n = 2N` pairable values, `d` disagreeing units and value
/// frequencies `n_c`, the coincidence-matrix form reduces to
/// `alpha = 1 - (n - 1) * 2d / (n^2 - sum n_c^2)`.
pub fn krippendorff_alpha<T: Ord>(u1: &[T], u2: &[T]) -> Result<f64> {
    check_pair_lengths(u1.len(), u2.len())?;
    let mut freq: BTreeMap<&T, u64> = BTreeMap::new();
    let mut disagreements = 0u64;
    for (a, b) in u1.iter().zip(u2) {
        *freq.entry(a).or_default() += 1;
        *freq.entry(b).or_default() += 1;
        if a != b {
            disagreements += 1;
        }
    }
    let n = 2 * u1.len() as u64;
    let sum_sq: u64 = freq.values().map(|c| c * c).sum();
    let expected = n * n - sum_sq;
    if expected == 0 {
        return Err(Error::Degenerate(
            "all values identical; expected disagreement is zero".into(),
        ));
    }
    if disagreements == 0 {
        return Ok(1.0);
    }
    Ok(1.0 - ((n - 1) * 2 * disagreements) as f64 / expected as f64)
}

/// Pearson product-moment correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair_lengths(x.len(), y.len())?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate(
            "zero variance; correlation undefined".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Annotators seen in one dialogue's spans, sorted. An annotator who marked
/// nothing does not appear and later contributes an all-zero vector.
fn coder_ids<'a>(spans: &'a [FeatureSpan], dialogue_id: &str) -> Result<Vec<&'a str>> {
    let ids: BTreeSet<&str> = spans
        .iter()
        .filter(|s| s.dialogue_id == dialogue_id)
        .map(|s| s.annotator_id.as_str())
        .collect();
    if ids.len() > 2 {
        return Err(Error::Integrity(format!(
            "dialogue `{dialogue_id}` has spans from {} annotators; at most two are supported",
            ids.len()
        )));
    }
    Ok(ids.into_iter().collect())
}

fn micro_vectors(
    corpus: &Corpus,
    spans: &[FeatureSpan],
    features: &[String],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut by_dialogue: BTreeMap<&str, Vec<FeatureSpan>> = BTreeMap::new();
    for s in spans {
        if corpus.get(&s.dialogue_id).is_none() {
            return Err(Error::Integrity(format!(
                "span for unknown dialogue `{}`",
                s.dialogue_id
            )));
        }
        by_dialogue.entry(&s.dialogue_id).or_default().push(s.clone());
    }
    let (mut u1, mut u2) = (Vec::new(), Vec::new());
    let none = Vec::new();
    for dialogue in corpus {
        let own = by_dialogue.get(dialogue.dialogue_id.as_str()).unwrap_or(&none);
        let coders = coder_ids(own, &dialogue.dialogue_id)?;
        for feature in features {
            let mut vecs = coders
                .iter()
                .map(|c| binarize_spans(dialogue, own, feature, c))
                .collect::<Result<Vec<_>>>()?;
            let len = super::dialogue_tokens(dialogue).len();
            vecs.resize(2, vec![0; len]);
            u1.extend(vecs[0].iter().map(|&v| v as f64));
            u2.extend(vecs[1].iter().map(|&v| v as f64));
        }
    }
    Ok((u1, u2))
}

/// Micro-level agreement pooled over every word token, feature and
/// dialogue of the corpus. Dialogues without spans count as unmarked by
/// both annotators.
pub fn micro_agreement(
    corpus: &Corpus,
    spans: &[FeatureSpan],
    taxonomy: &Taxonomy,
) -> Result<AgreementReport> {
    for s in spans {
        taxonomy.resolve(&s.feature_id)?;
    }
    let (u1, u2) = micro_vectors(corpus, spans, &taxonomy.feature_ids())?;
    AgreementReport::compute(&u1, &u2, AgreementLevel::Micro)
}

/// Per-feature micro agreement; `None` where the statistic is undefined
/// (for example a feature neither annotator ever marked).
pub fn micro_agreement_per_feature(
    corpus: &Corpus,
    spans: &[FeatureSpan],
    taxonomy: &Taxonomy,
) -> Result<Vec<(String, Option<AgreementReport>)>> {
    taxonomy
        .feature_ids()
        .into_iter()
        .map(|f| {
            let (u1, u2) = micro_vectors(corpus, spans, std::slice::from_ref(&f))?;
            Ok((f, AgreementReport::compute(&u1, &u2, AgreementLevel::Micro).ok()))
        })
        .collect()
}

/// Macro-level agreement; units are (dialogue, aspect) pairs.
pub fn macro_agreement(annotations: &[MacroAnnotation]) -> Result<AgreementReport> {
    let pairs = pair_by_dialogue(annotations, |a| &a.dialogue_id, |a| &a.annotator_id)?;
    let (mut u1, mut u2) = (Vec::new(), Vec::new());
    for [a, b] in pairs.values() {
        for aspect in Aspect::ALL {
            u1.push(a.scores.get(aspect).get() as f64);
            u2.push(b.scores.get(aspect).get() as f64);
        }
    }
    AgreementReport::compute(&u1, &u2, AgreementLevel::Macro)
}

/// Overall-score agreement; units are dialogues.
pub fn overall_agreement(annotations: &[OverallAnnotation]) -> Result<AgreementReport> {
    let pairs = pair_by_dialogue(annotations, |a| &a.dialogue_id, |a| &a.annotator_id)?;
    let (u1, u2): (Vec<f64>, Vec<f64>) = pairs
        .values()
        .map(|[a, b]| (a.score.get() as f64, b.score.get() as f64))
        .unzip();
    AgreementReport::compute(&u1, &u2, AgreementLevel::Overall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::dialogue;

    #[test]
    fn identical_vectors_give_one() {
        assert_eq!(krippendorff_alpha(&[1, 0, 1, 0], &[1, 0, 1, 0]).unwrap(), 1.0);
    }

    #[test]
    fn frozen_oracle_values() {
        // Frozen from an independent coincidence-matrix computation.
        let a = krippendorff_alpha(
            &[1, 1, 0, 0, 1, 0, 1, 0, 0, 1],
            &[1, 1, 0, 0, 1, 0, 0, 0, 0, 1],
        )
        .unwrap();
        assert!((a - 0.808_080_808_080_808_1).abs() < 1e-12, "{a}");
        let neg = krippendorff_alpha(&[0, 1], &[1, 0]).unwrap();
        assert!((neg - (-0.5)).abs() < 1e-12, "{neg}");
    }

    #[test]
    fn degenerate_and_domain_errors() {
        assert!(matches!(
            krippendorff_alpha(&[1, 1], &[1, 1]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            krippendorff_alpha(&[1, 1], &[1]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            pearson_r(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn pearson_extremes() {
        let up = pearson_r(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        let down = pearson_r(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert!((up - 1.0).abs() < 1e-12 && (down + 1.0).abs() < 1e-12);
    }

    #[test]
    fn micro_agreement_over_tokens() {
        let corpus = Corpus::new(vec![dialogue("d1", "c", &["hi there you", "ok ok"])]).unwrap();
        let span = |ann: &str, turn, start, end| FeatureSpan {
            dialogue_id: "d1".into(),
            turn_index: turn,
            feature_id: "backchannel".into(),
            start,
            end,
            annotator_id: ann.into(),
        };
        let spans = vec![span("x", 1, 0, 2), span("y", 1, 0, 5), span("x", 0, 0, 2)];
        let report = micro_agreement(&corpus, &spans, &Taxonomy::builtin()).unwrap();
        assert_eq!(report.n_units, 17 * 5);
        assert!(report.alpha < 1.0 && report.alpha > 0.0);
        let per = micro_agreement_per_feature(&corpus, &spans, &Taxonomy::builtin()).unwrap();
        assert!(per.iter().find(|(f, _)| f == "backchannel").unwrap().1.is_some());
        assert!(per.iter().find(|(f, _)| f == "reference_word").unwrap().1.is_none());
    }
}
