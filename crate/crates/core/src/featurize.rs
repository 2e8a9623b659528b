//! Numeric feature vectors for the classical classifiers, and the
//! feature-matrix CSV exchanged with the models module and external tools.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotation::{tokenize, FeatureSpan};
use crate::corpus::Dialogue;
use crate::error::{Error, Result};
use crate::jsonl::{read_text, write_text};
use crate::taxonomy::{Aspect, MacroScores, Score, Taxonomy, FEATURE_COUNT};

/// Denominator applied to span counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    PerTurn,
    PerToken,
}

/// Normalized span counts in taxonomy order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroVector {
    pub dialogue_id: String,
    pub values: Vec<f64>,
}

/// Macro scores mapped onto `[0, 1]`, aspect order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroVector {
    pub dialogue_id: String,
    pub values: [f64; 4],
}

/// Span count per feature divided by the dialogue's turn count (or word
/// token count under [`Normalization::PerToken`]).
pub fn micro_vector(
    dialogue: &Dialogue,
    spans: &[FeatureSpan],
    taxonomy: &Taxonomy,
    normalization: Normalization,
) -> Result<MicroVector> {
    let mut counts = vec![0usize; taxonomy.len()];
    for span in spans {
        let idx = taxonomy.index_of(&span.feature_id)?;
        if span.dialogue_id != dialogue.dialogue_id {
            return Err(Error::Integrity(format!(
                "span for `{}` passed with dialogue `{}`",
                span.dialogue_id, dialogue.dialogue_id
            )));
        }
        counts[idx] += 1;
    }
    let denominator = match normalization {
        Normalization::PerTurn => dialogue.turns.len(),
        Normalization::PerToken => dialogue
            .turns
            .iter()
            .map(|t| tokenize(&t.text).len())
            .sum(),
    };
    let values = counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { c as f64 / denominator.max(1) as f64 })
        .collect();
    Ok(MicroVector {
        dialogue_id: dialogue.dialogue_id.clone(),
        values,
    })
}

/// `(score - 1) / 4` per aspect.
pub fn macro_vector(dialogue_id: &str, labels: &BTreeMap<Aspect, Score>) -> Result<MacroVector> {
    let scores = MacroScores::from_map(labels)?;
    Ok(macro_vector_of(dialogue_id, &scores))
}

pub fn macro_vector_of(dialogue_id: &str, scores: &MacroScores) -> MacroVector {
    let mut values = [0.0; 4];
    for aspect in Aspect::ALL {
        values[aspect.index()] = (scores.get(aspect).get() as f64 - 1.0) / 4.0;
    }
    MacroVector {
        dialogue_id: dialogue_id.to_string(),
        values,
    }
}

/// Inverse of [`macro_vector`]: the closest score for each entry.
pub fn nearest_scores(vector: &MacroVector) -> Result<MacroScores> {
    let mut values = [0i64; 4];
    for (out, &v) in values.iter_mut().zip(&vector.values) {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("macro vector entry {v} outside [0, 1]")));
        }
        *out = (v * 4.0).round() as i64 + 1;
    }
    MacroScores::from_values(values)
}

/// Rows of named feature values keyed by dialogue id. Row order is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub feature_names: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl FeatureMatrix {
    pub fn new(feature_names: Vec<String>) -> Self {
        Self {
            feature_names,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, dialogue_id: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.feature_names.len() {
            return Err(Error::Domain(format!(
                "row `{dialogue_id}` has {} values, expected {}",
                values.len(),
                self.feature_names.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("row `{dialogue_id}` has non-finite value {v}")));
        }
        self.rows.push((dialogue_id.to_string(), values));
        Ok(())
    }

    pub fn micro(vectors: &[MicroVector], taxonomy: &Taxonomy) -> Result<Self> {
        let mut m = Self::new(taxonomy.feature_ids());
        for v in vectors {
            m.push(&v.dialogue_id, v.values.clone())?;
        }
        Ok(m)
    }

    pub fn macro_level(vectors: &[MacroVector]) -> Result<Self> {
        let mut m = Self::new(Aspect::ALL.iter().map(|a| a.id().to_string()).collect());
        for v in vectors {
            m.push(&v.dialogue_id, v.values.to_vec())?;
        }
        Ok(m)
    }

    pub fn get(&self, dialogue_id: &str) -> Option<&[f64]> {
        self.rows
            .iter()
            .find(|(id, _)| id == dialogue_id)
            .map(|(_, v)| v.as_slice())
    }

    /// CSV with header `dialogue_id,<feature names...>`. Values use the
    /// shortest representation that parses back to the same `f64`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["dialogue_id".to_string()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (id, values) in &self.rows {
            let mut record = vec![id.clone()];
            record.extend(values.iter().map(|v| v.to_string()));
            w.write_record(&record).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = r.headers().map_err(csv_err)?.clone();
        if header.get(0) != Some("dialogue_id") {
            return Err(Error::Format(
                "feature matrix header must start with `dialogue_id`".into(),
            ));
        }
        let mut m = Self::new(header.iter().skip(1).map(str::to_string).collect());
        for (i, record) in r.records().enumerate() {
            let record = record.map_err(|e| Error::Parse {
                line: i + 2,
                message: e.to_string(),
            })?;
            let values = record
                .iter()
                .skip(1)
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line: i + 2,
                        message: format!("`{s}`: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            m.push(&record[0], values)?;
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&read_text(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv()?)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Asserts a micro vector has the full feature dimension.
pub fn check_micro_dimension(values: &[f64]) -> Result<()> {
    if values.len() != FEATURE_COUNT {
        return Err(Error::Domain(format!(
            "micro vector has {} entries, expected {FEATURE_COUNT}",
            values.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::dialogue;

    fn spans(id: &str, feature: &str, n: usize) -> Vec<FeatureSpan> {
        (0..n)
            .map(|i| FeatureSpan {
                dialogue_id: id.into(),
                turn_index: i,
                feature_id: feature.into(),
                start: 0,
                end: 1,
                annotator_id: "merged".into(),
            })
            .collect()
    }

    #[test]
    fn no_spans_is_zero_vector() {
        let d = dialogue("d", "c", &["a", "b", "c", "d", "e", "f"]);
        let v = micro_vector(&d, &[], &Taxonomy::builtin(), Normalization::PerTurn).unwrap();
        assert_eq!(v.values, vec![0.0; 17]);
    }

    #[test]
    fn three_backchannels_over_six_turns() {
        let tax = Taxonomy::builtin();
        let d = dialogue("d", "c", &["a", "b", "c", "d", "e", "f"]);
        let v = micro_vector(&d, &spans("d", "backchannel", 3), &tax, Normalization::PerTurn)
            .unwrap();
        let idx = tax.index_of("backchannel").unwrap();
        assert_eq!(v.values[idx], 0.5);
        assert_eq!(v.values.iter().filter(|&&x| x != 0.0).count(), 1);
    }

    #[test]
    fn per_token_switch() {
        let tax = Taxonomy::builtin();
        let d = dialogue("d", "c", &["one two", "three four"]);
        let v = micro_vector(&d, &spans("d", "backchannel", 1), &tax, Normalization::PerToken)
            .unwrap();
        assert_eq!(v.values[tax.index_of("backchannel").unwrap()], 0.25);
    }

    #[test]
    fn unknown_feature_is_rejected() {
        let d = dialogue("d", "c", &["a", "b"]);
        assert!(matches!(
            micro_vector(&d, &spans("d", "bogus", 1), &Taxonomy::builtin(), Normalization::PerTurn),
            Err(Error::UnknownFeature(_))
        ));
    }

    #[test]
    fn macro_affine_map() {
        let s = MacroScores::from_values([3, 4, 2, 5]).unwrap();
        let v = macro_vector("d", &s.to_map()).unwrap();
        assert_eq!(v.values, [0.5, 0.75, 0.25, 1.0]);
        assert_eq!(nearest_scores(&v).unwrap(), s);
        let ones = macro_vector_of("d", &MacroScores::from_values([1; 4]).unwrap());
        assert_eq!(ones.values, [0.0; 4]);
    }

    #[test]
    fn macro_missing_aspect_is_domain_error() {
        let mut map = MacroScores::from_values([1; 4]).unwrap().to_map();
        map.remove(&Aspect::Tone);
        assert!(matches!(macro_vector("d", &map), Err(Error::Domain(_))));
    }

    #[test]
    fn csv_round_trip() {
        let mut m = FeatureMatrix::new(vec!["a".into(), "b".into()]);
        m.push("d1", vec![0.1, 1.0 / 3.0]).unwrap();
        m.push("d2", vec![0.0, 2.5]).unwrap();
        let text = m.to_csv().unwrap();
        assert!(text.starts_with("dialogue_id,a,b\n"));
        assert_eq!(FeatureMatrix::from_csv(&text).unwrap(), m);
    }
}
