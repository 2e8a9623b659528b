use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClassifierModel, Dataset, ModelKind, ModelParams};
use crate::error::{Error, Result};
use crate::metrics::classification_metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMethod {
    WeightMagnitude,
    ImpurityDecrease,
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub model_kind: ModelKind,
    pub method: ImportanceMethod,
    /// One non-negative, finite entry per input feature.
    pub scores: BTreeMap<String, f64>,
}

impl ImportanceTable {
    /// Feature names by descending score, ties by name.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self.scores.iter().map(|(k, &s)| (k.as_str(), s)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }
}

/// The kind's native importance: mean absolute weight over classes for
/// logistic regression, normalized Gini decrease for the forest, and
/// permutation importance on `eval` for naive Bayes.
pub fn importances(model: &ClassifierModel, eval: Option<&Dataset>) -> Result<ImportanceTable> {
    let (method, values) = match &model.params {
        ModelParams::Logistic(p) => {
            let k = p.weights.len() as f64;
            let values = (0..model.feature_dimension)
                .map(|j| p.weights.iter().map(|w| w[j].abs()).sum::<f64>() / k)
                .collect();
            (ImportanceMethod::WeightMagnitude, values)
        }
        ModelParams::RandomForest(p) => (ImportanceMethod::ImpurityDecrease, p.importances.clone()),
        ModelParams::NaiveBayes(_) => {
            let eval = eval.ok_or_else(|| {
                Error::Domain("permutation importance needs evaluation data".into())
            })?;
            return permutation_importance(
                model,
                eval,
                model.config.permutation_rounds,
                model.config.seed,
            );
        }
    };
    Ok(table(model, method, values))
}

fn table(model: &ClassifierModel, method: ImportanceMethod, values: Vec<f64>) -> ImportanceTable {
    ImportanceTable {
        model_kind: model.kind,
        method,
        scores: model.feature_names.iter().cloned().zip(values).collect(),
    }
}

/// Mean macro-F1 drop over `rounds` seeded shuffles of each feature
/// column, clamped at zero. Feature `j` shuffles with stream `j` of a
/// generator seeded by `seed`.
pub fn permutation_importance(
    model: &ClassifierModel,
    eval: &Dataset,
    rounds: usize,
    seed: u64,
) -> Result<ImportanceTable> {
    if eval.is_empty() {
        return Err(Error::Domain("permutation importance on an empty evaluation set".into()));
    }
    if eval.dimension() != model.feature_dimension {
        return Err(Error::Domain(format!(
            "evaluation data has dimension {}, model expects {}",
            eval.dimension(),
            model.feature_dimension
        )));
    }
    if rounds == 0 {
        return Err(Error::Config("permutation rounds must be positive".into()));
    }
    let baseline = classification_metrics(&eval.y, &model.predict_labels(&eval.x)?)?.macro_f1;
    let mut values = Vec::with_capacity(model.feature_dimension);
    let mut rows = eval.x.clone();
    for j in 0..model.feature_dimension {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let original: Vec<f64> = eval.x.iter().map(|r| r[j]).collect();
        let mut drop = 0.0;
        for _ in 0..rounds {
            let mut column = original.clone();
            column.shuffle(&mut rng);
            for (row, v) in rows.iter_mut().zip(&column) {
                row[j] = *v;
            }
            let f1 = classification_metrics(&eval.y, &model.predict_labels(&rows)?)?.macro_f1;
            drop += baseline - f1;
        }
        for (row, v) in rows.iter_mut().zip(&original) {
            row[j] = *v;
        }
        values.push((drop / rounds as f64).max(0.0));
    }
    Ok(table(model, ImportanceMethod::Permutation, values))
}
