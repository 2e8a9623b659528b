//! Five-class classifiers over micro or macro feature vectors: multinomial
//! logistic regression, Gaussian naive Bayes and a random forest, with
//! feature importances and a versioned model file.

mod forest;
mod importance;
mod logistic;
mod naive_bayes;
mod persist;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::jsonl::to_canonical_string;

pub use forest::{ForestParams, Node, Tree};
pub use importance::{importances, permutation_importance, ImportanceMethod, ImportanceTable};
pub use logistic::{logistic_loss_and_grad, LogisticParams};
pub use naive_bayes::NaiveBayesParams;
pub use persist::{
    load_model, load_model_expecting, model_from_str, model_to_string, save_model, MODEL_FORMAT,
    MODEL_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    NaiveBayes,
    RandomForest,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Logistic, ModelKind::RandomForest, ModelKind::NaiveBayes];

    pub fn id(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::NaiveBayes => "naive_bayes",
            ModelKind::RandomForest => "random_forest",
        }
    }

    /// Short label used in run names and report columns.
    pub fn short(self) -> &'static str {
        match self {
            ModelKind::Logistic => "LR",
            ModelKind::NaiveBayes => "NB",
            ModelKind::RandomForest => "RF",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logistic" | "lr" => Ok(ModelKind::Logistic),
            "naive_bayes" | "nb" => Ok(ModelKind::NaiveBayes),
            "random_forest" | "rf" => Ok(ModelKind::RandomForest),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub l2_penalty: f64,
    pub epochs: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            l2_penalty: 1e-3,
            epochs: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturesPerSplit {
    /// `max(1, floor(sqrt(p)))`.
    Sqrt,
    All,
    Fixed(usize),
}

impl FeaturesPerSplit {
    pub fn count(self, p: usize) -> usize {
        match self {
            FeaturesPerSplit::Sqrt => ((p as f64).sqrt().floor() as usize).max(1),
            FeaturesPerSplit::All => p,
            FeaturesPerSplit::Fixed(n) => n.min(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub features_per_split: FeaturesPerSplit,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 8,
            min_leaf: 2,
            features_per_split: FeaturesPerSplit::Sqrt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model_kind: ModelKind,
    pub seed: u64,
    pub logistic: LogisticConfig,
    pub forest: ForestConfig,
    /// Lower bound on naive Bayes class-conditional variances.
    pub variance_floor: f64,
    /// Shuffles per feature for permutation importance.
    pub permutation_rounds: usize,
}

impl TrainConfig {
    pub fn new(model_kind: ModelKind, seed: u64) -> Self {
        Self {
            model_kind,
            seed,
            logistic: LogisticConfig::default(),
            forest: ForestConfig::default(),
            variance_floor: 1e-9,
            permutation_rounds: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = &self.logistic;
        let f = &self.forest;
        let positive_reals = [
            ("logistic.learning_rate", l.learning_rate),
            ("logistic.l2_penalty", l.l2_penalty),
            ("variance_floor", self.variance_floor),
        ];
        for (name, v) in positive_reals {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let positive_counts = [
            ("logistic.epochs", l.epochs),
            ("forest.n_trees", f.n_trees),
            ("forest.max_depth", f.max_depth),
            ("forest.min_leaf", f.min_leaf),
            ("permutation_rounds", self.permutation_rounds),
        ];
        for (name, v) in positive_counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if f.features_per_split == FeaturesPerSplit::Fixed(0) {
            return Err(Error::Config("forest.features_per_split must be positive".into()));
        }
        Ok(())
    }
}

/// Training or evaluation data. Labels are scores `1..=5`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, x: Vec<Vec<f64>>, y: Vec<u8>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Domain(format!("{} rows but {} labels", x.len(), y.len())));
        }
        for (i, row) in x.iter().enumerate() {
            if row.len() != feature_names.len() {
                return Err(Error::Domain(format!(
                    "row {i} has {} values, expected {}",
                    row.len(),
                    feature_names.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("row {i} has a non-finite value")));
            }
        }
        if let Some(bad) = y.iter().find(|&&l| !(1..=5).contains(&l)) {
            return Err(Error::Domain(format!("label {bad} outside 1..5")));
        }
        Ok(Self { feature_names, x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.feature_names.len()
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            x: rows.iter().map(|&i| self.x[i].clone()).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Logistic(LogisticParams),
    NaiveBayes(NaiveBayesParams),
    RandomForest(ForestParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub kind: ModelKind,
    /// Sorted labels seen in training; predictions lie in this set.
    pub class_domain: Vec<u8>,
    pub feature_names: Vec<String>,
    pub feature_dimension: usize,
    /// Hex SHA-256 over the canonical training config and data.
    pub fingerprint: String,
    pub config: TrainConfig,
    pub params: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: u8,
    /// One entry per `class_domain` label, same order.
    pub probabilities: Vec<f64>,
}

fn fingerprint_of(value: &serde_json::Value) -> Result<String> {
    let text = to_canonical_string(value)?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

/// Floats enter the fingerprint as raw bits so it is exact.
pub fn training_fingerprint(data: &Dataset, cfg: &TrainConfig) -> Result<String> {
    let bits: Vec<Vec<u64>> = data
        .x
        .iter()
        .map(|row| row.iter().map(|v| v.to_bits()).collect())
        .collect();
    let config = serde_json::to_value(cfg).map_err(|e| Error::Format(e.to_string()))?;
    fingerprint_of(&serde_json::json!({
        "config": config,
        "feature_names": data.feature_names,
        "x_bits": bits,
        "y": data.y,
    }))
}

/// Argmax with ties to the earlier (lower) class.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Trains a classifier. Deterministic in `(data, cfg)`.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<ClassifierModel> {
    cfg.validate()?;
    if data.dimension() == 0 {
        return Err(Error::Domain("training data has no features".into()));
    }
    let class_domain: Vec<u8> = data.y.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if class_domain.len() < 2 {
        return Err(Error::DegenerateTraining(format!(
            "at least 2 distinct labels are required, found {:?}",
            class_domain
        )));
    }
    let params = match cfg.model_kind {
        ModelKind::Logistic => ModelParams::Logistic(logistic::fit(data, &class_domain, &cfg.logistic)),
        ModelKind::NaiveBayes => {
            ModelParams::NaiveBayes(naive_bayes::fit(data, &class_domain, cfg.variance_floor))
        }
        ModelKind::RandomForest => {
            ModelParams::RandomForest(forest::fit(data, &class_domain, &cfg.forest, cfg.seed))
        }
    };
    Ok(ClassifierModel {
        kind: cfg.model_kind,
        class_domain,
        feature_names: data.feature_names.clone(),
        feature_dimension: data.dimension(),
        fingerprint: training_fingerprint(data, cfg)?,
        config: cfg.clone(),
        params,
    })
}

impl ClassifierModel {
    /// Wraps hand-set parameters, e.g. for tests or imported models. The
    /// fingerprint is taken over the parameters themselves.
    pub fn from_params(
        feature_names: Vec<String>,
        class_domain: Vec<u8>,
        params: ModelParams,
    ) -> Result<Self> {
        let kind = match &params {
            ModelParams::Logistic(_) => ModelKind::Logistic,
            ModelParams::NaiveBayes(_) => ModelKind::NaiveBayes,
            ModelParams::RandomForest(_) => ModelKind::RandomForest,
        };
        let sorted: Vec<u8> = class_domain.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        if sorted != class_domain || class_domain.is_empty() {
            return Err(Error::Domain("class domain must be non-empty, sorted and unique".into()));
        }
        let model = Self {
            kind,
            feature_dimension: feature_names.len(),
            feature_names,
            fingerprint: fingerprint_of(
                &serde_json::to_value(&params).map_err(|e| Error::Format(e.to_string()))?,
            )?,
            class_domain,
            config: TrainConfig::new(kind, 0),
            params,
        };
        model.check_shapes()?;
        Ok(model)
    }

    pub(crate) fn check_shapes(&self) -> Result<()> {
        let (k, p) = (self.class_domain.len(), self.feature_dimension);
        let ok = match &self.params {
            ModelParams::Logistic(m) => m.shape_ok(k, p),
            ModelParams::NaiveBayes(m) => m.shape_ok(k, p),
            ModelParams::RandomForest(m) => m.shape_ok(&self.class_domain, p),
        };
        if !ok || self.feature_names.len() != p {
            return Err(Error::Format(format!(
                "{} parameters do not match {k} classes and dimension {p}",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.feature_dimension {
            return Err(Error::Domain(format!(
                "input has dimension {}, model expects {}",
                x.len(),
                self.feature_dimension
            )));
        }
        Ok(match &self.params {
            ModelParams::Logistic(m) => m.probabilities(x),
            ModelParams::NaiveBayes(m) => m.probabilities(x),
            ModelParams::RandomForest(m) => m.probabilities(x, &self.class_domain),
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let probabilities = self.predict_proba(x)?;
        Ok(Prediction {
            label: self.class_domain[argmax(&probabilities)],
            probabilities,
        })
    }

    pub fn predict_labels(&self, rows: &[Vec<f64>]) -> Result<Vec<u8>> {
        rows.iter().map(|x| self.predict(x).map(|p| p.label)).collect()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Labels 1..=5 from the integer part of feature `signal`, other
    /// features uniform noise.
    pub(crate) fn banded(n: usize, p: usize, signal: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let class = (i % 5) as u8 + 1;
            let mut row: Vec<f64> = (0..p).map(|_| rng.gen_range(0.0..5.0)).collect();
            row[signal] = class as f64 - 1.0 + rng.gen_range(0.1..0.9);
            x.push(row);
            y.push(class);
        }
        let names = (0..p).map(|j| format!("f{j:02}")).collect();
        Dataset::new(names, x, y).unwrap()
    }

    #[test]
    fn single_class_is_degenerate() {
        let d = Dataset::new(vec!["a".into()], vec![vec![0.0], vec![1.0]], vec![3, 3]).unwrap();
        for kind in ModelKind::ALL {
            assert!(matches!(
                train(&d, &TrainConfig::new(kind, 1)),
                Err(Error::DegenerateTraining(_))
            ));
        }
    }

    #[test]
    fn dimension_mismatch_is_domain_error() {
        assert!(Dataset::new(vec!["a".into()], vec![vec![0.0, 1.0]], vec![1]).is_err());
        let d = banded(20, 2, 0, 1);
        let m = train(&d, &TrainConfig::new(ModelKind::NaiveBayes, 1)).unwrap();
        assert!(matches!(m.predict(&[1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn same_inputs_same_fingerprint() {
        let d = banded(40, 3, 1, 2);
        for kind in ModelKind::ALL {
            let a = train(&d, &TrainConfig::new(kind, 7)).unwrap();
            let b = train(&d, &TrainConfig::new(kind, 7)).unwrap();
            assert_eq!(a.fingerprint, b.fingerprint);
            assert_eq!(a, b);
            let c = train(&d, &TrainConfig::new(kind, 8)).unwrap();
            assert_ne!(a.fingerprint, c.fingerprint);
        }
    }

    #[test]
    fn separated_clusters_are_learned() {
        let x = vec![vec![0.0], vec![0.1], vec![0.2], vec![5.0], vec![5.1], vec![5.2]];
        let y = vec![1, 1, 1, 5, 5, 5];
        let d = Dataset::new(vec!["a".into()], x.clone(), y.clone()).unwrap();
        for kind in ModelKind::ALL {
            let mut cfg = TrainConfig::new(kind, 3);
            cfg.forest.min_leaf = 1;
            let m = train(&d, &cfg).unwrap();
            assert_eq!(m.class_domain, vec![1, 5]);
            assert_eq!(m.predict_labels(&x).unwrap(), y, "{kind}");
        }
    }

    #[test]
    fn probabilities_are_distributions() {
        let d = banded(60, 4, 2, 3);
        for kind in ModelKind::ALL {
            let m = train(&d, &TrainConfig::new(kind, 1)).unwrap();
            for row in &d.x {
                let p = m.predict_proba(row).unwrap();
                assert_eq!(p.len(), 5);
                assert!(p.iter().all(|&v| v >= 0.0));
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = TrainConfig::new(ModelKind::Logistic, 0);
        cfg.logistic.learning_rate = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = TrainConfig::new(ModelKind::RandomForest, 0);
        cfg.forest.n_trees = 0;
        assert!(cfg.validate().is_err());
    }
}
