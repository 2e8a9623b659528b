//! Model file: one JSON object with sorted keys.
//!
//! ```text
//! {"class_domain":[1,2,3],"config":{...},"dimension":17,"feature_names":[...],
//!  "fingerprint":"<sha256 hex>","format":"dialeval-model","kind":"logistic",
//!  "params":{"kind":"logistic",...},"version":1}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassifierModel, ModelKind, ModelParams, TrainConfig};
use crate::error::{Error, Result};
use crate::jsonl::{read_text, to_canonical_pretty, write_text};

pub const MODEL_FORMAT: &str = "dialeval-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    kind: ModelKind,
    dimension: usize,
    class_domain: Vec<u8>,
    fingerprint: String,
    feature_names: Vec<String>,
    config: TrainConfig,
    params: ModelParams,
}

pub fn model_to_string(model: &ClassifierModel) -> Result<String> {
    to_canonical_pretty(&ModelFile {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        kind: model.kind,
        dimension: model.feature_dimension,
        class_domain: model.class_domain.clone(),
        fingerprint: model.fingerprint.clone(),
        feature_names: model.feature_names.clone(),
        config: model.config.clone(),
        params: model.params.clone(),
    })
}

pub fn save_model(model: &ClassifierModel, path: &Path) -> Result<()> {
    write_text(path, &model_to_string(model)?)
}

pub fn model_from_str(text: &str, expected: Option<ModelKind>) -> Result<ClassifierModel> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("unreadable model file: {e}")))?;
    if value.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT) {
        return Err(Error::Format("not a model file".into()));
    }
    let version = value.get("version").and_then(|v| v.as_u64());
    if version != Some(MODEL_VERSION as u64) {
        return Err(Error::Format(format!(
            "model file version {version:?}, supported version is {MODEL_VERSION}"
        )));
    }
    if let Some(expected) = expected {
        let found = value.get("kind").and_then(|v| v.as_str()).unwrap_or("<missing>");
        if found != expected.id() {
            return Err(Error::KindMismatch {
                expected: expected.id().to_string(),
                found: found.to_string(),
            });
        }
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| Error::Format(format!("malformed model file: {e}")))?;
    let params_kind = match file.params {
        ModelParams::Logistic(_) => ModelKind::Logistic,
        ModelParams::NaiveBayes(_) => ModelKind::NaiveBayes,
        ModelParams::RandomForest(_) => ModelKind::RandomForest,
    };
    if params_kind != file.kind {
        return Err(Error::Format(format!(
            "header says {} but parameters are {}",
            file.kind, params_kind
        )));
    }
    let model = ClassifierModel {
        kind: file.kind,
        class_domain: file.class_domain,
        feature_dimension: file.dimension,
        feature_names: file.feature_names,
        fingerprint: file.fingerprint,
        config: file.config,
        params: file.params,
    };
    model.check_shapes()?;
    Ok(model)
}

pub fn load_model(path: &Path) -> Result<ClassifierModel> {
    model_from_str(&read_text(path)?, None)
}

/// Loads a model and fails with a kind-mismatch error unless it is `kind`.
pub fn load_model_expecting(path: &Path, kind: ModelKind) -> Result<ClassifierModel> {
    model_from_str(&read_text(path)?, Some(kind))
}
