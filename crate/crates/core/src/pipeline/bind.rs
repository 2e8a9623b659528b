use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BindingKind, BoundStep, LlmPredictor, Predictor, Step, StepProvenance};
use crate::annotation::{FeatureSpan, MacroAnnotation};
use crate::error::{Error, Result};
use crate::jsonl::{read_lines, read_text, to_canonical_string};
use crate::llm::{prompt_hash, ChatGateway, Client, Demo, GatewayConfig, HttpGateway, MockGateway, MockScript};
use crate::models::{load_model, ClassifierModel};
use crate::taxonomy::{Aspect, MacroScores, Taxonomy, FEATURE_COUNT};

/// File names of the four step-2 models inside a classical binding's
/// directory, aspect order.
pub const ASPECT_MODEL_FILES: [&str; 4] = ["topic.json", "tone.json", "opening.json", "closing.json"];

/// A step binding as written in configuration: what to load, not the
/// loaded predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorBinding {
    pub step: Step,
    pub kind: BindingKind,
    /// Gold annotation file, model file or model directory; for `llm`, an
    /// optional mock script (live gateway when absent).
    pub reference: Option<PathBuf>,
    pub label: Option<String>,
    pub gateway: Option<GatewayConfig>,
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Hash of the canonical serialization of gold data.
pub fn gold_fingerprint<T: Serialize>(data: &T) -> Result<String> {
    Ok(sha256_hex(&to_canonical_string(data)?))
}

fn default_label(predictor: &Predictor) -> String {
    match predictor {
        Predictor::GoldSpans(_) | Predictor::GoldMacro(_) => "Human".into(),
        Predictor::ClassicalMacro(models) => {
            let first = models[0].kind;
            if models.iter().all(|m| m.kind == first) {
                first.short().into()
            } else {
                models.iter().map(|m| m.kind.short()).collect::<Vec<_>>().join("/")
            }
        }
        Predictor::ClassicalOverall(m) => m.kind.short().into(),
        Predictor::Llm(p) => p.client.describe(),
    }
}

fn check_classical(model: &ClassifierModel, names: &[String], what: &str) -> Result<()> {
    if model.feature_dimension != names.len() || model.feature_names != names {
        return Err(Error::Config(format!(
            "{what} model expects features {:?}, the step supplies {:?}",
            model.feature_names, names
        )));
    }
    if model.class_domain.iter().any(|&c| !(1..=5).contains(&c)) {
        return Err(Error::Config(format!(
            "{what} model predicts labels {:?} outside 1..5",
            model.class_domain
        )));
    }
    Ok(())
}

impl BoundStep {
    /// Binds a loaded predictor to `step`, rejecting combinations the step
    /// contract does not allow.
    pub fn new(step: Step, predictor: Predictor, label: Option<String>) -> Result<Self> {
        let allowed = matches!(
            (step, &predictor),
            (Step::MicroSpans, Predictor::GoldSpans(_) | Predictor::Llm(_))
                | (
                    Step::MacroLabels,
                    Predictor::GoldMacro(_) | Predictor::ClassicalMacro(_) | Predictor::Llm(_)
                )
                | (Step::Overall, Predictor::ClassicalOverall(_) | Predictor::Llm(_))
        );
        if !allowed {
            return Err(Error::Config(format!(
                "a {} predictor cannot serve step {step}",
                predictor.kind()
            )));
        }
        let fingerprint = match &predictor {
            Predictor::GoldSpans(map) => gold_fingerprint(map)?,
            Predictor::GoldMacro(map) => gold_fingerprint(map)?,
            Predictor::ClassicalMacro(models) => {
                for (model, aspect) in models.iter().zip(Aspect::ALL) {
                    if model.feature_dimension != FEATURE_COUNT {
                        return Err(Error::Config(format!(
                            "{aspect} model has dimension {}, step 2 supplies {FEATURE_COUNT} micro features",
                            model.feature_dimension
                        )));
                    }
                    check_classical(model, &model.feature_names, aspect.id())?;
                }
                sha256_hex(&models.iter().map(|m| m.fingerprint.as_str()).collect::<Vec<_>>().join(","))
            }
            Predictor::ClassicalOverall(model) => {
                let names: Vec<String> = Aspect::ALL.iter().map(|a| a.id().to_string()).collect();
                check_classical(model, &names, "overall")?;
                model.fingerprint.clone()
            }
            Predictor::Llm(p) => gold_fingerprint(&serde_json::json!({
                "identity": p.identity,
                "gateway": p.client.config(),
                "demo": p.demo,
            }))?,
        };
        let gateway = match &predictor {
            Predictor::Llm(p) => Some(p.client.config().clone()),
            _ => None,
        };
        Ok(Self {
            provenance: StepProvenance {
                step,
                kind: predictor.kind(),
                label: label.unwrap_or_else(|| default_label(&predictor)),
                fingerprint,
            },
            predictor,
            reference: String::new(),
            gateway,
        })
    }
}

fn required<'a>(binding: &'a PredictorBinding) -> Result<&'a Path> {
    binding.reference.as_deref().ok_or_else(|| {
        Error::Config(format!(
            "{} binding for step {} needs a reference path",
            binding.kind, binding.step
        ))
    })
}

fn load_gold_spans(path: &Path, taxonomy: &Taxonomy) -> Result<BTreeMap<String, Vec<FeatureSpan>>> {
    let mut map: BTreeMap<String, Vec<FeatureSpan>> = BTreeMap::new();
    for span in read_lines::<FeatureSpan>(path)? {
        taxonomy.resolve(&span.feature_id)?;
        map.entry(span.dialogue_id.clone()).or_default().push(span);
    }
    Ok(map)
}

fn load_gold_macro(path: &Path) -> Result<BTreeMap<String, MacroScores>> {
    let mut map = BTreeMap::new();
    for a in read_lines::<MacroAnnotation>(path)? {
        if let Some(previous) = map.insert(a.dialogue_id.clone(), a.scores) {
            if previous != a.scores {
                return Err(Error::Integrity(format!(
                    "conflicting gold macro labels for `{}`; resolve them first",
                    a.dialogue_id
                )));
            }
        }
    }
    Ok(map)
}

fn load_llm(binding: &PredictorBinding) -> Result<LlmPredictor> {
    let cfg = binding.gateway.clone().unwrap_or_default();
    let (gateway, identity): (Box<dyn ChatGateway>, String) = match &binding.reference {
        Some(script_path) => {
            let script = MockScript::load(script_path)?;
            let identity = format!("mock:{}", prompt_hash(&read_text(script_path)?));
            (Box::new(MockGateway::new(script)), identity)
        }
        None => {
            let identity = format!("http:{}:{}", cfg.endpoint, cfg.model);
            (Box::new(HttpGateway::from_config(&cfg)?), identity)
        }
    };
    Ok(LlmPredictor {
        client: Client::new(gateway, cfg)?,
        demo: Demo::constructed(),
        identity,
    })
}

/// Loads the predictor a binding describes.
pub fn bind(binding: &PredictorBinding, taxonomy: &Taxonomy) -> Result<BoundStep> {
    let predictor = match (binding.step, binding.kind) {
        (Step::MicroSpans, BindingKind::GoldAnnotations) => {
            Predictor::GoldSpans(load_gold_spans(required(binding)?, taxonomy)?)
        }
        (Step::MacroLabels, BindingKind::GoldAnnotations) => {
            Predictor::GoldMacro(load_gold_macro(required(binding)?)?)
        }
        (Step::MacroLabels, BindingKind::ClassicalModel) => {
            let dir = required(binding)?;
            let models = ASPECT_MODEL_FILES
                .iter()
                .map(|f| load_model(&dir.join(f)))
                .collect::<Result<Vec<_>>>()?;
            let models: [ClassifierModel; 4] = models.try_into().expect("four aspect files");
            let ids = taxonomy.feature_ids();
            for (m, aspect) in models.iter().zip(Aspect::ALL) {
                check_classical(m, &ids, aspect.id())?;
            }
            Predictor::ClassicalMacro(Box::new(models))
        }
        (Step::Overall, BindingKind::ClassicalModel) => {
            Predictor::ClassicalOverall(Box::new(load_model(required(binding)?)?))
        }
        (_, BindingKind::Llm) => Predictor::Llm(Arc::new(load_llm(binding)?)),
        (step, kind) => {
            return Err(Error::Config(format!("a {kind} binding cannot serve step {step}")))
        }
    };
    let mut bound = BoundStep::new(binding.step, predictor, binding.label.clone())?;
    bound.reference = binding
        .reference
        .as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default();
    Ok(bound)
}
