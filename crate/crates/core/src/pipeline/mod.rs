//! The three-step cascade (spans, macro labels, overall score) with
//! pluggable predictors per step, the one-step baseline, evaluation against
//! gold labels and reporting.

mod bind;
mod cascade;
mod evaluate;
mod output;
mod report;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::annotation::FeatureSpan;
use crate::featurize::Normalization;
use crate::llm::{Client, Demo, GatewayConfig};
use crate::models::{ClassifierModel, ImportanceTable};
use crate::taxonomy::{MacroScores, Score};

pub use bind::{bind, gold_fingerprint, PredictorBinding, ASPECT_MODEL_FILES};
pub use cascade::{run_cascade, run_onestep, RunOptions, TOP_CONTRIBUTIONS};
pub use evaluate::{evaluate, evaluate_all, EvalReport, EvalTask, GoldLabels};
pub use output::{corpus_fingerprint, read_run, write_run, BindingRecord, RunManifest, IMPORTANCE_FILE, RUN_FILES};
pub use report::{aspect_f1_grid, overall_f1_grid, report, DialogueSection, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    MicroSpans,
    MacroLabels,
    Overall,
}

impl Step {
    pub const ALL: [Step; 3] = [Step::MicroSpans, Step::MacroLabels, Step::Overall];

    pub fn id(self) -> &'static str {
        match self {
            Step::MicroSpans => "micro_spans",
            Step::MacroLabels => "macro_labels",
            Step::Overall => "overall",
        }
    }
}

impl std::fmt::Display for Step {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for Step {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        Step::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| crate::error::Error::Config(format!("unknown step `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingKind {
    GoldAnnotations,
    ClassicalModel,
    Llm,
}

impl BindingKind {
    pub fn id(self) -> &'static str {
        match self {
            BindingKind::GoldAnnotations => "gold_annotations",
            BindingKind::ClassicalModel => "classical_model",
            BindingKind::Llm => "llm",
        }
    }
}

impl std::fmt::Display for BindingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for BindingKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s {
            "gold" | "gold_annotations" => Ok(BindingKind::GoldAnnotations),
            "classical" | "classical_model" => Ok(BindingKind::ClassicalModel),
            "llm" => Ok(BindingKind::Llm),
            _ => Err(crate::error::Error::Config(format!(
                "unknown binding kind `{s}` (expected gold, classical or llm)"
            ))),
        }
    }
}

/// A model-backed predictor: a gateway client plus the one-shot demo.
pub struct LlmPredictor {
    pub client: Client,
    pub demo: Demo,
    /// Stable identity of the backing model or script, part of the
    /// provenance fingerprint.
    pub identity: String,
}

/// A loaded predictor. Which variants a step accepts is checked by
/// [`BoundStep::new`].
pub enum Predictor {
    GoldSpans(BTreeMap<String, Vec<FeatureSpan>>),
    GoldMacro(BTreeMap<String, MacroScores>),
    /// One 5-class model per aspect, aspect order, each over the micro
    /// feature vector.
    ClassicalMacro(Box<[ClassifierModel; 4]>),
    /// One model over the macro vector.
    ClassicalOverall(Box<ClassifierModel>),
    Llm(Arc<LlmPredictor>),
}

impl Predictor {
    pub fn kind(&self) -> BindingKind {
        match self {
            Predictor::GoldSpans(_) | Predictor::GoldMacro(_) => BindingKind::GoldAnnotations,
            Predictor::ClassicalMacro(_) | Predictor::ClassicalOverall(_) => {
                BindingKind::ClassicalModel
            }
            Predictor::Llm(_) => BindingKind::Llm,
        }
    }
}

/// Where a step's output came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepProvenance {
    pub step: Step,
    pub kind: BindingKind,
    /// Short name used in run labels, e.g. `Human`, `LR`, `GPT4`.
    pub label: String,
    pub fingerprint: String,
}

/// A predictor bound to a step, with its provenance and (for file-backed
/// bindings) the description it was resolved from.
pub struct BoundStep {
    pub provenance: StepProvenance,
    pub predictor: Predictor,
    pub reference: String,
    pub gateway: Option<GatewayConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Cascade,
    OneStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContributionBasis {
    /// Step-2 model importance times the feature's normalized count.
    ImportanceTimesValue,
    SpanCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureContribution {
    pub feature_id: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentRecord {
    pub dialogue_id: String,
    pub mode: RunMode,
    /// Empty in one-step runs.
    pub spans: Vec<FeatureSpan>,
    /// `None` in one-step runs.
    pub macro_scores: Option<MacroScores>,
    pub overall: Score,
    pub rationale: Option<String>,
    /// One entry per executed step, step order.
    pub provenance: Vec<StepProvenance>,
    pub contribution_basis: Option<ContributionBasis>,
    /// Strongest contributing features, descending, ties by id.
    pub top_features: Vec<FeatureContribution>,
}

/// A dialogue for which no record was produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub dialogue_id: String,
    pub step: Step,
    pub reason: String,
    pub raw_response: Option<String>,
}

/// Records and failures in corpus order; together they cover every
/// dialogue exactly once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeOutput {
    pub mode: RunMode,
    pub run_label: String,
    pub steps: Vec<StepProvenance>,
    pub normalization: Normalization,
    pub records: Vec<AssessmentRecord>,
    pub failures: Vec<FailureEntry>,
    /// Importance of the macro aspects for a classical step 3.
    pub macro_importance: Option<ImportanceTable>,
}
