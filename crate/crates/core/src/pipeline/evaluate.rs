use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AssessmentRecord, RunMode};
use crate::annotation::{binarize_spans, FeatureSpan, MacroAnnotation, OverallAnnotation, PREDICTED};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::metrics::{classification_metrics, Metrics};
use crate::taxonomy::{Aspect, MacroScores, Score, Taxonomy};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "level", content = "target", rename_all = "snake_case")]
pub enum EvalTask {
    Overall,
    Macro(Aspect),
    /// Token-level presence of one feature.
    MicroFeature(String),
}

impl std::fmt::Display for EvalTask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvalTask::Overall => f.write_str("overall"),
            EvalTask::Macro(a) => write!(f, "macro:{}", a.id()),
            EvalTask::MicroFeature(id) => write!(f, "micro:{id}"),
        }
    }
}

/// Parses the [`Display`](std::fmt::Display) form. Micro feature ids are
/// not checked against a taxonomy here.
impl std::str::FromStr for EvalTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().split_once(':') {
            None if s.trim() == "overall" => Ok(EvalTask::Overall),
            Some(("macro", aspect)) => aspect
                .parse()
                .map(EvalTask::Macro)
                .map_err(|_| Error::Config(format!("unknown aspect in task `{s}`"))),
            Some(("micro", id)) if !id.is_empty() => Ok(EvalTask::MicroFeature(id.to_string())),
            _ => Err(Error::Config(format!(
                "unknown task `{s}`; expected overall, macro:<aspect> or micro:<feature>"
            ))),
        }
    }
}

/// Gold labels keyed by dialogue id. `spans` is `None` when no span gold
/// was supplied; a dialogue absent from `Some(map)` has no gold spans.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GoldLabels {
    pub overall: BTreeMap<String, Score>,
    pub macro_scores: BTreeMap<String, MacroScores>,
    pub spans: Option<BTreeMap<String, Vec<FeatureSpan>>>,
}

fn insert_unique<V: PartialEq + Copy>(map: &mut BTreeMap<String, V>, id: &str, v: V, what: &str) -> Result<()> {
    match map.insert(id.to_string(), v) {
        Some(previous) if previous != v => Err(Error::Integrity(format!(
            "conflicting gold {what} labels for `{id}`; resolve them first"
        ))),
        _ => Ok(()),
    }
}

impl GoldLabels {
    /// Annotations must already be resolved: repeated labels for one
    /// dialogue are accepted only when equal.
    pub fn from_annotations(
        spans: Option<Vec<FeatureSpan>>,
        macros: &[MacroAnnotation],
        overall: &[OverallAnnotation],
    ) -> Result<Self> {
        let mut gold = GoldLabels::default();
        for a in macros {
            insert_unique(&mut gold.macro_scores, &a.dialogue_id, a.scores, "macro")?;
        }
        for a in overall {
            insert_unique(&mut gold.overall, &a.dialogue_id, a.score, "overall")?;
        }
        gold.spans = spans.map(|spans| {
            let mut map: BTreeMap<String, Vec<FeatureSpan>> = BTreeMap::new();
            for s in spans {
                map.entry(s.dialogue_id.clone()).or_default().push(s);
            }
            map
        });
        Ok(gold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: EvalTask,
    pub metrics: Metrics,
    /// Dialogues without a record (failed runs), left out of `metrics`.
    pub n_excluded: usize,
}

impl EvalReport {
    /// Macro-F1 for score tasks; F1 of the positive class for micro features.
    pub fn headline(&self) -> f64 {
        match self.task {
            EvalTask::MicroFeature(_) => self
                .metrics
                .per_class
                .iter()
                .find(|c| c.label == 1)
                .map_or(0.0, |c| c.f1),
            _ => self.metrics.macro_f1,
        }
    }
}

fn gold_for<'a, V>(map: &'a BTreeMap<String, V>, id: &str, what: &str) -> Result<&'a V> {
    map.get(id)
        .ok_or_else(|| Error::Domain(format!("prediction for `{id}` has no gold {what} label")))
}

fn cascade_only(r: &AssessmentRecord, task: &EvalTask) -> Result<()> {
    if r.mode == RunMode::OneStep {
        return Err(Error::Domain(format!(
            "one-step record `{}` cannot be evaluated on {task}",
            r.dialogue_id
        )));
    }
    Ok(())
}

const GOLD_TAG: &str = "gold";

/// Scores `records` against `gold` on one task. Every record needs a gold
/// label; micro tasks binarize spans per word token of the dialogue.
pub fn evaluate(
    records: &[AssessmentRecord],
    gold: &GoldLabels,
    task: &EvalTask,
    corpus: &Corpus,
    n_excluded: usize,
) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::Domain("no predictions overlap the gold labels".into()));
    }
    let (mut g, mut p) = (Vec::new(), Vec::new());
    match task {
        EvalTask::Overall => {
            for r in records {
                g.push(gold_for(&gold.overall, &r.dialogue_id, "overall")?.get());
                p.push(r.overall.get());
            }
        }
        EvalTask::Macro(aspect) => {
            for r in records {
                cascade_only(r, task)?;
                let scores = r.macro_scores.expect("cascade record");
                g.push(gold_for(&gold.macro_scores, &r.dialogue_id, "macro")?.get(*aspect).get());
                p.push(scores.get(*aspect).get());
            }
        }
        EvalTask::MicroFeature(feature) => {
            let spans = gold
                .spans
                .as_ref()
                .ok_or_else(|| Error::Domain("no gold spans supplied".into()))?;
            for r in records {
                cascade_only(r, task)?;
                let d = corpus.get(&r.dialogue_id).ok_or_else(|| {
                    Error::Integrity(format!("record `{}` is not in the corpus", r.dialogue_id))
                })?;
                let gold_spans: Vec<FeatureSpan> = spans
                    .get(&r.dialogue_id)
                    .into_iter()
                    .flatten()
                    .map(|s| FeatureSpan {
                        annotator_id: GOLD_TAG.into(),
                        ..s.clone()
                    })
                    .collect();
                g.extend(binarize_spans(d, &gold_spans, feature, GOLD_TAG)?);
                p.extend(binarize_spans(d, &r.spans, feature, PREDICTED)?);
            }
            if g.is_empty() {
                return Err(Error::Domain("evaluated dialogues contain no word tokens".into()));
            }
        }
    }
    Ok(EvalReport {
        task: task.clone(),
        metrics: classification_metrics(&g, &p)?,
        n_excluded,
    })
}

/// Every task the inputs support: overall when overall gold exists, the
/// four aspects when macro gold exists and records carry macro scores, and
/// each taxonomy feature when span gold exists.
pub fn evaluate_all(
    records: &[AssessmentRecord],
    gold: &GoldLabels,
    corpus: &Corpus,
    taxonomy: &Taxonomy,
    n_excluded: usize,
) -> Result<Vec<EvalReport>> {
    let mut tasks = Vec::new();
    if !gold.overall.is_empty() {
        tasks.push(EvalTask::Overall);
    }
    let cascade = records.iter().all(|r| r.mode == RunMode::Cascade);
    if cascade && !gold.macro_scores.is_empty() {
        tasks.extend(Aspect::ALL.map(EvalTask::Macro));
    }
    if cascade && gold.spans.is_some() {
        tasks.extend(taxonomy.feature_ids().into_iter().map(EvalTask::MicroFeature));
    }
    tasks
        .iter()
        .map(|t| evaluate(records, gold, t, corpus, n_excluded))
        .collect()
}
