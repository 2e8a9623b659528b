use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{
    AssessmentRecord, BoundStep, CascadeOutput, ContributionBasis, FailureEntry,
    FeatureContribution, LlmPredictor, Predictor, RunMode, Step,
};
use crate::annotation::{FeatureSpan, PREDICTED};
use crate::corpus::{Corpus, Dialogue};
use crate::error::{Error, Result};
use crate::featurize::{macro_vector_of, micro_vector, Normalization};
use crate::llm::{parse_verdict, render_prompt, ParseStatus, PromptContext, TemplateId, VerdictPayload};
use crate::models::{importances, ClassifierModel, Dataset, ImportanceTable};
use crate::taxonomy::{Aspect, MacroScores, Score, Taxonomy};

/// Features listed per record in the report.
pub const TOP_CONTRIBUTIONS: usize = 5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub normalization: Normalization,
    /// Worker threads; 0 picks the machine default.
    pub jobs: usize,
}

/// A per-dialogue failure: the dialogue is skipped and reported.
struct Failed {
    reason: String,
    raw: Option<String>,
}

type Attempt<T> = Result<std::result::Result<T, Failed>>;

/// Errors local to one dialogue become failures; anything else (bad
/// configuration, leakage, rejected credentials) aborts the run.
fn soften<T>(e: Error) -> Attempt<T> {
    match e {
        Error::Gateway { .. }
        | Error::Integrity(_)
        | Error::UnknownFeature(_)
        | Error::Domain(_) => Ok(Err(Failed {
            reason: e.to_string(),
            raw: None,
        })),
        other => Err(other),
    }
}

macro_rules! attempt {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return soften(e),
        }
    };
}

macro_rules! proceed {
    ($e:expr) => {
        match $e? {
            Ok(v) => v,
            Err(f) => return Ok(Err(f)),
        }
    };
}

fn ask(
    p: &LlmPredictor,
    template: TemplateId,
    dialogue: &Dialogue,
    context: &PromptContext,
    taxonomy: &Taxonomy,
) -> Attempt<VerdictPayload> {
    let prompt = render_prompt(template, dialogue, context, &p.demo, taxonomy)?;
    let raw = attempt!(p.client.complete(&prompt));
    let verdict = parse_verdict(template, &raw, dialogue, taxonomy);
    match (verdict.status, verdict.payload) {
        (ParseStatus::Failed, _) | (_, None) => Ok(Err(Failed {
            reason: format!(
                "unparseable {} response: {}",
                template.id(),
                verdict.warnings.join("; ")
            ),
            raw: Some(raw),
        })),
        (status, Some(payload)) => {
            if status == ParseStatus::Repaired {
                log::warn!(
                    "{}: {} response repaired: {}",
                    dialogue.dialogue_id,
                    template.id(),
                    verdict.warnings.join("; ")
                );
            }
            Ok(Ok(payload))
        }
    }
}

fn step1(bound: &BoundStep, d: &Dialogue, taxonomy: &Taxonomy) -> Attempt<Vec<FeatureSpan>> {
    let mut spans = match &bound.predictor {
        Predictor::GoldSpans(map) => {
            let spans = map.get(&d.dialogue_id).cloned().unwrap_or_default();
            for s in &spans {
                attempt!(s.validate(d, taxonomy));
            }
            spans
        }
        Predictor::Llm(p) => {
            let mut spans = Vec::new();
            for template in [TemplateId::SpanTokenLevel, TemplateId::SpanUtteranceLevel] {
                match proceed!(ask(p, template, d, &PromptContext::default(), taxonomy)) {
                    VerdictPayload::Spans { spans: found } => spans.extend(found),
                    _ => unreachable!("span templates yield spans"),
                }
            }
            spans
        }
        _ => unreachable!("checked at binding"),
    };
    for s in &mut spans {
        s.annotator_id = PREDICTED.to_string();
    }
    spans.sort();
    spans.dedup();
    Ok(Ok(spans))
}

fn predict_score(model: &ClassifierModel, x: &[f64]) -> Result<Score> {
    Score::new(model.predict(x)?.label as i64)
}

fn step2(
    bound: &BoundStep,
    d: &Dialogue,
    spans: &[FeatureSpan],
    taxonomy: &Taxonomy,
    normalization: Normalization,
) -> Attempt<MacroScores> {
    match &bound.predictor {
        Predictor::GoldMacro(map) => Ok(map.get(&d.dialogue_id).copied().ok_or_else(|| Failed {
            reason: "no gold macro labels for this dialogue".into(),
            raw: None,
        })),
        Predictor::ClassicalMacro(models) => {
            let mv = attempt!(micro_vector(d, spans, taxonomy, normalization));
            let mut values = [Score::new(1)?; 4];
            for (slot, model) in values.iter_mut().zip(models.iter()) {
                *slot = attempt!(predict_score(model, &mv.values));
            }
            Ok(Ok(MacroScores::new(values[0], values[1], values[2], values[3])))
        }
        Predictor::Llm(p) => {
            let ctx = PromptContext {
                spans: Some(spans.to_vec()),
                macro_scores: None,
            };
            match proceed!(ask(p, TemplateId::MacroLabels, d, &ctx, taxonomy)) {
                VerdictPayload::Macro { scores } => Ok(Ok(scores)),
                _ => unreachable!("macro template yields scores"),
            }
        }
        _ => unreachable!("checked at binding"),
    }
}

/// Step 3. A classical model sees only the macro vector; an llm sees the
/// dialogue plus whatever context is given (none in one-step mode).
fn step3(
    bound: &BoundStep,
    d: &Dialogue,
    context: &PromptContext,
    taxonomy: &Taxonomy,
) -> Attempt<(Score, Option<String>)> {
    match &bound.predictor {
        Predictor::ClassicalOverall(model) => {
            let scores = context.macro_scores.as_ref().expect("cascade supplies macro scores");
            let v = macro_vector_of(&d.dialogue_id, scores);
            Ok(Ok((attempt!(predict_score(model, &v.values)), None)))
        }
        Predictor::Llm(p) => match proceed!(ask(p, TemplateId::OverallScore, d, context, taxonomy)) {
            VerdictPayload::Overall { score, rationale } => Ok(Ok((score, Some(rationale)))),
            _ => unreachable!("overall template yields a score"),
        },
        _ => unreachable!("checked at binding"),
    }
}

fn failure(d: &Dialogue, step: Step, f: Failed) -> FailureEntry {
    FailureEntry {
        dialogue_id: d.dialogue_id.clone(),
        step,
        reason: f.reason,
        raw_response: f.raw,
    }
}

type Outcome = std::result::Result<AssessmentRecord, FailureEntry>;

fn cascade_one(
    steps: &[BoundStep; 3],
    d: &Dialogue,
    taxonomy: &Taxonomy,
    normalization: Normalization,
) -> Result<Outcome> {
    let spans = match step1(&steps[0], d, taxonomy)? {
        Ok(s) => s,
        Err(f) => return Ok(Err(failure(d, Step::MicroSpans, f))),
    };
    let macro_scores = match step2(&steps[1], d, &spans, taxonomy, normalization)? {
        Ok(m) => m,
        Err(f) => return Ok(Err(failure(d, Step::MacroLabels, f))),
    };
    let context = PromptContext {
        spans: Some(spans),
        macro_scores: Some(macro_scores),
    };
    let (overall, rationale) = match step3(&steps[2], d, &context, taxonomy)? {
        Ok(v) => v,
        Err(f) => return Ok(Err(failure(d, Step::Overall, f))),
    };
    Ok(Ok(AssessmentRecord {
        dialogue_id: d.dialogue_id.clone(),
        mode: RunMode::Cascade,
        spans: context.spans.expect("set above"),
        macro_scores: Some(macro_scores),
        overall,
        rationale,
        provenance: steps.iter().map(|s| s.provenance.clone()).collect(),
        contribution_basis: None,
        top_features: Vec::new(),
    }))
}

fn run_parallel(
    corpus: &Corpus,
    jobs: usize,
    f: impl Fn(&Dialogue) -> Result<Outcome> + Sync,
) -> Result<(Vec<AssessmentRecord>, Vec<FailureEntry>)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<Outcome>> = pool.install(|| corpus.dialogues().par_iter().map(&f).collect());
    let (mut records, mut failures) = (Vec::new(), Vec::new());
    for outcome in outcomes {
        match outcome? {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    Ok((records, failures))
}

/// The model's own importances; naive Bayes, which has none, is scored by
/// permutation against its predictions on the run's inputs.
fn model_importance(model: &ClassifierModel, x: Vec<Vec<f64>>, y: Vec<u8>) -> Result<ImportanceTable> {
    let eval = Dataset::new(model.feature_names.clone(), x, y)?;
    importances(model, Some(&eval))
}

fn rank(mut contributions: Vec<FeatureContribution>) -> Vec<FeatureContribution> {
    contributions.retain(|c| c.value > 0.0);
    contributions.sort_by(|a, b| b.value.total_cmp(&a.value).then_with(|| a.feature_id.cmp(&b.feature_id)));
    contributions.truncate(TOP_CONTRIBUTIONS);
    contributions
}

fn attach_contributions(
    records: &mut [AssessmentRecord],
    step2: &BoundStep,
    corpus: &Corpus,
    taxonomy: &Taxonomy,
    normalization: Normalization,
) -> Result<()> {
    let Predictor::ClassicalMacro(models) = &step2.predictor else {
        for r in records.iter_mut() {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for s in &r.spans {
                *counts.entry(s.feature_id.as_str()).or_default() += 1;
            }
            let ranked = rank(
                counts
                    .into_iter()
                    .map(|(f, c)| FeatureContribution {
                        feature_id: f.to_string(),
                        value: c as f64,
                    })
                    .collect(),
            );
            r.contribution_basis = Some(ContributionBasis::SpanCount);
            r.top_features = ranked;
        }
        return Ok(());
    };
    if records.is_empty() {
        return Ok(());
    }
    let vectors = records
        .iter()
        .map(|r| {
            let d = corpus.get(&r.dialogue_id).expect("record from corpus");
            micro_vector(d, &r.spans, taxonomy, normalization).map(|v| v.values)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut weights = vec![0.0; taxonomy.len()];
    for (model, aspect) in models.iter().zip(Aspect::ALL) {
        let y = records
            .iter()
            .map(|r| r.macro_scores.expect("cascade record").get(aspect).get())
            .collect();
        let table = model_importance(model, vectors.clone(), y)?;
        for (w, name) in weights.iter_mut().zip(&model.feature_names) {
            *w += table.scores.get(name).copied().unwrap_or(0.0) / 4.0;
        }
    }
    for (r, values) in records.iter_mut().zip(&vectors) {
        r.contribution_basis = Some(ContributionBasis::ImportanceTimesValue);
        r.top_features = rank(
            taxonomy
                .feature_ids()
                .into_iter()
                .zip(weights.iter().zip(values))
                .map(|(feature_id, (w, v))| FeatureContribution {
                    feature_id,
                    value: w * v,
                })
                .collect(),
        );
    }
    Ok(())
}

fn overall_importance(step3: &BoundStep, records: &[AssessmentRecord]) -> Result<Option<ImportanceTable>> {
    let Predictor::ClassicalOverall(model) = &step3.predictor else {
        return Ok(None);
    };
    if records.is_empty() {
        return Ok(None);
    }
    let x = records
        .iter()
        .map(|r| macro_vector_of(&r.dialogue_id, &r.macro_scores.expect("cascade record")).values.to_vec())
        .collect();
    let y = records.iter().map(|r| r.overall.get()).collect();
    model_importance(model, x, y).map(Some)
}

/// Runs spans, then macro labels, then the overall score, each step fed by
/// the previous one. Every dialogue yields a record or a failure entry.
pub fn run_cascade(
    corpus: &Corpus,
    steps: &[BoundStep; 3],
    taxonomy: &Taxonomy,
    options: &RunOptions,
) -> Result<CascadeOutput> {
    for (bound, expected) in steps.iter().zip(Step::ALL) {
        if bound.provenance.step != expected {
            return Err(Error::Config(format!(
                "binding for step {} given in position of step {expected}",
                bound.provenance.step
            )));
        }
    }
    let (mut records, failures) = run_parallel(corpus, options.jobs, |d| {
        cascade_one(steps, d, taxonomy, options.normalization)
    })?;
    attach_contributions(&mut records, &steps[1], corpus, taxonomy, options.normalization)?;
    let macro_importance = overall_importance(&steps[2], &records)?;
    let labels: Vec<&str> = steps.iter().map(|s| s.provenance.label.as_str()).collect();
    Ok(CascadeOutput {
        mode: RunMode::Cascade,
        run_label: labels.join("+"),
        steps: steps.iter().map(|s| s.provenance.clone()).collect(),
        normalization: options.normalization,
        records,
        failures,
        macro_importance,
    })
}

/// Predicts the overall score from the dialogue alone.
pub fn run_onestep(
    corpus: &Corpus,
    step: &BoundStep,
    taxonomy: &Taxonomy,
    options: &RunOptions,
) -> Result<CascadeOutput> {
    if step.provenance.step != Step::Overall || !matches!(step.predictor, Predictor::Llm(_)) {
        return Err(Error::Config(
            "one-step prediction needs an llm binding for the overall step; classical overall models consume macro scores"
                .into(),
        ));
    }
    let (records, failures) = run_parallel(corpus, options.jobs, |d| {
        Ok(match step3(step, d, &PromptContext::default(), taxonomy)? {
            Ok((overall, rationale)) => Ok(AssessmentRecord {
                dialogue_id: d.dialogue_id.clone(),
                mode: RunMode::OneStep,
                spans: Vec::new(),
                macro_scores: None,
                overall,
                rationale,
                provenance: vec![step.provenance.clone()],
                contribution_basis: None,
                top_features: Vec::new(),
            }),
            Err(f) => Err(failure(d, Step::Overall, f)),
        })
    })?;
    Ok(CascadeOutput {
        mode: RunMode::OneStep,
        run_label: format!("{} (One-step)", step.provenance.label),
        steps: vec![step.provenance.clone()],
        normalization: options.normalization,
        records,
        failures,
        macro_importance: None,
    })
}
