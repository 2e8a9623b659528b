use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;

use dialeval::annotation::{
    adjudicate_overall, aggregate_spans, macro_agreement, micro_agreement, micro_agreement_per_feature,
    overall_agreement, resolve_macro_annotations, AgreementReport,
};
use dialeval::corpus::{load_corpus, save_corpus, split_corpus, Grouping, SplitSpec};
use dialeval::featurize::{macro_vector_of, micro_vector, FeatureMatrix, Normalization};
use dialeval::importance_analysis::{
    aspect_specific, aspect_specific_grid, common_features, common_features_grid, macro_importance_grid,
    AspectSpecificSet, AspectWeightTable, CommonFeatureSet,
};
use dialeval::jsonl::{read_lines, read_text, to_canonical_pretty, write_lines, write_text};
use dialeval::models::{
    importances, load_model, save_model, train, ClassifierModel, Dataset, ImportanceTable, ModelKind,
};
use dialeval::pipeline::{
    bind, evaluate, evaluate_all, read_run, report, run_cascade, run_onestep, write_run, BindingKind, BoundStep,
    EvalReport, EvalTask, GoldLabels, PredictorBinding, RunManifest, RunOptions, Step, ASPECT_MODEL_FILES,
};
use dialeval::table::Grid;
use dialeval::{Aspect, Corpus, Error, FeatureSpan, MacroAnnotation, OverallAnnotation, Taxonomy};

use crate::config::{pick, require, OutputFormat, RunConfig};
use crate::{
    AgreementArgs, BindingArgs, CascadeArgs, Cli, Command, EvaluateArgs, FeatureLevel, FeaturizeArgs, GroupingArg,
    ImportanceArgs, IngestArgs, Level, MergeArgs, ModelArg, NormalizationArg, OnestepArgs, ReportArgs, SplitArgs,
    Target, TrainArgs,
};

struct Ctx {
    cfg: RunConfig,
    format: OutputFormat,
    jobs: usize,
    taxonomy: Taxonomy,
}

impl Ctx {
    /// Prints `text` or the canonical JSON of `value`, per `--format`.
    fn emit<T: Serialize>(&self, text: &str, value: &T) -> Result<()> {
        match self.format {
            OutputFormat::Text => print!("{text}"),
            OutputFormat::Machine => print!("{}", to_canonical_pretty(value)?),
        }
        Ok(())
    }

    fn corpus_path(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        let path = require(flag, self.cfg.paths.corpus.clone(), "DIALEVAL_CORPUS", "--corpus")?;
        existing(&path)?;
        Ok(path)
    }

    fn output_dir(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        let dir = require(flag, self.cfg.paths.output.clone(), "DIALEVAL_OUTPUT", "--output-dir")?;
        std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        Ok(dir)
    }

    fn normalization(&self, flag: Option<NormalizationArg>) -> Normalization {
        match flag {
            Some(NormalizationArg::PerTurn) => Normalization::PerTurn,
            Some(NormalizationArg::PerToken) => Normalization::PerToken,
            None => self.cfg.run.normalization.unwrap_or_default(),
        }
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Inputs are checked up front so no command fails halfway through.
fn existing(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(io_error(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input does not exist"),
        )
        .into());
    }
    Ok(())
}

fn all_existing<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> Result<()> {
    paths.into_iter().try_for_each(|p| existing(p))
}

/// Commands never write over their own inputs.
fn distinct(inputs: &[&Path], output: &Path) -> Result<()> {
    let canonical = |p: &Path| p.canonicalize().ok();
    if let Some(out) = canonical(output) {
        if inputs.iter().any(|i| canonical(i).as_ref() == Some(&out)) {
            return Err(Error::Config(format!("output {} is also an input", output.display())).into());
        }
    }
    Ok(())
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    Ok(())
}

fn init_logging(level: u8) {
    let filter = match level {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(filter)
        .format_timestamp(None)
        .format_target(false)
        .try_init();
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    init_logging(if cli.verbose > 0 { cli.verbose } else { cfg.verbosity.unwrap_or(0) });
    let ctx = Ctx {
        format: pick(cli.format, cfg.format, "DIALEVAL_FORMAT")?.unwrap_or_default(),
        jobs: pick(cli.jobs, cfg.jobs, "DIALEVAL_JOBS")?.unwrap_or(0),
        taxonomy: Taxonomy::builtin(),
        cfg,
    };
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, a),
        Command::MergeAnnotations(a) => merge_annotations(&ctx, a),
        Command::Agreement(a) => agreement(&ctx, a),
        Command::Split(a) => split(&ctx, a),
        Command::Featurize(a) => featurize(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Importance(a) => importance(&ctx, a),
        Command::RunCascade(a) => run_cascade_cmd(&ctx, a),
        Command::RunOnestep(a) => run_onestep_cmd(&ctx, a),
        Command::Evaluate(a) => evaluate_cmd(&ctx, a),
        Command::Report(a) => report_cmd(&ctx, a),
    }
}

#[derive(Serialize)]
struct IngestSummary {
    dialogues: usize,
    turns: usize,
    conversations: usize,
    output: PathBuf,
}

fn ingest(ctx: &Ctx, a: IngestArgs) -> Result<()> {
    existing(&a.input)?;
    distinct(&[&a.input], &a.output)?;
    let corpus = load_corpus(&a.input)?;
    create_parent(&a.output)?;
    save_corpus(&corpus, &a.output)?;
    let summary = IngestSummary {
        dialogues: corpus.len(),
        turns: corpus.dialogues().iter().map(|d| d.turns.len()).sum(),
        conversations: corpus.dialogues().iter().map(|d| &d.conversation_id).collect::<BTreeSet<_>>().len(),
        output: a.output,
    };
    let text = format!(
        "ingested {} dialogues ({} turns, {} conversations) into {}\n",
        summary.dialogues,
        summary.turns,
        summary.conversations,
        summary.output.display()
    );
    ctx.emit(&text, &summary)
}

#[derive(Serialize, Default)]
struct MergeSummary {
    merged_spans: Option<usize>,
    macro_dialogues: Option<usize>,
    macro_pooled_aspects: Option<usize>,
    overall_agreed: Option<usize>,
    overall_adjudication: Option<usize>,
    output_dir: PathBuf,
}

/// Groups spans per dialogue and annotator; at most two annotators.
fn merge_spans(corpus: &Corpus, spans: &[FeatureSpan], taxonomy: &Taxonomy) -> Result<Vec<FeatureSpan>> {
    let mut by_dialogue: BTreeMap<&str, BTreeMap<&str, Vec<FeatureSpan>>> = BTreeMap::new();
    for s in spans {
        let d = corpus
            .get(&s.dialogue_id)
            .ok_or_else(|| Error::Integrity(format!("span for unknown dialogue `{}`", s.dialogue_id)))?;
        s.validate(d, taxonomy)?;
        by_dialogue
            .entry(&s.dialogue_id)
            .or_default()
            .entry(&s.annotator_id)
            .or_default()
            .push(s.clone());
    }
    let mut merged = Vec::new();
    for d in corpus.dialogues() {
        let Some(coders) = by_dialogue.get(d.dialogue_id.as_str()) else {
            continue;
        };
        if coders.len() > 2 {
            return Err(Error::Integrity(format!(
                "dialogue `{}` has spans from {} annotators; exactly two are merged",
                d.dialogue_id,
                coders.len()
            ))
            .into());
        }
        let mut sets = coders.values();
        let first = sets.next().cloned().unwrap_or_default();
        let second = sets.next().cloned().unwrap_or_default();
        merged.extend(aggregate_spans(&first, &second, taxonomy)?);
    }
    Ok(merged)
}

fn merge_annotations(ctx: &Ctx, a: MergeArgs) -> Result<()> {
    if a.spans.is_none() && a.macro_labels.is_none() && a.overall.is_none() {
        return Err(Error::Config("give at least one of --spans, --macro-labels, --overall".into()).into());
    }
    let corpus_path = ctx.corpus_path(a.corpus)?;
    all_existing(a.spans.iter().chain(&a.macro_labels).chain(&a.overall))?;
    let corpus = load_corpus(&corpus_path)?;
    let dir = ctx.output_dir(a.output_dir)?;
    let mut summary = MergeSummary {
        output_dir: dir.clone(),
        ..MergeSummary::default()
    };
    let mut text = String::new();
    if let Some(path) = &a.spans {
        let merged = merge_spans(&corpus, &read_lines(path)?, &ctx.taxonomy)?;
        write_lines(&dir.join("spans.jsonl"), &merged)?;
        let _ = writeln!(text, "spans: {} merged spans -> spans.jsonl", merged.len());
        summary.merged_spans = Some(merged.len());
    }
    if let Some(path) = &a.macro_labels {
        let resolved = resolve_macro_annotations(&corpus, &read_lines(path)?)?;
        let pooled: usize = resolved.iter().map(|r| r.pooled.len()).sum();
        let annotations: Vec<MacroAnnotation> = resolved.iter().map(|r| r.to_annotation()).collect();
        write_lines(&dir.join("macro.jsonl"), &annotations)?;
        let _ = writeln!(
            text,
            "macro: {} dialogues, {pooled} aspect labels resolved from the conversation pool -> macro.jsonl",
            resolved.len()
        );
        summary.macro_dialogues = Some(resolved.len());
        summary.macro_pooled_aspects = Some(pooled);
    }
    if let Some(path) = &a.overall {
        let adjudication = adjudicate_overall(&read_lines::<OverallAnnotation>(path)?)?;
        write_lines(&dir.join("overall.jsonl"), &adjudication.agreed)?;
        write_lines(&dir.join("adjudication.jsonl"), &adjudication.queue)?;
        let _ = writeln!(
            text,
            "overall: {} agreed -> overall.jsonl, {} awaiting adjudication -> adjudication.jsonl",
            adjudication.agreed.len(),
            adjudication.queue.len()
        );
        summary.overall_agreed = Some(adjudication.agreed.len());
        summary.overall_adjudication = Some(adjudication.queue.len());
    }
    ctx.emit(&text, &summary)
}

#[derive(Serialize)]
struct AgreementOutput {
    report: AgreementReport,
    per_feature: Option<Vec<(String, Option<AgreementReport>)>>,
}

fn agreement(ctx: &Ctx, a: AgreementArgs) -> Result<()> {
    existing(&a.annotations)?;
    let (report, per_feature) = match a.level {
        Level::Micro => {
            let corpus = load_corpus(&ctx.corpus_path(a.corpus)?)?;
            let spans: Vec<FeatureSpan> = read_lines(&a.annotations)?;
            let per_feature = if a.per_feature {
                Some(micro_agreement_per_feature(&corpus, &spans, &ctx.taxonomy)?)
            } else {
                None
            };
            (micro_agreement(&corpus, &spans, &ctx.taxonomy)?, per_feature)
        }
        Level::Macro => (macro_agreement(&read_lines(&a.annotations)?)?, None),
        Level::Overall => (overall_agreement(&read_lines(&a.annotations)?)?, None),
    };
    let level = format!("{:?}", report.level).to_lowercase();
    let mut text = format!(
        "level: {level}\nunits: {}\nkrippendorff alpha: {:.4}\npearson r: {:.4}\n",
        report.n_units, report.alpha, report.pearson_r
    );
    if let Some(rows) = &per_feature {
        let mut grid = Grid::new(
            "Micro-level agreement per feature",
            ["Feature", "Alpha", "Pearson r"].map(String::from).to_vec(),
        );
        for (f, r) in rows {
            let (alpha, r) = r.as_ref().map_or(("n/a".into(), "n/a".into()), |r| {
                (format!("{:.4}", r.alpha), format!("{:.4}", r.pearson_r))
            });
            grid.push(vec![f.clone(), alpha, r]);
        }
        text.push('\n');
        text.push_str(&grid.to_text());
    }
    ctx.emit(&text, &AgreementOutput { report, per_feature })
}

#[derive(Serialize)]
struct SplitRecord {
    ratio: String,
    seed: u64,
    grouping: Grouping,
    sizes: BTreeMap<&'static str, usize>,
    warnings: Vec<String>,
}

fn split(ctx: &Ctx, a: SplitArgs) -> Result<()> {
    let corpus_path = ctx.corpus_path(a.corpus)?;
    let s = &ctx.cfg.split;
    let ratio = pick(a.ratio, s.ratio.clone(), "DIALEVAL_SPLIT_RATIO")?.unwrap_or_else(|| "7:1:2".into());
    let seed = pick(a.seed, s.seed, "DIALEVAL_SEED")?.unwrap_or(0);
    let grouping = match a.grouping {
        Some(GroupingArg::ByConversation) => Grouping::ByConversation,
        Some(GroupingArg::PerDialogue) => Grouping::PerDialogue,
        None => s.grouping.unwrap_or_default(),
    };
    let spec = SplitSpec::parse_weights(&ratio, seed)?;
    let corpus = load_corpus(&corpus_path)?;
    let dir = ctx.output_dir(a.output_dir)?;
    let parts = split_corpus(&corpus, &spec, grouping)?;
    let mut sizes = BTreeMap::new();
    for (name, part) in [("train", &parts.train), ("dev", &parts.dev), ("test", &parts.test)] {
        let path = dir.join(format!("{name}.jsonl"));
        distinct(&[&corpus_path], &path)?;
        save_corpus(part, &path)?;
        sizes.insert(name, part.len());
    }
    let record = SplitRecord {
        ratio,
        seed,
        grouping,
        sizes,
        warnings: parts.warnings,
    };
    write_text(&dir.join("split.json"), &to_canonical_pretty(&record)?)?;
    let text = format!(
        "train {}, dev {}, test {} dialogues (ratio {}, seed {}) -> {}\n",
        record.sizes["train"],
        record.sizes["dev"],
        record.sizes["test"],
        record.ratio,
        seed,
        dir.display()
    );
    ctx.emit(&text, &record)
}

fn macro_labels_by_id(path: &Path) -> Result<BTreeMap<String, MacroAnnotation>> {
    let mut map = BTreeMap::new();
    for a in read_lines::<MacroAnnotation>(path)? {
        if let Some(previous) = map.insert(a.dialogue_id.clone(), a.clone()) {
            if previous.scores != a.scores {
                return Err(Error::Integrity(format!(
                    "conflicting macro labels for `{}`; run merge-annotations first",
                    a.dialogue_id
                ))
                .into());
            }
        }
    }
    Ok(map)
}

fn overall_labels_by_id(path: &Path) -> Result<BTreeMap<String, u8>> {
    let mut map = BTreeMap::new();
    for a in read_lines::<OverallAnnotation>(path)? {
        if let Some(previous) = map.insert(a.dialogue_id.clone(), a.score.get()) {
            if previous != a.score.get() {
                return Err(Error::Integrity(format!(
                    "conflicting overall scores for `{}`; adjudicate them first",
                    a.dialogue_id
                ))
                .into());
            }
        }
    }
    Ok(map)
}

fn featurize(ctx: &Ctx, a: FeaturizeArgs) -> Result<()> {
    let corpus_path = ctx.corpus_path(a.corpus)?;
    let corpus = load_corpus(&corpus_path)?;
    let matrix = match a.level {
        FeatureLevel::Micro => {
            let spans_path = require(a.spans, ctx.cfg.paths.spans.clone(), "DIALEVAL_SPANS", "--spans")?;
            existing(&spans_path)?;
            distinct(&[&corpus_path, &spans_path], &a.output)?;
            let mut by_dialogue: BTreeMap<String, Vec<FeatureSpan>> = BTreeMap::new();
            for s in read_lines::<FeatureSpan>(&spans_path)? {
                by_dialogue.entry(s.dialogue_id.clone()).or_default().push(s);
            }
            let normalization = ctx.normalization(a.normalization);
            let mut vectors = Vec::with_capacity(corpus.len());
            for d in corpus.dialogues() {
                let own = by_dialogue.get(&d.dialogue_id).map(Vec::as_slice).unwrap_or_default();
                vectors.push(micro_vector(d, own, &ctx.taxonomy, normalization)?);
            }
            FeatureMatrix::micro(&vectors, &ctx.taxonomy)?
        }
        FeatureLevel::Macro => {
            let path = require(a.macro_labels, ctx.cfg.paths.macro_labels.clone(), "DIALEVAL_MACRO_LABELS", "--macro-labels")?;
            existing(&path)?;
            distinct(&[&corpus_path, &path], &a.output)?;
            let labels = macro_labels_by_id(&path)?;
            let vectors = corpus
                .dialogues()
                .iter()
                .map(|d| {
                    labels
                        .get(&d.dialogue_id)
                        .map(|m| macro_vector_of(&d.dialogue_id, &m.scores))
                        .ok_or_else(|| Error::Integrity(format!("no macro labels for `{}`", d.dialogue_id)))
                })
                .collect::<dialeval::Result<Vec<_>>>()?;
            FeatureMatrix::macro_level(&vectors)?
        }
    };
    create_parent(&a.output)?;
    matrix.save(&a.output)?;
    let text = format!(
        "{} rows x {} features -> {}\n",
        matrix.rows.len(),
        matrix.feature_names.len(),
        a.output.display()
    );
    ctx.emit(
        &text,
        &serde_json::json!({"rows": matrix.rows.len(), "features": matrix.feature_names, "output": a.output}),
    )
}

/// Labels aligned with the matrix rows; every row needs a label.
fn dataset(matrix: &FeatureMatrix, labels: &BTreeMap<String, u8>, what: &str) -> Result<Dataset> {
    let mut x = Vec::with_capacity(matrix.rows.len());
    let mut y = Vec::with_capacity(matrix.rows.len());
    for (id, row) in &matrix.rows {
        let label = labels
            .get(id)
            .ok_or_else(|| Error::Integrity(format!("feature row `{id}` has no {what} label")))?;
        x.push(row.clone());
        y.push(*label);
    }
    Ok(Dataset::new(matrix.feature_names.clone(), x, y)?)
}

fn aspect_labels(labels: &BTreeMap<String, MacroAnnotation>, aspect: Aspect) -> BTreeMap<String, u8> {
    labels.iter().map(|(id, m)| (id.clone(), m.scores.get(aspect).get())).collect()
}

#[derive(Serialize)]
struct TrainedModel {
    target: String,
    model_kind: ModelKind,
    seed: u64,
    n_rows: usize,
    class_domain: Vec<u8>,
    fingerprint: String,
    path: PathBuf,
}

fn train_cmd(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    all_existing([&a.features, &a.labels])?;
    let model = match a.model {
        Some(ModelArg::Logistic) => Some(ModelKind::Logistic),
        Some(ModelArg::NaiveBayes) => Some(ModelKind::NaiveBayes),
        Some(ModelArg::RandomForest) => Some(ModelKind::RandomForest),
        None => None,
    };
    let kind = pick(model, ctx.cfg.train.model, "DIALEVAL_MODEL")?.unwrap_or(ModelKind::Logistic);
    let seed = pick(a.seed, ctx.cfg.train.seed, "DIALEVAL_SEED")?.unwrap_or(0);
    let cfg = ctx.cfg.train_config(kind, seed);
    cfg.validate()?;
    let matrix = FeatureMatrix::load(&a.features)?;

    let aspect = |t: Target| match t {
        Target::Topic => Some(Aspect::Topic),
        Target::Tone => Some(Aspect::Tone),
        Target::Opening => Some(Aspect::Opening),
        Target::Closing => Some(Aspect::Closing),
        Target::Aspects | Target::Overall => None,
    };
    let jobs: Vec<(String, Dataset, PathBuf)> = match a.target {
        Target::Overall => {
            let labels = overall_labels_by_id(&a.labels)?;
            vec![("overall".into(), dataset(&matrix, &labels, "overall")?, a.output.clone())]
        }
        Target::Aspects => {
            let labels = macro_labels_by_id(&a.labels)?;
            Aspect::ALL
                .iter()
                .zip(ASPECT_MODEL_FILES)
                .map(|(&asp, file)| {
                    Ok((asp.id().to_string(), dataset(&matrix, &aspect_labels(&labels, asp), asp.id())?, a.output.join(file)))
                })
                .collect::<Result<_>>()?
        }
        single => {
            let asp = aspect(single).expect("single aspect target");
            let labels = macro_labels_by_id(&a.labels)?;
            vec![(asp.id().to_string(), dataset(&matrix, &aspect_labels(&labels, asp), asp.id())?, a.output.clone())]
        }
    };
    let mut trained = Vec::new();
    for (target, data, path) in jobs {
        distinct(&[&a.features, &a.labels], &path)?;
        let model = train(&data, &cfg)?;
        create_parent(&path)?;
        save_model(&model, &path)?;
        trained.push(TrainedModel {
            target,
            model_kind: kind,
            seed,
            n_rows: data.len(),
            class_domain: model.class_domain.clone(),
            fingerprint: model.fingerprint,
            path,
        });
    }
    let mut text = String::new();
    for t in &trained {
        let _ = writeln!(text, "{} {} {} -> {}", t.target, t.model_kind, t.fingerprint, t.path.display());
    }
    ctx.emit(&text, &trained)
}

fn load_aspect_models(dir: &Path) -> Result<[ClassifierModel; 4]> {
    let models = ASPECT_MODEL_FILES
        .iter()
        .map(|f| load_model(&dir.join(f)))
        .collect::<dialeval::Result<Vec<_>>>()?;
    let kind = models[0].kind;
    if models.iter().any(|m| m.kind != kind) {
        return Err(Error::Config(format!("{} mixes classifier kinds", dir.display())).into());
    }
    Ok(models.try_into().expect("four aspect files"))
}

#[derive(Serialize)]
struct AspectAnalysis {
    table: AspectWeightTable,
    common: CommonFeatureSet,
    specific: BTreeMap<Aspect, AspectSpecificSet>,
}

#[derive(Serialize)]
struct ImportanceOutput {
    aspect_models: Vec<AspectAnalysis>,
    overall_models: Vec<ImportanceTable>,
}

fn importance(ctx: &Ctx, a: ImportanceArgs) -> Result<()> {
    if a.aspect_models.is_empty() && a.overall_model.is_empty() {
        return Err(Error::Config("give --aspect-models or --overall-model".into()).into());
    }
    all_existing(
        a.aspect_models
            .iter()
            .chain(&a.overall_model)
            .chain(&a.eval_features)
            .chain(&a.eval_labels)
            .chain(&a.eval_macro_features)
            .chain(&a.eval_overall),
    )?;
    let micro_eval = match (&a.eval_features, &a.eval_labels) {
        (Some(f), Some(l)) => Some((FeatureMatrix::load(f)?, macro_labels_by_id(l)?)),
        _ => None,
    };
    let macro_eval = match (&a.eval_macro_features, &a.eval_overall) {
        (Some(f), Some(l)) => Some(dataset(&FeatureMatrix::load(f)?, &overall_labels_by_id(l)?, "overall")?),
        _ => None,
    };

    let mut out = ImportanceOutput {
        aspect_models: Vec::new(),
        overall_models: Vec::new(),
    };
    for dir in &a.aspect_models {
        let models = load_aspect_models(dir)?;
        let mut tables = BTreeMap::new();
        for (model, aspect) in models.iter().zip(Aspect::ALL) {
            let eval = match &micro_eval {
                Some((m, labels)) => Some(dataset(m, &aspect_labels(labels, aspect), aspect.id())?),
                None => None,
            };
            tables.insert(aspect, importances(model, eval.as_ref())?);
        }
        let table = AspectWeightTable::from_importances(models[0].kind, &tables, &ctx.taxonomy)?;
        let common = common_features(&table)?;
        let specific = Aspect::ALL
            .iter()
            .map(|&asp| Ok((asp, aspect_specific(&table, asp, &common)?)))
            .collect::<dialeval::Result<_>>()?;
        out.aspect_models.push(AspectAnalysis { table, common, specific });
    }
    for path in &a.overall_model {
        let model = load_model(path)?;
        out.overall_models.push(importances(&model, macro_eval.as_ref())?);
    }

    let mut text = String::new();
    if !out.aspect_models.is_empty() {
        let columns: Vec<_> = out.aspect_models.iter().map(|m| (m.table.model_kind, m.common.clone())).collect();
        text.push_str(&common_features_grid(&columns, &ctx.taxonomy).to_text());
        let blocks: Vec<_> = out.aspect_models.iter().map(|m| (m.table.model_kind, m.specific.clone())).collect();
        let depth = out
            .aspect_models
            .iter()
            .flat_map(|m| m.specific.values().map(|s| s.features.len()))
            .max()
            .unwrap_or(0);
        text.push('\n');
        text.push_str(&aspect_specific_grid(&blocks, &ctx.taxonomy, depth).to_text());
    }
    if !out.overall_models.is_empty() {
        let rows: Vec<_> = out.overall_models.iter().map(|t| (t.model_kind, t.clone())).collect();
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(&macro_importance_grid(&rows)?.to_text());
    }
    ctx.emit(&text, &out)
}

/// Parses `KIND[:PATH]`.
fn parse_binding(step: Step, spec: &str, mock_script: Option<&PathBuf>, ctx: &Ctx) -> Result<PredictorBinding> {
    let (kind, reference) = match spec.split_once(':') {
        Some((k, r)) => (k, Some(PathBuf::from(r))),
        None => (spec, None),
    };
    let kind: BindingKind = kind.parse()?;
    let reference = match (kind, reference) {
        (BindingKind::Llm, None) => mock_script.cloned(),
        (_, r) => r,
    };
    if let Some(r) = &reference {
        existing(r)?;
    }
    let gateway = (kind == BindingKind::Llm).then(|| ctx.cfg.gateway_config()).transpose()?;
    Ok(PredictorBinding {
        step,
        kind,
        reference,
        label: None,
        gateway,
    })
}

#[derive(Serialize)]
struct RunSummary {
    run_label: String,
    records: usize,
    failures: usize,
    output_dir: PathBuf,
}

/// Binds, runs and writes; shared by both run commands.
fn execute_run(
    ctx: &Ctx,
    common: BindingArgs,
    specs: Vec<(Step, String)>,
    run: impl FnOnce(&Corpus, &[BoundStep], &RunOptions) -> dialeval::Result<dialeval::pipeline::CascadeOutput>,
) -> Result<()> {
    let corpus = load_corpus(&ctx.corpus_path(common.corpus)?)?;
    let mock = common.mock_script.or_else(|| ctx.cfg.run.mock_script.clone());
    if let Some(m) = &mock {
        existing(m)?;
    }
    let bindings = specs
        .iter()
        .map(|(step, spec)| parse_binding(*step, spec, mock.as_ref(), ctx))
        .collect::<Result<Vec<_>>>()?;
    let dir = ctx.output_dir(common.output_dir)?;
    let steps = bindings
        .iter()
        .map(|b| bind(b, &ctx.taxonomy))
        .collect::<dialeval::Result<Vec<_>>>()?;
    let options = RunOptions {
        normalization: ctx.normalization(common.normalization),
        jobs: ctx.jobs,
    };
    let output = run(&corpus, &steps, &options)?;
    let manifest = RunManifest::new(&corpus, &steps.iter().collect::<Vec<_>>(), &output)?;
    write_run(&dir, &manifest, &output)?;
    for f in &output.failures {
        log::warn!("{} failed at {}: {}", f.dialogue_id, f.step, f.reason);
    }
    let summary = RunSummary {
        run_label: output.run_label.clone(),
        records: output.records.len(),
        failures: output.failures.len(),
        output_dir: dir,
    };
    let text = format!(
        "{}: {} records, {} failures -> {}\n",
        summary.run_label,
        summary.records,
        summary.failures,
        summary.output_dir.display()
    );
    ctx.emit(&text, &summary)
}

fn run_cascade_cmd(ctx: &Ctx, a: CascadeArgs) -> Result<()> {
    let r = &ctx.cfg.run;
    let specs = vec![
        (Step::MicroSpans, require(a.step1, r.step1.clone(), "DIALEVAL_STEP1", "--step1")?),
        (Step::MacroLabels, require(a.step2, r.step2.clone(), "DIALEVAL_STEP2", "--step2")?),
        (Step::Overall, require(a.step3, r.step3.clone(), "DIALEVAL_STEP3", "--step3")?),
    ];
    execute_run(ctx, a.common, specs, |corpus, steps, options| {
        let steps: &[BoundStep; 3] = steps.try_into().expect("three bindings");
        run_cascade(corpus, steps, &ctx.taxonomy, options)
    })
}

fn run_onestep_cmd(ctx: &Ctx, a: OnestepArgs) -> Result<()> {
    let kind: BindingKind = a.step3.split(':').next().unwrap_or_default().parse()?;
    if kind != BindingKind::Llm {
        return Err(Error::Config(format!(
            "one-step runs need an llm binding; a {kind} overall predictor requires macro inputs"
        ))
        .into());
    }
    execute_run(ctx, a.common, vec![(Step::Overall, a.step3)], |corpus, steps, options| {
        run_onestep(corpus, &steps[0], &ctx.taxonomy, options)
    })
}

fn evaluate_cmd(ctx: &Ctx, a: EvaluateArgs) -> Result<()> {
    existing(&a.run)?;
    let corpus = load_corpus(&ctx.corpus_path(a.corpus)?)?;
    let p = &ctx.cfg.paths;
    let spans_path = a.gold_spans.or_else(|| p.spans.clone());
    let macro_path = a.gold_macro.or_else(|| p.macro_labels.clone());
    let overall_path = a.gold_overall.or_else(|| p.overall.clone());
    all_existing(spans_path.iter().chain(&macro_path).chain(&overall_path))?;
    let tasks = a
        .task
        .iter()
        .map(|t| {
            let task: EvalTask = t.parse()?;
            if let EvalTask::MicroFeature(f) = &task {
                ctx.taxonomy.resolve(f)?;
            }
            Ok(task)
        })
        .collect::<dialeval::Result<Vec<_>>>()?;

    let (manifest, output) = read_run(&a.run)?;
    let spans = spans_path.as_deref().map(read_lines::<FeatureSpan>).transpose()?;
    let macros: Vec<MacroAnnotation> = macro_path.as_deref().map(read_lines).transpose()?.unwrap_or_default();
    let overall: Vec<OverallAnnotation> = overall_path.as_deref().map(read_lines).transpose()?.unwrap_or_default();
    let gold = GoldLabels::from_annotations(spans, &macros, &overall)?;
    let excluded = manifest.n_failures;
    let evals: Vec<EvalReport> = if tasks.is_empty() {
        evaluate_all(&output.records, &gold, &corpus, &ctx.taxonomy, excluded)?
    } else {
        tasks
            .iter()
            .map(|t| evaluate(&output.records, &gold, t, &corpus, excluded))
            .collect::<dialeval::Result<_>>()?
    };
    if evals.is_empty() {
        return Err(Error::Config("no gold labels given; pass --gold-overall, --gold-macro or --gold-spans".into()).into());
    }
    if let Some(path) = &a.output {
        create_parent(path)?;
        write_text(path, &to_canonical_pretty(&evals)?)?;
    }
    let mut grid = Grid::new(
        format!("Evaluation of {}", output.run_label),
        ["Task", "n", "Accuracy", "Macro-F1", "Headline", "Excluded"].map(String::from).to_vec(),
    );
    for e in &evals {
        grid.push(vec![
            e.task.to_string(),
            e.metrics.n.to_string(),
            format!("{:.3}", e.metrics.accuracy),
            format!("{:.3}", e.metrics.macro_f1),
            format!("{:.3}", e.headline()),
            e.n_excluded.to_string(),
        ]);
    }
    ctx.emit(&grid.to_text(), &evals)
}

fn report_cmd(ctx: &Ctx, a: ReportArgs) -> Result<()> {
    existing(&a.run)?;
    if let Some(e) = &a.evals {
        existing(e)?;
    }
    let (_, output) = read_run(&a.run)?;
    let evals: Vec<EvalReport> = match &a.evals {
        Some(path) => serde_json::from_str(&read_text(path)?)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?,
        None => Vec::new(),
    };
    let r = report(&output, &evals);
    let body = match ctx.format {
        OutputFormat::Text => r.to_text(),
        OutputFormat::Machine => r.to_machine()?,
    };
    match &a.output {
        Some(path) => {
            create_parent(path)?;
            write_text(path, &body)?;
        }
        None => print!("{body}"),
    }
    Ok(())
}
