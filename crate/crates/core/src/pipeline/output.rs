use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BindingKind, BoundStep, CascadeOutput, RunMode, Step, StepProvenance};
use crate::annotation::{FeatureSpan, MacroAnnotation, OverallAnnotation, PREDICTED};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::featurize::Normalization;
use crate::jsonl::{read_lines, read_text, to_canonical_pretty, write_lines, write_text};
use crate::llm::GatewayConfig;

/// Files written by [`write_run`], relative to the output directory.
pub const RUN_FILES: [&str; 6] = [
    "manifest.json",
    "records.jsonl",
    "failures.jsonl",
    "spans.jsonl",
    "macro.jsonl",
    "overall.jsonl",
];

/// Written only when the overall step is a classical model.
pub const IMPORTANCE_FILE: &str = "macro_importance.json";

const RUN_FORMAT: &str = "dialeval-run";
const RUN_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingRecord {
    pub step: Step,
    pub kind: BindingKind,
    pub label: String,
    pub reference: String,
    pub fingerprint: String,
    /// Gateway settings; the credential itself is never recorded, only the
    /// environment variable name.
    pub gateway: Option<GatewayConfig>,
}

impl From<&BoundStep> for BindingRecord {
    fn from(b: &BoundStep) -> Self {
        Self {
            step: b.provenance.step,
            kind: b.provenance.kind,
            label: b.provenance.label.clone(),
            reference: b.reference.clone(),
            fingerprint: b.provenance.fingerprint.clone(),
            gateway: b.gateway.clone(),
        }
    }
}

/// Everything needed to repeat a run. Contains no timestamps, so two runs
/// of the same inputs write identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub mode: RunMode,
    pub run_label: String,
    pub corpus_fingerprint: String,
    pub n_dialogues: usize,
    pub n_records: usize,
    pub n_failures: usize,
    pub normalization: Normalization,
    pub bindings: Vec<BindingRecord>,
    /// Training seeds of the classical models, in binding order.
    pub seeds: Vec<u64>,
}

pub fn corpus_fingerprint(corpus: &Corpus) -> Result<String> {
    Ok(hex::encode(Sha256::digest(corpus.to_jsonl()?.as_bytes())))
}

impl RunManifest {
    pub fn new(corpus: &Corpus, steps: &[&BoundStep], output: &CascadeOutput) -> Result<Self> {
        let seeds = steps
            .iter()
            .flat_map(|s| match &s.predictor {
                super::Predictor::ClassicalMacro(models) => models.iter().map(|m| m.config.seed).collect(),
                super::Predictor::ClassicalOverall(m) => vec![m.config.seed],
                _ => vec![],
            })
            .collect();
        Ok(Self {
            format: RUN_FORMAT.into(),
            version: RUN_VERSION,
            mode: output.mode,
            run_label: output.run_label.clone(),
            corpus_fingerprint: corpus_fingerprint(corpus)?,
            n_dialogues: corpus.len(),
            n_records: output.records.len(),
            n_failures: output.failures.len(),
            normalization: output.normalization,
            bindings: steps.iter().map(|s| BindingRecord::from(*s)).collect(),
            seeds,
        })
    }
}

/// Writes the manifest, records, failures and the prediction sidecars
/// (spans, macro and overall labels in annotation format, annotator
/// `predicted`).
pub fn write_run(dir: &Path, manifest: &RunManifest, output: &CascadeOutput) -> Result<()> {
    write_text(&dir.join(RUN_FILES[0]), &to_canonical_pretty(manifest)?)?;
    write_lines(&dir.join(RUN_FILES[1]), &output.records)?;
    write_lines(&dir.join(RUN_FILES[2]), &output.failures)?;
    let spans: Vec<&FeatureSpan> = output.records.iter().flat_map(|r| &r.spans).collect();
    write_lines(&dir.join(RUN_FILES[3]), &spans)?;
    let macros: Vec<MacroAnnotation> = output
        .records
        .iter()
        .filter_map(|r| {
            r.macro_scores.map(|scores| MacroAnnotation {
                dialogue_id: r.dialogue_id.clone(),
                annotator_id: PREDICTED.into(),
                scores,
            })
        })
        .collect();
    write_lines(&dir.join(RUN_FILES[4]), &macros)?;
    let overall: Vec<OverallAnnotation> = output
        .records
        .iter()
        .map(|r| OverallAnnotation {
            dialogue_id: r.dialogue_id.clone(),
            annotator_id: PREDICTED.into(),
            score: r.overall,
            justification: r
                .rationale
                .clone()
                .filter(|t| !t.trim().is_empty())
                .unwrap_or_else(|| format!("predicted by {}", output.run_label)),
        })
        .collect();
    write_lines(&dir.join(RUN_FILES[5]), &overall)?;
    let importance = dir.join(IMPORTANCE_FILE);
    match &output.macro_importance {
        Some(table) => write_text(&importance, &to_canonical_pretty(table)?)?,
        None if importance.exists() => {
            std::fs::remove_file(&importance).map_err(|e| Error::io(&importance, e))?
        }
        None => {}
    }
    Ok(())
}

/// Reads back a directory written by [`write_run`].
pub fn read_run(dir: &Path) -> Result<(RunManifest, CascadeOutput)> {
    let path = dir.join(RUN_FILES[0]);
    let manifest: RunManifest =
        serde_json::from_str(&read_text(&path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if manifest.format != RUN_FORMAT || manifest.version != RUN_VERSION {
        return Err(Error::Format(format!(
            "{} is `{}` version {}, expected `{RUN_FORMAT}` version {RUN_VERSION}",
            path.display(),
            manifest.format,
            manifest.version
        )));
    }
    let importance = dir.join(IMPORTANCE_FILE);
    let macro_importance = if importance.exists() {
        let text = read_text(&importance)?;
        Some(serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", importance.display())))?)
    } else {
        None
    };
    let output = CascadeOutput {
        mode: manifest.mode,
        run_label: manifest.run_label.clone(),
        steps: manifest
            .bindings
            .iter()
            .map(|b| StepProvenance {
                step: b.step,
                kind: b.kind,
                label: b.label.clone(),
                fingerprint: b.fingerprint.clone(),
            })
            .collect(),
        normalization: manifest.normalization,
        records: read_lines(&dir.join(RUN_FILES[1]))?,
        failures: read_lines(&dir.join(RUN_FILES[2]))?,
        macro_importance,
    };
    if output.records.len() != manifest.n_records || output.failures.len() != manifest.n_failures {
        return Err(Error::Integrity(format!(
            "run directory {} disagrees with its manifest record counts",
            dir.display()
        )));
    }
    Ok((manifest, output))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::llm::{Client, Demo, MockGateway};
    use crate::pipeline::{run_cascade, LlmPredictor, Predictor, RunOptions};
    use crate::synthetic::{labeled_corpus, mock_script};
    use crate::taxonomy::Taxonomy;

    #[test]
    fn written_run_reads_back_equal() {
        let tax = Taxonomy::builtin();
        let data = labeled_corpus(6, 4);
        let cfg = GatewayConfig {
            api_key_env: None,
            backoff_base_ms: 0,
            ..GatewayConfig::default()
        };
        let p = Arc::new(LlmPredictor {
            client: Client::new(Box::new(MockGateway::new(mock_script(&data, &tax, &["syn001"]))), cfg).unwrap(),
            demo: Demo::constructed(),
            identity: "mock:t".into(),
        });
        let steps = Step::ALL.map(|s| BoundStep::new(s, Predictor::Llm(p.clone()), None).unwrap());
        let out = run_cascade(&data.corpus, &steps, &tax, &RunOptions::default()).unwrap();
        let manifest = RunManifest::new(&data.corpus, &steps.iter().collect::<Vec<_>>(), &out).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_run(dir.path(), &manifest, &out).unwrap();
        let (m, back) = read_run(dir.path()).unwrap();
        assert_eq!(m, manifest);
        assert_eq!(back, out);
        assert_eq!(back.failures.len(), 1);
    }
}
