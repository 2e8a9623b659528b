use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{CascadeOutput, ContributionBasis, EvalReport, EvalTask, FailureEntry, FeatureContribution, RunMode, Step};
use crate::error::Result;
use crate::importance_analysis::macro_importance_grid;
use crate::jsonl::to_canonical_pretty;
use crate::table::Grid;
use crate::taxonomy::{Aspect, Score};

const NOT_AVAILABLE: &str = "not available (one-step)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueSection {
    pub dialogue_id: String,
    pub overall: Score,
    /// `None` in one-step runs.
    pub macro_scores: Option<BTreeMap<Aspect, Score>>,
    pub contribution_basis: Option<ContributionBasis>,
    pub top_features: Option<Vec<FeatureContribution>>,
    pub rationale: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub run_label: String,
    pub mode: RunMode,
    pub dialogues: Vec<DialogueSection>,
    pub failures: Vec<FailureEntry>,
    pub tables: Vec<Grid>,
}

fn f3(v: f64) -> String {
    format!("{v:.3}")
}

/// Overall-score F1 by configuration; groups are separated by rules.
pub fn overall_f1_grid(groups: &[Vec<(String, f64)>]) -> Grid {
    let mut grid = Grid::new("Overall score F1", vec!["Models".into(), "F1".into()]);
    for (i, rows) in groups.iter().enumerate() {
        if i > 0 {
            grid.rule();
        }
        for (label, f1) in rows {
            grid.push(vec![label.clone(), f3(*f1)]);
        }
    }
    grid
}

/// Macro-F1 per interactivity aspect, one row per step-2 predictor.
pub fn aspect_f1_grid(rows: &[(String, [f64; 4])]) -> Grid {
    let mut header = vec!["Models".to_string()];
    header.extend(Aspect::ALL.iter().map(|a| a.column().to_string()));
    let mut grid = Grid::new("Macro-level interactivity F1", header);
    for (label, values) in rows {
        let mut cells = vec![label.clone()];
        cells.extend(values.iter().map(|&v| f3(v)));
        grid.push(cells);
    }
    grid
}

fn summary_grid(evals: &[EvalReport]) -> Grid {
    let header = ["Task", "n", "Accuracy", "Macro-F1", "Excluded"];
    let mut grid = Grid::new("Evaluation summary", header.iter().map(|s| s.to_string()).collect());
    for e in evals.iter().filter(|e| !matches!(e.task, EvalTask::MicroFeature(_))) {
        grid.push(vec![
            e.task.to_string(),
            e.metrics.n.to_string(),
            f3(e.metrics.accuracy),
            f3(e.metrics.macro_f1),
            e.n_excluded.to_string(),
        ]);
    }
    grid
}

fn micro_grid(evals: &[EvalReport]) -> Option<Grid> {
    let header = ["Feature", "Precision", "Recall", "F1", "Support"];
    let mut grid = Grid::new(
        "Micro-level feature F1 (token level)",
        header.iter().map(|s| s.to_string()).collect(),
    );
    for e in evals {
        if let EvalTask::MicroFeature(f) = &e.task {
            let positive = e.metrics.per_class.iter().find(|c| c.label == 1);
            let (p, r, f1, n) = positive.map_or((0.0, 0.0, 0.0, 0), |c| (c.precision, c.recall, c.f1, c.support));
            grid.push(vec![f.clone(), f3(p), f3(r), f3(f1), n.to_string()]);
        }
    }
    (grid.cells().count() > 0).then_some(grid)
}

/// Per-dialogue summaries plus corpus-level metric tables.
pub fn report(output: &CascadeOutput, evals: &[EvalReport]) -> Report {
    let one_step = output.mode == RunMode::OneStep;
    let dialogues = output
        .records
        .iter()
        .map(|r| DialogueSection {
            dialogue_id: r.dialogue_id.clone(),
            overall: r.overall,
            macro_scores: r.macro_scores.map(|m| m.to_map()),
            contribution_basis: r.contribution_basis,
            top_features: (!one_step).then(|| r.top_features.clone()),
            rationale: r.rationale.clone(),
        })
        .collect();

    let mut tables = Vec::new();
    if !evals.is_empty() {
        tables.push(summary_grid(evals));
    }
    if let Some(e) = evals.iter().find(|e| e.task == EvalTask::Overall) {
        tables.push(overall_f1_grid(&[vec![(output.run_label.clone(), e.metrics.macro_f1)]]));
    }
    let aspect_f1: Vec<f64> = Aspect::ALL
        .iter()
        .filter_map(|&a| evals.iter().find(|e| e.task == EvalTask::Macro(a)).map(|e| e.metrics.macro_f1))
        .collect();
    if let Ok(values) = <[f64; 4]>::try_from(aspect_f1) {
        let label = output
            .steps
            .iter()
            .find(|s| s.step == Step::MacroLabels)
            .map_or_else(|| output.run_label.clone(), |s| s.label.clone());
        tables.push(aspect_f1_grid(&[(label, values)]));
    }
    if let Some(table) = &output.macro_importance {
        if let Ok(grid) = macro_importance_grid(&[(table.model_kind, table.clone())]) {
            tables.push(grid);
        }
    }
    tables.extend(micro_grid(evals));

    Report {
        run_label: output.run_label.clone(),
        mode: output.mode,
        dialogues,
        failures: output.failures.clone(),
        tables,
    }
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mode = match self.mode {
            RunMode::Cascade => "cascade",
            RunMode::OneStep => "one-step",
        };
        let _ = writeln!(out, "Run: {} ({mode})", self.run_label);
        let _ = writeln!(out, "Records: {}, failures: {}", self.dialogues.len(), self.failures.len());
        for d in &self.dialogues {
            let _ = writeln!(out, "\n== {} ==", d.dialogue_id);
            let _ = writeln!(out, "overall: {}", d.overall);
            match &d.macro_scores {
                Some(m) => {
                    let parts: Vec<String> = m.iter().map(|(a, s)| format!("{} {s}", a.id())).collect();
                    let _ = writeln!(out, "macro: {}", parts.join(", "));
                }
                None => {
                    let _ = writeln!(out, "macro: {NOT_AVAILABLE}");
                }
            }
            match (&d.top_features, d.contribution_basis) {
                (Some(features), Some(basis)) => {
                    let (caption, parts): (&str, Vec<String>) = match basis {
                        ContributionBasis::ImportanceTimesValue => (
                            "importance x value",
                            features.iter().map(|c| format!("{} {:.4}", c.feature_id, c.value)).collect(),
                        ),
                        ContributionBasis::SpanCount => (
                            "span count",
                            features.iter().map(|c| format!("{} {}", c.feature_id, c.value)).collect(),
                        ),
                    };
                    let list = if parts.is_empty() { "(none)".to_string() } else { parts.join(", ") };
                    let _ = writeln!(out, "top features ({caption}): {list}");
                }
                _ => {
                    let _ = writeln!(out, "top features: {NOT_AVAILABLE}");
                }
            }
            if let Some(r) = d.rationale.as_deref().filter(|r| !r.is_empty()) {
                let _ = writeln!(out, "rationale: {r}");
            }
        }
        if !self.failures.is_empty() {
            let _ = writeln!(out, "\nFailures:");
            for f in &self.failures {
                let _ = writeln!(out, "- {} [{}]: {}", f.dialogue_id, f.step, f.reason);
            }
        }
        for t in &self.tables {
            out.push('\n');
            out.push_str(&t.to_text());
        }
        out
    }

    pub fn to_machine(&self) -> Result<String> {
        to_canonical_pretty(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::Normalization;
    use crate::models::{ImportanceMethod, ImportanceTable, ModelKind};
    use crate::pipeline::{AssessmentRecord, BindingKind, StepProvenance};
    use crate::taxonomy::MacroScores;

    fn output(mode: RunMode) -> CascadeOutput {
        let record = AssessmentRecord {
            dialogue_id: "d1".into(),
            mode,
            spans: vec![],
            macro_scores: (mode == RunMode::Cascade).then(|| MacroScores::from_values([4, 3, 5, 2]).unwrap()),
            overall: Score::new(4).unwrap(),
            rationale: Some("clear".into()),
            provenance: vec![],
            contribution_basis: (mode == RunMode::Cascade).then_some(ContributionBasis::ImportanceTimesValue),
            top_features: vec![
                FeatureContribution { feature_id: "backchannel".into(), value: 0.25 },
                FeatureContribution { feature_id: "reference_word".into(), value: 0.125 },
            ],
        };
        CascadeOutput {
            mode,
            run_label: "Human+LR+LR".into(),
            steps: vec![StepProvenance {
                step: Step::MacroLabels,
                kind: BindingKind::ClassicalModel,
                label: "LR".into(),
                fingerprint: "f".into(),
            }],
            normalization: Normalization::PerTurn,
            records: vec![record],
            failures: vec![],
            macro_importance: None,
        }
    }

    #[test]
    fn cascade_record_lists_features_in_given_order() {
        let text = report(&output(RunMode::Cascade), &[]).to_text();
        assert!(text.contains("macro: topic 4, tone 3, opening 5, closing 2"));
        assert!(text.contains("top features (importance x value): backchannel 0.2500, reference_word 0.1250"));
        assert!(text.contains("rationale: clear"));
    }

    #[test]
    fn one_step_marks_sections_unavailable() {
        let text = report(&output(RunMode::OneStep), &[]).to_text();
        assert!(text.contains("macro: not available (one-step)"));
        assert!(text.contains("top features: not available (one-step)"));
    }

    #[test]
    fn macro_importance_values_pass_through() {
        let mut out = output(RunMode::Cascade);
        out.macro_importance = Some(ImportanceTable {
            model_kind: ModelKind::Logistic,
            method: ImportanceMethod::WeightMagnitude,
            scores: [("topic", 0.643), ("tone", 0.357), ("opening", 0.081), ("closing", 0.079)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        });
        let r = report(&out, &[]);
        let grid = r.tables.last().unwrap();
        assert_eq!(grid.header, vec!["Models", "Topic", "Tone", "Opening", "Closing"]);
        assert_eq!(grid.cells().next().unwrap(), &vec!["LR", "0.643", "0.357", "0.081", "0.079"]);
    }
}
