mod common;

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use proptest::sample::subsequence;

use dialeval::annotation::FeatureSpan;
use dialeval::llm::{Client, Demo, GatewayConfig, MockGateway};
use dialeval::metrics::classification_metrics;
use dialeval::models::{ClassifierModel, ModelKind};
use dialeval::pipeline::{
    evaluate, run_cascade, BoundStep, CascadeOutput, EvalTask, GoldLabels, LlmPredictor, Predictor, RunOptions, Step,
};
use dialeval::synthetic::{labeled_corpus, mock_script, LabeledCorpus};
use dialeval::{MacroScores, Taxonomy};

use common::train_classical;

struct Fixture {
    data: LabeledCorpus,
    step3: ClassifierModel,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let data = labeled_corpus(15, 21);
        let (_, step3) = train_classical(&data, &Taxonomy::builtin(), ModelKind::Logistic, 3);
        Fixture { data, step3 }
    })
}

fn by_dialogue(spans: &[FeatureSpan]) -> BTreeMap<String, Vec<FeatureSpan>> {
    let mut map: BTreeMap<String, Vec<FeatureSpan>> = BTreeMap::new();
    for s in spans {
        map.entry(s.dialogue_id.clone()).or_default().push(s.clone());
    }
    map
}

fn gold_macro(data: &LabeledCorpus) -> BTreeMap<String, MacroScores> {
    data.macro_labels.iter().map(|m| (m.dialogue_id.clone(), m.scores)).collect()
}

fn mock_run(data: &LabeledCorpus, unparseable: &[&str], jobs: usize) -> CascadeOutput {
    let tax = Taxonomy::builtin();
    let cfg = GatewayConfig {
        api_key_env: None,
        backoff_base_ms: 0,
        ..GatewayConfig::default()
    };
    let predictor = Arc::new(LlmPredictor {
        client: Client::new(Box::new(MockGateway::new(mock_script(data, &tax, unparseable))), cfg).unwrap(),
        demo: Demo::constructed(),
        identity: "mock:props".into(),
    });
    let steps = [Step::MicroSpans, Step::MacroLabels, Step::Overall]
        .map(|s| BoundStep::new(s, Predictor::Llm(predictor.clone()), None).unwrap());
    run_cascade(&data.corpus, &steps, &tax, &RunOptions { jobs, ..RunOptions::default() }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// A classical overall model sees only the macro vector, so the spans
    /// bound to the first step cannot move its prediction.
    #[test]
    fn classical_overall_ignores_step_one_spans(
        picks in subsequence((0..fixture().data.spans.len()).collect::<Vec<_>>(), 0..=fixture().data.spans.len()),
        reverse in any::<bool>(),
    ) {
        let fx = fixture();
        let tax = Taxonomy::builtin();
        let mut chosen: Vec<FeatureSpan> = picks.iter().map(|&i| fx.data.spans[i].clone()).collect();
        if reverse {
            chosen.reverse();
        }
        let run = |spans: &[FeatureSpan]| {
            let steps = [
                BoundStep::new(Step::MicroSpans, Predictor::GoldSpans(by_dialogue(spans)), None).unwrap(),
                BoundStep::new(Step::MacroLabels, Predictor::GoldMacro(gold_macro(&fx.data)), None).unwrap(),
                BoundStep::new(Step::Overall, Predictor::ClassicalOverall(Box::new(fx.step3.clone())), None).unwrap(),
            ];
            run_cascade(&fx.data.corpus, &steps, &tax, &RunOptions::default()).unwrap()
        };
        let base = run(&fx.data.spans);
        let varied = run(&chosen);
        let overall = |o: &CascadeOutput| o.records.iter().map(|r| (r.dialogue_id.clone(), r.overall)).collect::<Vec<_>>();
        prop_assert_eq!(overall(&base), overall(&varied));
    }

    /// Every dialogue ends as exactly one record or one failure, in corpus
    /// order, and the scripted failures are the ones reported.
    #[test]
    fn records_and_failures_partition_the_corpus(
        failing in subsequence((0..15usize).collect::<Vec<_>>(), 0..6),
        jobs in 1usize..4,
    ) {
        let fx = fixture();
        let ids: Vec<String> = failing.iter().map(|i| format!("syn{i:03}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let out = mock_run(&fx.data, &refs, jobs);
        prop_assert_eq!(out.records.len() + out.failures.len(), fx.data.corpus.len());
        let failed: Vec<&str> = out.failures.iter().map(|f| f.dialogue_id.as_str()).collect();
        prop_assert_eq!(failed, refs);
        let order: Vec<&str> = fx.data.corpus.ids().filter(|id| !ids.iter().any(|f| f == id)).collect();
        prop_assert_eq!(out.records.iter().map(|r| r.dialogue_id.as_str()).collect::<Vec<_>>(), order);
        prop_assert!(out.failures.iter().all(|f| f.step == Step::MacroLabels && f.raw_response.is_some()));
    }

    #[test]
    fn mock_runs_are_deterministic_across_thread_counts(jobs_a in 1usize..5, jobs_b in 1usize..5) {
        let fx = fixture();
        let a = mock_run(&fx.data, &["syn002"], jobs_a);
        let b = mock_run(&fx.data, &["syn002"], jobs_b);
        prop_assert_eq!(serde_json::to_string(&a.records).unwrap(), serde_json::to_string(&b.records).unwrap());
        prop_assert_eq!(a.failures, b.failures);
    }

    #[test]
    fn macro_f1_is_invariant_under_consistent_relabeling(
        pairs in prop::collection::vec((1u8..=5, 1u8..=5), 1..60),
        perm in Just(vec![1u8, 2, 3, 4, 5]).prop_shuffle(),
    ) {
        let (g, p): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let relabel = |v: &[u8]| v.iter().map(|&l| perm[l as usize - 1]).collect::<Vec<u8>>();
        let m = classification_metrics(&g, &p).unwrap();
        let r = classification_metrics(&relabel(&g), &relabel(&p)).unwrap();
        prop_assert!((m.macro_f1 - r.macro_f1).abs() < 1e-12);
        prop_assert_eq!(m.accuracy, r.accuracy);
    }

    #[test]
    fn swapping_gold_and_prediction_swaps_precision_and_recall(
        pairs in prop::collection::vec((1u8..=5, 1u8..=5), 1..60),
    ) {
        let (g, p): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let m = classification_metrics(&g, &p).unwrap();
        let swapped = classification_metrics(&p, &g).unwrap();
        prop_assert_eq!(m.accuracy, swapped.accuracy);
        for (a, b) in m.per_class.iter().zip(&swapped.per_class) {
            prop_assert_eq!(a.label, b.label);
            prop_assert!((a.precision - b.recall).abs() < 1e-12 && (a.recall - b.precision).abs() < 1e-12);
            prop_assert!((a.f1 - b.f1).abs() < 1e-12);
        }
    }
}

/// Gold spans submitted as predictions score perfectly on every feature
/// that occurs, whatever annotator id the gold carries.
#[test]
fn gold_spans_as_predictions_score_perfectly() {
    let fx = fixture();
    let tax = Taxonomy::builtin();
    let out = mock_run(&fx.data, &[], 2);
    let gold = GoldLabels::from_annotations(Some(fx.data.spans.clone()), &fx.data.macro_labels, &fx.data.overall).unwrap();
    for feature in tax.feature_ids() {
        let report = evaluate(&out.records, &gold, &EvalTask::MicroFeature(feature.clone()), &fx.data.corpus, 0).unwrap();
        assert_eq!(report.metrics.accuracy, 1.0, "{feature}");
    }
    let overall = evaluate(&out.records, &gold, &EvalTask::Overall, &fx.data.corpus, 0).unwrap();
    assert_eq!(overall.metrics.macro_f1, 1.0);
}
