//! Shared fixtures for the benchmarks.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dialeval::annotation::FeatureSpan;
use dialeval::featurize::{macro_vector_of, micro_vector, Normalization};
use dialeval::llm::{Client, Demo, GatewayConfig, MockGateway};
use dialeval::models::{train, ClassifierModel, Dataset, ModelKind, TrainConfig};
use dialeval::pipeline::{BoundStep, LlmPredictor, Predictor, Step};
use dialeval::synthetic::{mock_script, LabeledCorpus};
use dialeval::{Aspect, Taxonomy};

/// Two label sequences that agree on roughly four units in five.
pub fn paired_labels(n: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<u8> = (0..n).map(|_| rng.gen_range(0..5)).collect();
    let b = a
        .iter()
        .map(|&v| if rng.gen_bool(0.8) { v } else { rng.gen_range(0..5) })
        .collect();
    (a, b)
}

/// Gold spans of `data` as annotator `ann_a`, and every other span again as
/// `ann_b`, grouped per dialogue.
pub fn annotator_pairs(data: &LabeledCorpus) -> Vec<(Vec<FeatureSpan>, Vec<FeatureSpan>)> {
    let mut out: BTreeMap<&str, (Vec<FeatureSpan>, Vec<FeatureSpan>)> = BTreeMap::new();
    for (i, s) in data.spans.iter().enumerate() {
        let entry = out.entry(&s.dialogue_id).or_default();
        entry.0.push(FeatureSpan { annotator_id: "ann_a".into(), ..s.clone() });
        if i % 2 == 0 {
            entry.1.push(FeatureSpan { annotator_id: "ann_b".into(), ..s.clone() });
        }
    }
    out.into_values().collect()
}

/// Four aspect models on micro vectors and one overall model on gold
/// macro labels, all trained on `data` itself.
pub fn classical_models(data: &LabeledCorpus, taxonomy: &Taxonomy, kind: ModelKind) -> ([ClassifierModel; 4], ClassifierModel) {
    let spans = gold_spans(data);
    let micro: Vec<Vec<f64>> = data
        .corpus
        .dialogues()
        .iter()
        .map(|d| {
            let own = spans.get(&d.dialogue_id).cloned().unwrap_or_default();
            micro_vector(d, &own, taxonomy, Normalization::PerTurn).expect("valid spans").values
        })
        .collect();
    let cfg = TrainConfig::new(kind, 7);
    let step2: Vec<ClassifierModel> = Aspect::ALL
        .iter()
        .map(|&a| {
            let y = data.macro_labels.iter().map(|m| m.scores.get(a).get()).collect();
            train(&Dataset::new(taxonomy.feature_ids(), micro.clone(), y).expect("dataset"), &cfg).expect("trains")
        })
        .collect();
    let macro_x = data
        .macro_labels
        .iter()
        .map(|m| macro_vector_of(&m.dialogue_id, &m.scores).values.to_vec())
        .collect();
    let y = data.overall.iter().map(|o| o.score.get()).collect();
    let names = Aspect::ALL.iter().map(|a| a.id().to_string()).collect();
    let step3 = train(&Dataset::new(names, macro_x, y).expect("dataset"), &cfg).expect("trains");
    (step2.try_into().expect("four aspects"), step3)
}

pub fn gold_spans(data: &LabeledCorpus) -> BTreeMap<String, Vec<FeatureSpan>> {
    let mut map: BTreeMap<String, Vec<FeatureSpan>> = BTreeMap::new();
    for s in &data.spans {
        map.entry(s.dialogue_id.clone()).or_default().push(s.clone());
    }
    map
}

/// Gold spans, classical aspect models, classical overall model.
pub fn classical_steps(data: &LabeledCorpus, taxonomy: &Taxonomy) -> [BoundStep; 3] {
    let (step2, step3) = classical_models(data, taxonomy, ModelKind::Logistic);
    [
        BoundStep::new(Step::MicroSpans, Predictor::GoldSpans(gold_spans(data)), None).expect("step 1"),
        BoundStep::new(Step::MacroLabels, Predictor::ClassicalMacro(Box::new(step2)), None).expect("step 2"),
        BoundStep::new(Step::Overall, Predictor::ClassicalOverall(Box::new(step3)), None).expect("step 3"),
    ]
}

/// All three steps answered by a scripted model; no network access.
pub fn mock_steps(data: &LabeledCorpus, taxonomy: &Taxonomy) -> [BoundStep; 3] {
    let cfg = GatewayConfig { api_key_env: None, backoff_base_ms: 0, ..GatewayConfig::default() };
    let p = Arc::new(LlmPredictor {
        client: Client::new(Box::new(MockGateway::new(mock_script(data, taxonomy, &[]))), cfg).expect("client"),
        demo: Demo::constructed(),
        identity: "mock:bench".into(),
    });
    [
        BoundStep::new(Step::MicroSpans, Predictor::Llm(p.clone()), None).expect("step 1"),
        BoundStep::new(Step::MacroLabels, Predictor::Llm(p.clone()), None).expect("step 2"),
        BoundStep::new(Step::Overall, Predictor::Llm(p), None).expect("step 3"),
    ]
}
