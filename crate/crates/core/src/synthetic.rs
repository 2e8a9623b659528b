//! Seeded synthetic data: labeled corpora, classifier datasets and mock
//! gateway scripts. Used by tests, benchmarks and demos; nothing here is
//! drawn from a real annotated corpus.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annotation::{FeatureSpan, MacroAnnotation, OverallAnnotation, MERGED};
use crate::corpus::{Corpus, Dialogue, Proficiency, Turn};
use crate::llm::{MockReply, MockRule, MockScript};
use crate::models::Dataset;
use crate::taxonomy::{Aspect, MacroScores, Score, Taxonomy, Tier};

const FILLERS: [&str; 8] = [
    "我们周末去公园吧",
    "今天天气很好",
    "学习中文很有意思",
    "你最近忙吗",
    "我在图书馆看书",
    "他们明天来北京",
    "这家饭馆的菜很好吃",
    "我想买一本新词典",
];

/// A trigger phrase per feature, taxonomy id order.
const PHRASES: [(&str, &str); 17] = [
    ("adj_adv_possibility", "也许"),
    ("backchannel", "嗯嗯"),
    ("code_switching", "OK"),
    ("collaborative_finish", "对, 就是这样"),
    ("epistemic_copula", "好像"),
    ("epistemic_modal", "应该"),
    ("feedback_next_turn", "好的, 明白了"),
    ("formulaic_response", "没问题"),
    ("impersonal_subject", "大家都说"),
    ("negotiation_of_meaning", "你的意思是"),
    ("non_factive_verb_phrase", "我觉得"),
    ("noun_verb_collocation", "打电话"),
    ("question_response", "是的, 我去过"),
    ("reference_word", "那个"),
    ("routinized_resource", "你说的你"),
    ("subordinate_clause", "因为我很忙"),
    ("tense_choice", "已经"),
];

/// A corpus with gold spans (annotator `merged`), resolved macro labels
/// and overall scores.
#[derive(Debug, Clone)]
pub struct LabeledCorpus {
    pub corpus: Corpus,
    pub spans: Vec<FeatureSpan>,
    pub macro_labels: Vec<MacroAnnotation>,
    pub overall: Vec<OverallAnnotation>,
}

fn clamp_score(v: i64) -> Score {
    Score::new(v.clamp(1, 5)).expect("clamped")
}

/// `n` dialogues `syn000`, `syn001`, ... grouped three per conversation.
/// A latent quality level drives both how many features are marked and
/// the labels, so the labels are learnable from the spans. The first turn
/// starts with the dialogue id, which mock scripts key on.
pub fn labeled_corpus(n: usize, seed: u64) -> LabeledCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut dialogues, mut spans, mut macro_labels, mut overall) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let id = format!("syn{i:03}");
        let quality: i64 = rng.gen_range(1..=5);
        let n_turns = rng.gen_range(4..=8);
        let rate = 0.05 + 0.2 * (quality - 1) as f64;
        let mut turns = Vec::with_capacity(n_turns);
        for t in 0..n_turns {
            let mut text = FILLERS.choose(&mut rng).expect("non-empty").to_string();
            if t == 0 {
                text = format!("{id} {text}");
            }
            for (feature, phrase) in PHRASES {
                if rng.gen_bool(rate.min(1.0) / 2.0) {
                    text.push_str(", ");
                    let start = text.chars().count();
                    text.push_str(phrase);
                    spans.push(FeatureSpan {
                        dialogue_id: id.clone(),
                        turn_index: t,
                        feature_id: feature.to_string(),
                        start,
                        end: start + phrase.chars().count(),
                        annotator_id: MERGED.to_string(),
                    });
                }
            }
            text.push('。');
            turns.push(Turn {
                speaker_id: if t % 2 == 0 { "A" } else { "B" }.to_string(),
                index: t,
                text,
            });
        }
        let mut values = [clamp_score(quality); 4];
        for v in values.iter_mut() {
            if rng.gen_bool(0.2) {
                *v = clamp_score(quality + if rng.gen_bool(0.5) { 1 } else { -1 });
            }
        }
        let scores = MacroScores::new(values[0], values[1], values[2], values[3]);
        let mean = values.iter().map(|s| s.get() as f64).sum::<f64>() / 4.0;
        macro_labels.push(MacroAnnotation {
            dialogue_id: id.clone(),
            annotator_id: MERGED.to_string(),
            scores,
        });
        overall.push(OverallAnnotation {
            dialogue_id: id.clone(),
            annotator_id: MERGED.to_string(),
            score: clamp_score(mean.round() as i64),
            justification: format!("synthetic quality level {quality}"),
        });
        dialogues.push(Dialogue {
            dialogue_id: id,
            conversation_id: format!("conv{:03}", i / 3),
            proficiency: Some(Proficiency::Intermediate),
            topic: None,
            turns,
        });
    }
    LabeledCorpus {
        corpus: Corpus::new(dialogues).expect("generated dialogues are valid"),
        spans,
        macro_labels,
        overall,
    }
}

fn quoted_spans(data: &LabeledCorpus, dialogue: &Dialogue, tier: Tier, taxonomy: &Taxonomy) -> String {
    let items: Vec<serde_json::Value> = data
        .spans
        .iter()
        .filter(|s| s.dialogue_id == dialogue.dialogue_id)
        .filter(|s| taxonomy.tier(&s.feature_id).ok() == Some(tier))
        .map(|s| {
            serde_json::json!({
                "feature_id": s.feature_id,
                "turn_index": s.turn_index,
                "text": s.text(dialogue).unwrap_or_default(),
            })
        })
        .collect();
    serde_json::json!({ "spans": items }).to_string()
}

/// Substrings identifying each prompt template.
pub const TEMPLATE_MARKERS: [&str; 4] = [
    "following token-level",
    "following utterance-level",
    "You rate the interactivity",
    "You score the overall quality",
];

/// A mock script answering every prompt of a cascade or one-step run over
/// `data` with its gold labels. Dialogues in `unparseable` get a prose
/// reply to the macro-label prompt, and a bad overall reply, so they fail.
pub fn mock_script(data: &LabeledCorpus, taxonomy: &Taxonomy, unparseable: &[&str]) -> MockScript {
    let mut rules = Vec::new();
    let rule = |id: &str, marker: &str, text: String| MockRule {
        contains: vec![format!("{id} "), marker.to_string()],
        replies: vec![MockReply::text(text)],
    };
    for (d, (m, o)) in data.corpus.dialogues().iter().zip(data.macro_labels.iter().zip(&data.overall)) {
        let id = d.dialogue_id.as_str();
        let bad = unparseable.contains(&id);
        rules.push(rule(id, TEMPLATE_MARKERS[0], quoted_spans(data, d, Tier::TokenLevel, taxonomy)));
        rules.push(rule(id, TEMPLATE_MARKERS[1], quoted_spans(data, d, Tier::UtteranceLevel, taxonomy)));
        let macro_reply = if bad {
            "I am not able to rate this dialogue.".to_string()
        } else {
            let map: serde_json::Map<String, serde_json::Value> = Aspect::ALL
                .iter()
                .map(|a| (a.id().to_string(), m.scores.get(*a).get().into()))
                .collect();
            format!("```json\n{}\n```", serde_json::Value::Object(map))
        };
        rules.push(rule(id, TEMPLATE_MARKERS[2], macro_reply));
        let overall_reply = if bad {
            r#"{"score": 7, "rationale": "out of range"}"#.to_string()
        } else {
            serde_json::json!({
                "score": o.score.get(),
                "rationale": format!("consistent with the features found in {id}"),
            })
            .to_string()
        };
        rules.push(rule(id, TEMPLATE_MARKERS[3], overall_reply));
    }
    MockScript {
        rules,
        ..MockScript::default()
    }
}

/// Five well-separated classes: class `k` raises features `j` with
/// `j % 5 == k - 1` among the first 15, uniform noise elsewhere. Labels
/// cycle 1..=5.
pub fn separable_dataset(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i % 5) as u8 + 1;
        let row = (0..p)
            .map(|j| {
                let lift = if j < 15 && j % 5 == (class - 1) as usize { 1.0 } else { 0.0 };
                lift + rng.gen_range(-0.35..0.35)
            })
            .collect();
        x.push(row);
        y.push(class);
    }
    let names = (0..p).map(|j| format!("f{j:02}")).collect();
    Dataset::new(names, x, y).expect("generated data is valid")
}

/// Labels 1..=5 fixed by feature `signal` alone (a band per class);
/// feature `constant` is always 0.5; the rest is noise.
pub fn single_signal_dataset(n: usize, p: usize, signal: usize, constant: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i % 5) as u8 + 1;
        let row = (0..p)
            .map(|j| match j {
                _ if j == signal => (class - 1) as f64 + rng.gen_range(0.1..0.9),
                _ if j == constant => 0.5,
                _ => rng.gen_range(0.0..5.0),
            })
            .collect();
        x.push(row);
        y.push(class);
    }
    let names = (0..p).map(|j| format!("f{j:02}")).collect();
    Dataset::new(names, x, y).expect("generated data is valid")
}
