use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::annotation::{FeatureSpan, MERGED};
use crate::corpus::{Dialogue, Proficiency, Turn};
use crate::error::{Error, Result};
use crate::jsonl::to_canonical_string;
use crate::taxonomy::{rubric, Aspect, MacroScores, Score, Taxonomy, Tier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    SpanTokenLevel,
    SpanUtteranceLevel,
    MacroLabels,
    OverallScore,
}

impl TemplateId {
    pub fn id(self) -> &'static str {
        match self {
            TemplateId::SpanTokenLevel => "span_token_level",
            TemplateId::SpanUtteranceLevel => "span_utterance_level",
            TemplateId::MacroLabels => "macro_labels",
            TemplateId::OverallScore => "overall_score",
        }
    }

    pub fn span_tier(self) -> Option<Tier> {
        match self {
            TemplateId::SpanTokenLevel => Some(Tier::TokenLevel),
            TemplateId::SpanUtteranceLevel => Some(Tier::UtteranceLevel),
            _ => None,
        }
    }

    fn body(self) -> &'static str {
        match self {
            TemplateId::SpanTokenLevel | TemplateId::SpanUtteranceLevel => SPAN_BODY,
            TemplateId::MacroLabels => MACRO_BODY,
            TemplateId::OverallScore => OVERALL_BODY,
        }
    }
}

const SPAN_BODY: &str = "\
You annotate a dialogue between second-language Chinese speakers.
Mark every occurrence of the following {{tier}} micro-level features.

Features:
{{features}}
Quote each occurrence exactly as it appears in the turn; do not give character offsets.
Answer with one JSON object and nothing else:
{\"spans\": [{\"feature_id\": \"<feature id>\", \"turn_index\": <turn number>, \"text\": \"<exact quote>\"}]}
Use {\"spans\": []} when no feature occurs.

{{demo}}
Dialogue:
{{dialogue}}
Output:
";

const MACRO_BODY: &str = "\
You rate the interactivity of a dialogue between second-language Chinese speakers.
Score each aspect from 1 to 5; higher means more natural and active interaction.
For tone, higher scores denote a casual tone and lower scores a formal tone.

Aspects:
{{aspects}}
Answer with one JSON object and nothing else:
{\"topic\": <1-5>, \"tone\": <1-5>, \"opening\": <1-5>, \"closing\": <1-5>}

{{demo}}
Dialogue:
{{dialogue}}
Micro-level feature spans:
{{spans}}
Output:
";

const OVERALL_BODY: &str = "\
You score the overall quality of a dialogue between second-language Chinese speakers.

Output fields:
score: the interactivity score of the dialogue, an integer from 1 to 5.
rationale: why and how the score was given.

Evaluation criteria:
{{rubric}}
Answer with one JSON object and nothing else:
{\"score\": <1-5>, \"rationale\": \"<text>\"}

{{demo}}
Dialogue:
{{dialogue}}
{{context}}Output:
";

/// Intermediate results passed to later prompts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PromptContext {
    pub spans: Option<Vec<FeatureSpan>>,
    pub macro_scores: Option<MacroScores>,
}

/// The one-shot demonstration: a dialogue with its expected outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demo {
    pub label: String,
    pub dialogue: Dialogue,
    pub spans: Vec<FeatureSpan>,
    pub macro_scores: MacroScores,
    pub overall: Score,
    pub rationale: String,
}

fn demo_span(turn: usize, feature: &str, text: &str, dialogue: &Dialogue) -> FeatureSpan {
    let turn_text: Vec<char> = dialogue.turns[turn].text.chars().collect();
    let needle: Vec<char> = text.chars().collect();
    let start = turn_text
        .windows(needle.len())
        .position(|w| w == needle.as_slice())
        .expect("demo quote occurs in its turn");
    FeatureSpan {
        dialogue_id: dialogue.dialogue_id.clone(),
        turn_index: turn,
        feature_id: feature.to_string(),
        start,
        end: start + needle.len(),
        annotator_id: MERGED.to_string(),
    }
}

impl Demo {
    /// A hand-written demonstration, not drawn from any annotated corpus.
    pub fn constructed() -> Self {
        let texts = [
            ("A", "你好! 好久不见, 你最近怎么样?"),
            ("B", "嗯嗯, 还不错。我现在还不能休息, 因为我还有很多工作。"),
            ("A", "那你是没有时间去旅游吗?"),
            ("B", "的确, 我觉得, well, 下个月也许可以去。"),
            ("A", "你说的你, 你应该多休息。好, 那再见啊!"),
            ("B", "好嘞, 再见了您!"),
        ];
        let dialogue = Dialogue {
            dialogue_id: "constructed-demo".into(),
            conversation_id: "constructed-demo".into(),
            proficiency: Some(Proficiency::Intermediate),
            topic: Some("weekend plans".into()),
            turns: texts
                .iter()
                .enumerate()
                .map(|(index, (speaker, text))| Turn {
                    speaker_id: speaker.to_string(),
                    index,
                    text: text.to_string(),
                })
                .collect(),
        };
        let spans = vec![
            demo_span(1, "backchannel", "嗯嗯", &dialogue),
            demo_span(1, "tense_choice", "现在", &dialogue),
            demo_span(1, "subordinate_clause", "因为我还有很多工作", &dialogue),
            demo_span(3, "negotiation_of_meaning", "的确", &dialogue),
            demo_span(3, "code_switching", "well", &dialogue),
            demo_span(3, "adj_adv_possibility", "也许", &dialogue),
            demo_span(4, "routinized_resource", "你说的你", &dialogue),
            demo_span(4, "epistemic_modal", "应该", &dialogue),
            demo_span(5, "collaborative_finish", "好嘞, 再见了您!", &dialogue),
        ];
        Self {
            label: "constructed example".into(),
            dialogue,
            spans,
            macro_scores: MacroScores::from_values([4, 5, 5, 5]).expect("valid scores"),
            overall: Score::new(4).expect("valid score"),
            rationale: "The speakers understand each other and close naturally, with a little hesitation in the middle.".into(),
        }
    }
}

fn format_dialogue(d: &Dialogue) -> String {
    let mut out = String::new();
    for t in &d.turns {
        let _ = writeln!(out, "[turn {}] {}: {}", t.index, t.speaker_id, t.text);
    }
    out
}

fn format_spans(spans: &[FeatureSpan], dialogue: &Dialogue, taxonomy: &Taxonomy) -> String {
    if spans.is_empty() {
        return "(none)\n".into();
    }
    let mut sorted: Vec<&FeatureSpan> = spans.iter().collect();
    sorted.sort_by(|a, b| (a.turn_index, a.start, &a.feature_id).cmp(&(b.turn_index, b.start, &b.feature_id)));
    let mut out = String::new();
    for s in sorted {
        let name = taxonomy.resolve(&s.feature_id).map(|f| f.name.as_str()).unwrap_or("?");
        let text = s.text(dialogue).unwrap_or_default();
        let _ = writeln!(
            out,
            "- turn {}, {} ({}): \"{}\"",
            s.turn_index, s.feature_id, name, text
        );
    }
    out
}

fn format_macro(scores: &MacroScores) -> String {
    let mut out = String::new();
    for a in Aspect::ALL {
        let _ = writeln!(out, "- {}: {}", a.display_name(), scores.get(a));
    }
    out
}

fn expected_spans_json(demo: &Demo, tier: Tier, taxonomy: &Taxonomy) -> String {
    let items: Vec<serde_json::Value> = demo
        .spans
        .iter()
        .filter(|s| taxonomy.tier(&s.feature_id).ok() == Some(tier))
        .map(|s| {
            serde_json::json!({
                "feature_id": s.feature_id,
                "turn_index": s.turn_index,
                "text": s.text(&demo.dialogue).unwrap_or_default(),
            })
        })
        .collect();
    to_canonical_string(&serde_json::json!({ "spans": items })).expect("serializable")
}

/// Substitutes `{{name}}` placeholders in one pass; inserted text is never
/// rescanned.
fn fill(body: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String> {
    let mut out = String::with_capacity(body.len() * 2);
    let mut rest = body;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let close = after
            .find("}}")
            .ok_or_else(|| Error::Render("unterminated placeholder".into()))?;
        let name = &after[..close];
        out.push_str(
            &lookup(name).ok_or_else(|| Error::Render(format!("unresolved placeholder `{name}`")))?,
        );
        rest = &after[close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Renders one prompt. Deterministic in its inputs.
pub fn render_prompt(
    template: TemplateId,
    dialogue: &Dialogue,
    context: &PromptContext,
    demo: &Demo,
    taxonomy: &Taxonomy,
) -> Result<String> {
    if demo.dialogue.dialogue_id == dialogue.dialogue_id || demo.dialogue.turns == dialogue.turns {
        return Err(Error::Leakage(dialogue.dialogue_id.clone()));
    }
    let spans_required = matches!(template, TemplateId::MacroLabels);
    if spans_required && context.spans.is_none() {
        return Err(Error::Render("macro_labels prompt needs micro-level spans".into()));
    }
    let with_context = match template {
        TemplateId::OverallScore => match (&context.spans, &context.macro_scores) {
            (Some(_), Some(_)) => true,
            (None, None) => false,
            _ => {
                return Err(Error::Render(
                    "overall_score prompt needs both spans and macro scores, or neither".into(),
                ))
            }
        },
        _ => false,
    };

    let demo_block = {
        let mut b = format!("Demonstration ({}):\nDialogue:\n{}", demo.label, format_dialogue(&demo.dialogue));
        match template {
            TemplateId::SpanTokenLevel | TemplateId::SpanUtteranceLevel => {
                let tier = template.span_tier().expect("span template");
                let _ = write!(b, "Output:\n{}\n", expected_spans_json(demo, tier, taxonomy));
            }
            TemplateId::MacroLabels => {
                let s = &demo.macro_scores;
                let _ = write!(
                    b,
                    "Micro-level feature spans:\n{}Output:\n{}\n",
                    format_spans(&demo.spans, &demo.dialogue, taxonomy),
                    to_canonical_string(&s.to_map()).expect("serializable")
                );
            }
            TemplateId::OverallScore => {
                if with_context {
                    let _ = write!(
                        b,
                        "Micro-level feature spans:\n{}Macro-level interactivity scores:\n{}",
                        format_spans(&demo.spans, &demo.dialogue, taxonomy),
                        format_macro(&demo.macro_scores)
                    );
                }
                let _ = write!(
                    b,
                    "Output:\n{}\n",
                    to_canonical_string(&serde_json::json!({
                        "score": demo.overall.get(),
                        "rationale": demo.rationale,
                    }))
                    .expect("serializable")
                );
            }
        }
        b
    };

    fill(template.body(), |name| match name {
        "tier" => template.span_tier().map(|t| t.to_string().replace('_', "-")),
        "features" => template.span_tier().map(|tier| {
            let mut out = String::new();
            for f in taxonomy.list_features(Some(tier)) {
                let _ = writeln!(
                    out,
                    "- {} ({}): {} Example: {}",
                    f.feature_id, f.name, f.description, f.example
                );
            }
            out
        }),
        "aspects" => Some(
            Aspect::ALL
                .iter()
                .map(|a| format!("- {} ({}): {}\n", a.id(), a.display_name(), a.definition()))
                .collect(),
        ),
        "rubric" => Some(
            rubric()
                .iter()
                .map(|(score, text)| format!("{score}: {text}\n"))
                .collect(),
        ),
        "demo" => Some(demo_block.clone()),
        "dialogue" => Some(format_dialogue(dialogue)),
        "spans" => context
            .spans
            .as_ref()
            .map(|s| format_spans(s, dialogue, taxonomy)),
        "context" => Some(if with_context {
            format!(
                "Micro-level feature spans:\n{}Macro-level interactivity scores:\n{}",
                format_spans(context.spans.as_deref().unwrap_or_default(), dialogue, taxonomy),
                format_macro(context.macro_scores.as_ref().expect("checked above"))
            )
        } else {
            String::new()
        }),
        _ => None,
    })
}
