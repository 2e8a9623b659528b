use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::prompt::TemplateId;
use crate::annotation::{FeatureSpan, PREDICTED};
use crate::corpus::Dialogue;
use crate::taxonomy::{Aspect, MacroScores, Score, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    Repaired,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VerdictPayload {
    Spans { spans: Vec<FeatureSpan> },
    Macro { scores: MacroScores },
    Overall { score: Score, rationale: String },
}

/// A parsed model response. `payload` is present exactly when the status
/// is not `Failed`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmVerdict {
    pub template_id: TemplateId,
    pub raw_response: String,
    pub payload: Option<VerdictPayload>,
    pub status: ParseStatus,
    pub warnings: Vec<String>,
}

/// Strips code fences or surrounding prose: the text between the first
/// `{` and the last `}`.
fn repair(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    (start < end).then(|| &raw[start..=end])
}

fn score_of(value: &Value, warnings: &mut Vec<String>, field: &str) -> Result<Score, String> {
    let n = match value {
        Value::Number(n) => n
            .as_i64()
            .ok_or_else(|| format!("`{field}` is not an integer: {n}"))?,
        Value::String(s) => {
            let n = s
                .trim()
                .parse::<i64>()
                .map_err(|_| format!("`{field}` is not an integer: {s:?}"))?;
            warnings.push(format!("`{field}` given as a string"));
            n
        }
        other => return Err(format!("`{field}` is not an integer: {other}")),
    };
    Score::new(n).map_err(|_| format!("`{field}` = {n} outside 1..5"))
}

fn char_find(haystack: &str, needle: &str) -> Option<usize> {
    let byte = haystack.find(needle)?;
    Some(haystack[..byte].chars().count())
}

/// Offsets of `quote`: within the stated turn first, else its first
/// occurrence in turn order.
fn anchor(dialogue: &Dialogue, turn_hint: Option<usize>, quote: &str) -> Option<(usize, usize)> {
    if let Some(turn) = turn_hint.and_then(|t| dialogue.turn(t)) {
        if let Some(start) = char_find(&turn.text, quote) {
            return Some((turn.index, start));
        }
    }
    dialogue
        .turns
        .iter()
        .find_map(|t| char_find(&t.text, quote).map(|s| (t.index, s)))
}

fn parse_spans(
    template: TemplateId,
    obj: &Value,
    dialogue: &Dialogue,
    taxonomy: &Taxonomy,
    warnings: &mut Vec<String>,
) -> Result<VerdictPayload, String> {
    let items = obj
        .get("spans")
        .and_then(Value::as_array)
        .ok_or("missing `spans` array")?;
    let tier = template.span_tier();
    let mut spans: Vec<FeatureSpan> = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let feature = item.get("feature_id").and_then(Value::as_str);
        let quote = item.get("text").and_then(Value::as_str).filter(|t| !t.is_empty());
        let (Some(feature), Some(quote)) = (feature, quote) else {
            warnings.push(format!("span {i}: missing feature_id or text; dropped"));
            continue;
        };
        match taxonomy.tier(feature) {
            Err(_) => {
                warnings.push(format!("span {i}: unknown feature `{feature}`; dropped"));
                continue;
            }
            Ok(t) if tier.is_some_and(|want| want != t) => {
                warnings.push(format!("span {i}: `{feature}` is {t}, not requested; dropped"));
                continue;
            }
            Ok(_) => {}
        }
        let hint = item
            .get("turn_index")
            .and_then(Value::as_u64)
            .map(|t| t as usize);
        let Some((turn_index, start)) = anchor(dialogue, hint, quote) else {
            warnings.push(format!("span {i}: quote {quote:?} not found in dialogue; dropped"));
            continue;
        };
        if hint.is_some_and(|h| h != turn_index) {
            warnings.push(format!("span {i}: quote re-anchored to turn {turn_index}"));
        }
        let span = FeatureSpan {
            dialogue_id: dialogue.dialogue_id.clone(),
            turn_index,
            feature_id: feature.to_string(),
            start,
            end: start + quote.chars().count(),
            annotator_id: PREDICTED.to_string(),
        };
        if spans.contains(&span) {
            warnings.push(format!("span {i}: duplicate; dropped"));
            continue;
        }
        spans.push(span);
    }
    spans.sort();
    Ok(VerdictPayload::Spans { spans })
}

fn interpret(
    template: TemplateId,
    obj: &Value,
    dialogue: &Dialogue,
    taxonomy: &Taxonomy,
    warnings: &mut Vec<String>,
) -> Result<VerdictPayload, String> {
    match template {
        TemplateId::SpanTokenLevel | TemplateId::SpanUtteranceLevel => {
            parse_spans(template, obj, dialogue, taxonomy, warnings)
        }
        TemplateId::MacroLabels => {
            let mut values = [Score::new(1).expect("valid"); 4];
            for aspect in Aspect::ALL {
                let v = obj
                    .get(aspect.id())
                    .ok_or_else(|| format!("missing `{}`", aspect.id()))?;
                values[aspect.index()] = score_of(v, warnings, aspect.id())?;
            }
            Ok(VerdictPayload::Macro {
                scores: MacroScores::new(values[0], values[1], values[2], values[3]),
            })
        }
        TemplateId::OverallScore => {
            let score = score_of(obj.get("score").ok_or("missing `score`")?, warnings, "score")?;
            let rationale = match obj.get("rationale").and_then(Value::as_str) {
                Some(r) => r.to_string(),
                None => {
                    warnings.push("missing `rationale`".into());
                    String::new()
                }
            };
            Ok(VerdictPayload::Overall { score, rationale })
        }
    }
}

/// Parses a raw model response. Never fails: problems are recorded in
/// `status` and `warnings`.
pub fn parse_verdict(
    template: TemplateId,
    raw: &str,
    dialogue: &Dialogue,
    taxonomy: &Taxonomy,
) -> LlmVerdict {
    let mut warnings = Vec::new();
    let parsed = match serde_json::from_str::<Value>(raw.trim()) {
        Ok(v) if v.is_object() => Some(v),
        _ => repair(raw).and_then(|block| {
            let v = serde_json::from_str::<Value>(block).ok().filter(Value::is_object)?;
            warnings.push("structured block extracted from surrounding text".into());
            Some(v)
        }),
    };
    let verdict = |payload, status, warnings| LlmVerdict {
        template_id: template,
        raw_response: raw.to_string(),
        payload,
        status,
        warnings,
    };
    let Some(obj) = parsed else {
        warnings.push("no JSON object found".into());
        return verdict(None, ParseStatus::Failed, warnings);
    };
    match interpret(template, &obj, dialogue, taxonomy, &mut warnings) {
        Ok(payload) => {
            let status = if warnings.is_empty() {
                ParseStatus::Ok
            } else {
                ParseStatus::Repaired
            };
            verdict(Some(payload), status, warnings)
        }
        Err(e) => {
            warnings.push(e);
            verdict(None, ParseStatus::Failed, warnings)
        }
    }
}
