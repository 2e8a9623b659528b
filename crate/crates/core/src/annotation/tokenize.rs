//! Word tokenization used as the unit of analysis for micro-level agreement
//! and span evaluation.
//!
//! CJK ideographs (and kana/hangul) are one token per character. Everything
//! else is split on whitespace and punctuation: a token is a maximal run of
//! alphanumeric, non-CJK characters. Offsets are Unicode scalar values.

use crate::corpus::Dialogue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Token {
    pub turn_index: usize,
    pub start: usize,
    pub end: usize,
}

pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // hiragana, katakana
        | 0x3400..=0x4DBF    // ext A
        | 0x4E00..=0x9FFF    // unified ideographs
        | 0xAC00..=0xD7AF    // hangul syllables
        | 0xF900..=0xFAFF    // compatibility ideographs
        | 0x20000..=0x2FA1F  // ext B onwards
    )
}

/// Half-open `(start, end)` char ranges of the tokens in `text`.
pub fn tokenize(text: &str) -> Vec<(usize, usize)> {
    let mut tokens = Vec::new();
    let mut run_start: Option<usize> = None;
    let mut pos = 0;
    for c in text.chars() {
        if is_cjk(c) {
            if let Some(s) = run_start.take() {
                tokens.push((s, pos));
            }
            tokens.push((pos, pos + 1));
        } else if c.is_alphanumeric() {
            run_start.get_or_insert(pos);
        } else if let Some(s) = run_start.take() {
            tokens.push((s, pos));
        }
        pos += 1;
    }
    if let Some(s) = run_start {
        tokens.push((s, pos));
    }
    tokens
}

/// All tokens of a dialogue in turn order.
pub fn dialogue_tokens(dialogue: &Dialogue) -> Vec<Token> {
    dialogue
        .turns
        .iter()
        .flat_map(|turn| {
            tokenize(&turn.text)
                .into_iter()
                .map(move |(start, end)| Token {
                    turn_index: turn.index,
                    start,
                    end,
                })
        })
        .collect()
}
