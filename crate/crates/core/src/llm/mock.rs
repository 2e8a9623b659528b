//! Deterministic stand-in for a chat-completion endpoint.
//!
//! Script file:
//!
//! ```text
//! {
//!   "by_hash":  {"<sha256 hex of prompt>": [reply, ...]},
//!   "rules":    [{"contains": ["dialogue d7", "score"], "replies": [reply, ...]}],
//!   "sequence": [reply, ...],
//!   "fallback": reply
//! }
//! reply = {"text": "..."} | {"fail": "transport" | "rate_limit" | "auth"}
//! ```
//!
//! Lookup order is `by_hash`, then the first rule whose substrings all occur
//! in the prompt, then `sequence`, then `fallback`. Each hash and each rule
//! keeps its own cursor and repeats its last reply once exhausted; the
//! sequence cursor is global and suits single-threaded use only. A prompt
//! matching nothing is a non-retryable failure.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::gateway::{ChatGateway, GatewayFailure};
use crate::error::{Error, Result};
use crate::jsonl::read_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFailure {
    Transport,
    RateLimit,
    Auth,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockReply {
    Text { text: String },
    Fail { fail: MockFailure },
}

impl MockReply {
    pub fn text(t: impl Into<String>) -> Self {
        MockReply::Text { text: t.into() }
    }

    fn into_result(self) -> std::result::Result<String, GatewayFailure> {
        match self {
            MockReply::Text { text } => Ok(text),
            MockReply::Fail { fail } => Err(match fail {
                MockFailure::Transport => GatewayFailure::Transport("scripted transport failure".into()),
                MockFailure::RateLimit => GatewayFailure::RateLimited("scripted rate limit".into()),
                MockFailure::Auth => GatewayFailure::Auth("scripted auth failure".into()),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    pub contains: Vec<String>,
    pub replies: Vec<MockReply>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockScript {
    pub by_hash: BTreeMap<String, Vec<MockReply>>,
    pub rules: Vec<MockRule>,
    pub sequence: Vec<MockReply>,
    pub fallback: Option<MockReply>,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&read_text(path)?)
            .map_err(|e| Error::Config(format!("mock script {}: {e}", path.display())))
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

type Responder = dyn Fn(&str) -> Option<MockReply> + Send + Sync;

#[derive(Default)]
struct Cursors {
    by_hash: BTreeMap<String, usize>,
    rules: BTreeMap<usize, usize>,
    sequence: usize,
}

pub struct MockGateway {
    script: MockScript,
    responder: Option<Box<Responder>>,
    cursors: Mutex<Cursors>,
}

fn next_of(replies: &[MockReply], cursor: &mut usize) -> Option<MockReply> {
    let reply = replies.get((*cursor).min(replies.len().checked_sub(1)?))?.clone();
    *cursor += 1;
    Some(reply)
}

impl MockGateway {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            responder: None,
            cursors: Mutex::new(Cursors::default()),
        }
    }

    /// Replies computed from the prompt; consulted after the script's hash
    /// and rule entries, before its sequence.
    pub fn with_responder(
        script: MockScript,
        responder: impl Fn(&str) -> Option<MockReply> + Send + Sync + 'static,
    ) -> Self {
        Self {
            responder: Some(Box::new(responder)),
            ..Self::new(script)
        }
    }

    pub fn fixed(text: impl Into<String>) -> Self {
        Self::new(MockScript {
            fallback: Some(MockReply::text(text)),
            ..MockScript::default()
        })
    }

    fn lookup(&self, prompt: &str) -> Option<MockReply> {
        let mut cursors = self.cursors.lock().unwrap_or_else(|e| e.into_inner());
        let hash = prompt_hash(prompt);
        if let Some(replies) = self.script.by_hash.get(&hash) {
            return next_of(replies, cursors.by_hash.entry(hash).or_default());
        }
        for (i, rule) in self.script.rules.iter().enumerate() {
            if rule.contains.iter().all(|needle| prompt.contains(needle.as_str())) {
                return next_of(&rule.replies, cursors.rules.entry(i).or_default());
            }
        }
        if let Some(reply) = self.responder.as_ref().and_then(|r| r(prompt)) {
            return Some(reply);
        }
        if cursors.sequence < self.script.sequence.len() {
            cursors.sequence += 1;
            return Some(self.script.sequence[cursors.sequence - 1].clone());
        }
        self.script.fallback.clone()
    }
}

impl ChatGateway for MockGateway {
    fn send(&self, prompt: &str) -> std::result::Result<String, GatewayFailure> {
        match self.lookup(prompt) {
            Some(reply) => reply.into_result(),
            None => Err(GatewayFailure::Fatal(format!(
                "no scripted reply for prompt {}",
                &prompt_hash(prompt)[..12]
            ))),
        }
    }

    fn describe(&self) -> String {
        "mock".into()
    }
}

#[cfg(test)]
mod tests {
    use super::super::gateway::{Client, GatewayConfig};
    use super::*;

    fn cfg(max_retries: u32) -> GatewayConfig {
        GatewayConfig {
            max_retries,
            backoff_base_ms: 0,
            ..GatewayConfig::default()
        }
    }

    #[test]
    fn fixed_reply() {
        let c = Client::new(Box::new(MockGateway::fixed("hello")), cfg(0)).unwrap();
        assert_eq!(c.complete("anything").unwrap(), "hello");
    }

    #[test]
    fn fail_twice_then_succeed() {
        let fail = MockReply::Fail {
            fail: MockFailure::Transport,
        };
        let script = MockScript {
            by_hash: BTreeMap::from([(
                prompt_hash("p"),
                vec![fail.clone(), fail, MockReply::text("ok")],
            )]),
            ..MockScript::default()
        };
        let c = Client::new(Box::new(MockGateway::new(script)), cfg(3)).unwrap();
        assert_eq!(c.complete("p").unwrap(), "ok");
        // cursor stays on the last reply
        assert_eq!(c.complete("p").unwrap(), "ok");
    }

    #[test]
    fn always_failing_gives_up_after_two_attempts() {
        let script = MockScript {
            fallback: Some(MockReply::Fail {
                fail: MockFailure::RateLimit,
            }),
            ..MockScript::default()
        };
        let c = Client::new(Box::new(MockGateway::new(script)), cfg(1)).unwrap();
        match c.complete("p") {
            Err(Error::Gateway { attempts }) => assert_eq!(attempts.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rules_and_unscripted_prompts() {
        let script: MockScript = serde_json::from_str(
            r#"{"rules":[{"contains":["alpha"],"replies":[{"text":"A"}]}],
                "sequence":[{"text":"S1"}]}"#,
        )
        .unwrap();
        let m = MockGateway::new(script);
        assert_eq!(m.send("x alpha y").unwrap(), "A");
        assert_eq!(m.send("other").unwrap(), "S1");
        assert!(matches!(m.send("other"), Err(GatewayFailure::Fatal(_))));
    }
}
