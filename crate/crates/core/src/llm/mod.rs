//! Prompt rendering, chat-completion gateways and response parsing for the
//! model-backed predictors.

mod gateway;
mod http;
mod mock;
mod parse;
mod prompt;

pub use gateway::{ChatGateway, Client, GatewayConfig, GatewayFailure, InFlight};
pub use http::HttpGateway;
pub use mock::{prompt_hash, MockFailure, MockGateway, MockReply, MockRule, MockScript};
pub use parse::{parse_verdict, LlmVerdict, ParseStatus, VerdictPayload};
pub use prompt::{render_prompt, Demo, PromptContext, TemplateId};
