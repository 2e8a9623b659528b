//! Two-level assessment of second-language dialogues.
//!
//! Micro-level feature spans and macro-level interactivity labels are
//! aggregated from two annotators, turned into feature vectors, and fed to a
//! three-step cascade (spans, then macro labels, then an overall 1..5 score)
//! whose steps can each be bound to gold annotations, a classical classifier
//! or a chat-completion model.

pub mod annotation;
pub mod corpus;
pub mod error;
pub mod featurize;
pub mod importance_analysis;
pub mod jsonl;
pub mod llm;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod synthetic;
pub mod table;
pub mod taxonomy;

pub use annotation::{FeatureSpan, MacroAnnotation, OverallAnnotation};
pub use corpus::{Corpus, Dialogue, Turn};
pub use error::{Error, Result};
pub use featurize::{MacroVector, MicroVector};
pub use taxonomy::{Aspect, MacroScores, Score, Taxonomy, Tier};
