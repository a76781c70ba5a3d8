//! Topic classification that fuses regex rule features with a dense text
//! representation.
//!
//! The pipeline is: tag the text with a rulebook, embed the fired rule ids,
//! fuse them with the pooled text vector (self-attention or a linear map),
//! and classify through a two-layer head with one sigmoid per topic. When
//! every topic falls below the decision threshold the document is reported
//! as an emerging topic.

pub mod encoder;
pub mod evaluation;
pub mod fusion;
pub mod numerics;
pub mod pipeline;
pub mod prediction;
pub mod rulebook;
pub mod training;

pub use prediction::{PredictionSet, TopicScore, EMERGING_TOPIC};
pub use rulebook::{RegexFeatureVector, TopicRule, TopicRuleSet};
