//! Pooled text representations.
//!
//! Two encoders share one contract: given a document, produce a single
//! `1 x d_model` vector. [`MiniEncoder`] is a small trainable transformer
//! whose first-position state is pooled through `linear -> tanh`;
//! [`PrecomputedEncoder`] serves frozen vectors produced elsewhere.

mod mini;
mod precomputed;
mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{NumericsError, ParamStore, Tensor2};

pub use mini::{EncoderConfig, MiniEncoder, MiniEncoderTrace};
pub use precomputed::PrecomputedEncoder;
pub use vocab::{word_tokens, Vocabulary, CLS_TOKEN, DEFAULT_MAX_LEN, PAD_TOKEN, UNK_TOKEN};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("sequence of {len} tokens exceeds maximum {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("vectors file not found: {0}")]
    MissingFile(String),
    #[error("vector dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no precomputed vector for doc id {0:?}")]
    UnknownDocId(String),
    #[error("vectors file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("invalid encoder input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Pooled vector for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRepresentation {
    pub doc_id: String,
    pub vector: Vec<f64>,
}

/// What an encoder needs to know about a document.
#[derive(Debug, Clone, Copy)]
pub struct EncoderInput<'a> {
    pub doc_id: &'a str,
    pub token_ids: &'a [usize],
}

#[derive(Debug, Clone)]
pub enum EncodeTrace {
    Mini(Box<MiniEncoderTrace>),
    Frozen,
}

#[derive(Debug, Clone)]
pub enum TextEncoder {
    Mini(Box<MiniEncoder>),
    Precomputed(PrecomputedEncoder),
}

impl TextEncoder {
    pub fn d_model(&self) -> usize {
        match self {
            TextEncoder::Mini(m) => m.config.d_model,
            TextEncoder::Precomputed(p) => p.d_model(),
        }
    }

    pub fn is_frozen(&self) -> bool {
        matches!(self, TextEncoder::Precomputed(_))
    }

    /// Token ids for `text`; empty for the frozen encoder, which keys on doc id.
    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        match self {
            TextEncoder::Mini(m) => m.tokenize(text),
            TextEncoder::Precomputed(_) => Vec::new(),
        }
    }

    pub fn encode(
        &self,
        store: &ParamStore,
        input: EncoderInput<'_>,
    ) -> Result<(Tensor2, EncodeTrace), EncoderError> {
        match self {
            TextEncoder::Mini(m) => {
                let (v, trace) = m.encode(store, input.token_ids)?;
                Ok((v, EncodeTrace::Mini(Box::new(trace))))
            }
            TextEncoder::Precomputed(p) => {
                let v = p.lookup(input.doc_id)?;
                Ok((Tensor2::row_vector(v.to_vec()), EncodeTrace::Frozen))
            }
        }
    }

    pub fn backward(
        &self,
        store: &mut ParamStore,
        trace: &EncodeTrace,
        dvec: &Tensor2,
    ) -> Result<(), EncoderError> {
        match (self, trace) {
            (TextEncoder::Mini(m), EncodeTrace::Mini(t)) => m.backward(store, t, dvec),
            (_, EncodeTrace::Frozen) => Ok(()),
            (TextEncoder::Precomputed(_), EncodeTrace::Mini(_)) => Err(EncoderError::InvalidInput(
                "trace does not belong to this encoder".into(),
            )),
        }
    }

    pub fn represent(
        &self,
        store: &ParamStore,
        input: EncoderInput<'_>,
    ) -> Result<TextRepresentation, EncoderError> {
        let (v, _) = self.encode(store, input)?;
        Ok(TextRepresentation {
            doc_id: input.doc_id.to_string(),
            vector: v.into_vec(),
        })
    }
}
