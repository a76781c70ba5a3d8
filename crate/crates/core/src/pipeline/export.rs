//! Newline-delimited bulk-index export: an action line followed by a
//! document line for every prediction.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::PipelineError;
use crate::fusion::Variant;
use crate::prediction::{PredictionSet, TopicScore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulkDocument {
    pub doc_id: String,
    pub topics: Vec<String>,
    pub probabilities: Vec<f64>,
    pub is_emerging: bool,
    pub model_variant: Variant,
    pub timestamp: String,
}

impl BulkDocument {
    pub fn from_prediction(p: &PredictionSet, variant: Variant, timestamp: &str) -> Self {
        BulkDocument {
            doc_id: p.doc_id.clone(),
            topics: p.topics.iter().map(|t| t.name.clone()).collect(),
            probabilities: p.topics.iter().map(|t| t.probability).collect(),
            is_emerging: p.is_emerging,
            model_variant: variant,
            timestamp: timestamp.to_string(),
        }
    }

    pub fn to_prediction(&self, threshold: f64) -> PredictionSet {
        PredictionSet {
            doc_id: self.doc_id.clone(),
            topics: self
                .topics
                .iter()
                .zip(&self.probabilities)
                .map(|(name, &probability)| TopicScore {
                    name: name.clone(),
                    probability,
                })
                .collect(),
            is_emerging: self.is_emerging,
            threshold,
        }
    }
}

pub fn bulk_lines(
    predictions: &[PredictionSet],
    variant: Variant,
    timestamp: &str,
) -> Result<String, PipelineError> {
    if predictions.is_empty() {
        return Err(PipelineError::EmptyPredictions);
    }
    let mut out = String::new();
    for p in predictions {
        out.push_str(&json!({ "index": { "_id": p.doc_id } }).to_string());
        out.push('\n');
        out.push_str(&serde_json::to_string(&BulkDocument::from_prediction(
            p, variant, timestamp,
        ))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn export_bulk(
    predictions: &[PredictionSet],
    variant: Variant,
    timestamp: &str,
    path: impl AsRef<Path>,
) -> Result<(), PipelineError> {
    let body = bulk_lines(predictions, variant, timestamp)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(body.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Reads back `(action id, document)` pairs.
pub fn parse_bulk(text: &str) -> Result<Vec<(String, BulkDocument)>, PipelineError> {
    let lines: Vec<&str> = text.lines().collect();
    if !lines.len().is_multiple_of(2) {
        return Err(PipelineError::MalformedLine {
            line: lines.len(),
            reason: "action line without a document".into(),
        });
    }
    lines
        .chunks(2)
        .enumerate()
        .map(|(i, pair)| {
            let bad = |reason: String| PipelineError::MalformedLine {
                line: 2 * i + 1,
                reason,
            };
            let action: serde_json::Value =
                serde_json::from_str(pair[0]).map_err(|e| bad(e.to_string()))?;
            let id = action["index"]["_id"]
                .as_str()
                .ok_or_else(|| bad("missing index._id".into()))?
                .to_string();
            let doc: BulkDocument =
                serde_json::from_str(pair[1]).map_err(|e| PipelineError::MalformedLine {
                    line: 2 * i + 2,
                    reason: e.to_string(),
                })?;
            Ok((id, doc))
        })
        .collect()
}
