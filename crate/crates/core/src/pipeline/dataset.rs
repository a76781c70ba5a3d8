//! JSON-lines datasets: `{"id": ..., "text": ..., "labels": [...]}` per line.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::PipelineError;
use crate::rulebook::TopicRuleSet;
use crate::training::LabeledSample;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
    pub source: Option<PathBuf>,
    pub schema_version: u32,
}

#[derive(Deserialize)]
struct Line {
    id: String,
    text: String,
    #[serde(default)]
    labels: Vec<String>,
}

/// Collapses every run of whitespace to one space and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses a dataset from any reader. Blank lines are skipped.
pub fn parse_dataset<R: BufRead>(
    reader: R,
    rules: &TopicRuleSet,
) -> Result<Vec<LabeledSample>, PipelineError> {
    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: Line = serde_json::from_str(&line).map_err(|e| PipelineError::MalformedLine {
            line: n,
            reason: e.to_string(),
        })?;
        let text = normalize_whitespace(&raw.text);
        if text.is_empty() {
            return Err(PipelineError::MalformedLine {
                line: n,
                reason: "empty text".into(),
            });
        }
        if !seen.insert(raw.id.clone()) {
            return Err(PipelineError::DuplicateDocId(raw.id));
        }
        for label in &raw.labels {
            if rules.id_of(label).is_none() {
                return Err(PipelineError::UnknownLabel(label.clone()));
            }
        }
        samples.push(LabeledSample::new(raw.id, text, raw.labels));
    }
    Ok(samples)
}

pub fn ingest(path: impl AsRef<Path>, rules: &TopicRuleSet) -> Result<Dataset, PipelineError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => PipelineError::MissingFile(path.to_path_buf()),
        _ => PipelineError::Io(e),
    })?;
    Ok(Dataset {
        samples: parse_dataset(BufReader::new(file), rules)?,
        source: Some(path.to_path_buf()),
        schema_version: SCHEMA_VERSION,
    })
}

pub fn write_jsonl(samples: &[LabeledSample], path: impl AsRef<Path>) -> Result<(), PipelineError> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
