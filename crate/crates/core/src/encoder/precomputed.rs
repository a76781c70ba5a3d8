use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::EncoderError;

#[derive(Deserialize)]
struct VectorRecord {
    id: String,
    vector: Vec<f64>,
}

/// Frozen encoder that returns vectors computed offline, keyed by doc id.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedEncoder {
    d_model: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl PrecomputedEncoder {
    pub fn new(d_model: usize) -> Self {
        PrecomputedEncoder {
            d_model,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<(), EncoderError> {
        if vector.len() != self.d_model {
            return Err(EncoderError::DimensionMismatch {
                expected: self.d_model,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(EncoderError::InvalidInput("non-finite vector entry".into()));
        }
        self.vectors.insert(id.into(), vector);
        Ok(())
    }

    /// Reads JSON lines of the form `{"id": "...", "vector": [...]}`.
    pub fn load(path: impl AsRef<Path>, d_model: usize) -> Result<Self, EncoderError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => EncoderError::MissingFile(path.display().to_string()),
            _ => EncoderError::Io(e),
        })?;
        let mut enc = Self::new(d_model);
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: VectorRecord =
                serde_json::from_str(&line).map_err(|e| EncoderError::Parse {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            enc.insert(rec.id, rec.vector)?;
        }
        Ok(enc)
    }

    pub fn d_model(&self) -> usize {
        self.d_model
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn lookup(&self, doc_id: &str) -> Result<&[f64], EncoderError> {
        self.vectors
            .get(doc_id)
            .map(Vec::as_slice)
            .ok_or_else(|| EncoderError::UnknownDocId(doc_id.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn loads_and_looks_up() {
        let f = write(&[
            r#"{"id":"s1","vector":[0,0,0,0]}"#,
            r#"{"id":"s2","vector":[1,2,3,4.5]}"#,
        ]);
        let enc = PrecomputedEncoder::load(f.path(), 4).unwrap();
        assert_eq!(enc.lookup("s1").unwrap(), &[0.0; 4]);
        assert_eq!(enc.lookup("s2").unwrap()[3], 4.5);
        assert!(matches!(
            enc.lookup("zz"),
            Err(EncoderError::UnknownDocId(_))
        ));
    }

    #[test]
    fn wrong_length_is_rejected() {
        let f = write(&[r#"{"id":"s1","vector":[0,0,0]}"#]);
        assert!(matches!(
            PrecomputedEncoder::load(f.path(), 4),
            Err(EncoderError::DimensionMismatch {
                expected: 4,
                found: 3
            })
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            PrecomputedEncoder::load("/no/such/vectors.jsonl", 4),
            Err(EncoderError::MissingFile(_))
        ));
    }
}
