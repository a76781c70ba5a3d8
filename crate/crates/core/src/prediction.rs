use serde::{Deserialize, Serialize};

/// Label emitted when no topic clears the decision threshold.
pub const EMERGING_TOPIC: &str = "Emerging Topic";

/// A topic name together with the probability the model assigned to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicScore {
    pub name: String,
    pub probability: f64,
}

/// Thresholded output for a single document.
///
/// Either a non-empty list of retained topics, or no topics and
/// `is_emerging == true`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub doc_id: String,
    pub topics: Vec<TopicScore>,
    pub is_emerging: bool,
    pub threshold: f64,
}

impl PredictionSet {
    /// Keeps every `(name, p)` with `p >= threshold`, in the given order.
    pub fn from_scores<'a, I>(doc_id: impl Into<String>, scores: I, threshold: f64) -> Self
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let topics: Vec<TopicScore> = scores
            .into_iter()
            .filter(|&(_, p)| p >= threshold)
            .map(|(name, probability)| TopicScore {
                name: name.to_string(),
                probability,
            })
            .collect();
        let is_emerging = topics.is_empty();
        PredictionSet {
            doc_id: doc_id.into(),
            topics,
            is_emerging,
            threshold,
        }
    }

    /// Names of the retained topics, or `[EMERGING_TOPIC]` when nothing was kept.
    pub fn labels(&self) -> Vec<&str> {
        if self.is_emerging {
            vec![EMERGING_TOPIC]
        } else {
            self.topics.iter().map(|t| t.name.as_str()).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_after_threshold_is_emerging() {
        let p = PredictionSet::from_scores("d", [("a", 0.2), ("b", 0.49)], 0.5);
        assert!(p.is_emerging);
        assert_eq!(p.labels(), vec![EMERGING_TOPIC]);
    }

    #[test]
    fn threshold_is_inclusive() {
        let p = PredictionSet::from_scores("d", [("a", 0.5), ("b", 0.1)], 0.5);
        assert!(!p.is_emerging);
        assert_eq!(p.labels(), vec!["a"]);
    }
}
