//! Topic rule sets and regex tagging.
//!
//! A rulebook is a tab-separated text file with one `<id>\t<name>\t<pattern>`
//! record per line. Lines starting with `#` and blank lines are ignored.
//! Exactly [`TOPIC_COUNT`] records with ids `0..TOPIC_COUNT` are required.
//!
//! Tagging runs every pattern against the text (case-insensitive, unanchored)
//! and returns the ids of the rules that fired. When nothing fires the
//! result is the single no-topic sentinel [`NO_TOPIC_ID`].

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prediction::{PredictionSet, EMERGING_TOPIC};

pub const TOPIC_COUNT: usize = 27;
/// Feature id emitted when no rule matches.
pub const NO_TOPIC_ID: usize = TOPIC_COUNT;
/// Topic features plus the no-topic sentinel.
pub const FEATURE_COUNT: usize = TOPIC_COUNT + 1;
pub const DEFAULT_CAP: usize = 7;

const REFERENCE_RULEBOOK: &str = include_str!("../data/rulebook.tsv");

#[derive(Debug, Error)]
pub enum RulebookError {
    #[error("rulebook file not found: {0}")]
    MissingFile(String),
    #[error("rulebook parse error on line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("duplicate topic id {0}")]
    DuplicateTopicId(usize),
    #[error("pattern for topic {id} does not compile: {reason}")]
    BadPattern { id: usize, reason: String },
    #[error("expected {TOPIC_COUNT} rules, found {0}")]
    WrongRuleCount(usize),
    #[error("io error reading rulebook: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct TopicRule {
    pub id: usize,
    pub name: String,
    pub pattern: String,
    regex: Regex,
}

impl TopicRule {
    pub fn new(id: usize, name: &str, pattern: &str) -> Result<Self, RulebookError> {
        let regex = RegexBuilder::new(pattern)
            .case_insensitive(true)
            .build()
            .map_err(|e| RulebookError::BadPattern {
                id,
                reason: e.to_string(),
            })?;
        Ok(TopicRule {
            id,
            name: name.to_string(),
            pattern: pattern.to_string(),
            regex,
        })
    }

    pub fn is_match(&self, text: &str) -> bool {
        self.regex.is_match(text)
    }
}

/// The validated, immutable set of topic rules.
#[derive(Debug, Clone)]
pub struct TopicRuleSet {
    rules: Vec<TopicRule>,
}

/// Per-document list of fired rule ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegexFeatureVector {
    pub doc_id: String,
    pub feature_ids: Vec<usize>,
    pub truncated: bool,
}

impl RegexFeatureVector {
    pub fn is_no_topic(&self) -> bool {
        self.feature_ids == [NO_TOPIC_ID]
    }
}

impl TopicRuleSet {
    pub fn from_rules(mut rules: Vec<TopicRule>) -> Result<Self, RulebookError> {
        let mut seen = HashSet::new();
        for r in &rules {
            if !seen.insert(r.id) {
                return Err(RulebookError::DuplicateTopicId(r.id));
            }
        }
        if rules.len() != TOPIC_COUNT {
            return Err(RulebookError::WrongRuleCount(rules.len()));
        }
        // 27 unique ids, each < 27, are exactly 0..27.
        rules.sort_by_key(|r| r.id);
        Ok(TopicRuleSet { rules })
    }

    pub fn parse(source: &str) -> Result<Self, RulebookError> {
        let mut rules = Vec::new();
        for (idx, raw) in source.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.splitn(3, '\t').collect();
            if fields.len() != 3 {
                return Err(RulebookError::ParseError {
                    line: line_no,
                    reason: "expected <id>\\t<name>\\t<pattern>".into(),
                });
            }
            let id: usize = fields[0]
                .trim()
                .parse()
                .map_err(|_| RulebookError::ParseError {
                    line: line_no,
                    reason: format!("invalid topic id {:?}", fields[0]),
                })?;
            if id >= TOPIC_COUNT {
                return Err(RulebookError::ParseError {
                    line: line_no,
                    reason: format!("topic id {id} outside 0..{TOPIC_COUNT}"),
                });
            }
            let name = fields[1].trim();
            if name.is_empty() {
                return Err(RulebookError::ParseError {
                    line: line_no,
                    reason: "empty topic name".into(),
                });
            }
            rules.push(TopicRule::new(id, name, fields[2])?);
        }
        Self::from_rules(rules)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RulebookError> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(RulebookError::MissingFile(path.display().to_string()));
        }
        Self::parse(&fs::read_to_string(path)?)
    }

    /// The rulebook shipped with the crate.
    pub fn reference() -> Self {
        Self::parse(REFERENCE_RULEBOOK).expect("bundled rulebook is valid")
    }

    pub fn reference_source() -> &'static str {
        REFERENCE_RULEBOOK
    }

    pub fn rules(&self) -> &[TopicRule] {
        &self.rules
    }

    pub fn no_topic_id(&self) -> usize {
        NO_TOPIC_ID
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.rules.get(id).map(|r| r.name.as_str())
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.rules.iter().position(|r| r.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.rules.iter().map(|r| r.name.as_str())
    }

    /// Ids of every rule that fires on `text`, ascending.
    pub fn matching_ids(&self, text: &str) -> Vec<usize> {
        self.rules
            .iter()
            .filter(|r| r.is_match(text))
            .map(|r| r.id)
            .collect()
    }

    pub fn tag(&self, doc_id: &str, text: &str, cap: usize) -> RegexFeatureVector {
        debug_assert!(cap >= 1);
        let cap = cap.max(1);
        let mut ids = self.matching_ids(text);
        let truncated = ids.len() > cap;
        ids.truncate(cap);
        if ids.is_empty() {
            ids.push(NO_TOPIC_ID);
        }
        RegexFeatureVector {
            doc_id: doc_id.to_string(),
            feature_ids: ids,
            truncated,
        }
    }

    /// Rule-only classifier: every fired rule is a topic with probability 1.
    pub fn classify_rules_only(&self, doc_id: &str, text: &str) -> PredictionSet {
        let ids = self.matching_ids(text);
        PredictionSet::from_scores(
            doc_id,
            ids.iter().map(|&id| (self.rules[id].name.as_str(), 1.0)),
            1.0,
        )
    }
}

/// Convenience wrapper mirroring `TopicRuleSet::tag` with the default cap.
pub fn tag(text: &str, rules: &TopicRuleSet) -> RegexFeatureVector {
    rules.tag("", text, DEFAULT_CAP)
}

pub fn emerging_label() -> &'static str {
    EMERGING_TOPIC
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> TopicRuleSet {
        TopicRuleSet::reference()
    }

    fn synthetic_source(n: usize) -> String {
        (0..n)
            .map(|i| format!("{i}\ttopic {i}\tword{i}\\b\n"))
            .collect()
    }

    #[test]
    fn reference_rulebook_has_27_rules() {
        let rb = reference();
        assert_eq!(rb.rules().len(), 27);
        assert_eq!(rb.no_topic_id(), 27);
        assert_eq!(FEATURE_COUNT, 28);
        assert_eq!(rb.name(11), Some("Call Lack of follow-up"));
        assert_eq!(rb.name(3), Some("Agent Service Attitude"));
        assert_eq!(rb.name(4), Some("Agent Service Quality"));
    }

    #[test]
    fn wrong_count_is_rejected() {
        let err = TopicRuleSet::parse(&synthetic_source(26)).unwrap_err();
        assert!(matches!(err, RulebookError::WrongRuleCount(26)));
    }

    #[test]
    fn bad_pattern_is_rejected() {
        let mut src = synthetic_source(27);
        src = src.replace("3\ttopic 3\tword3\\b", "3\ttopic 3\t(");
        let err = TopicRuleSet::parse(&src).unwrap_err();
        assert!(matches!(err, RulebookError::BadPattern { id: 3, .. }));
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let src = synthetic_source(27).replace("5\ttopic 5", "4\ttopic 5");
        let err = TopicRuleSet::parse(&src).unwrap_err();
        assert!(matches!(err, RulebookError::DuplicateTopicId(4)));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let src = format!("# header\n{}oops\n", synthetic_source(27));
        match TopicRuleSet::parse(&src).unwrap_err() {
            RulebookError::ParseError { line, .. } => assert_eq!(line, 29),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn missing_file() {
        let err = TopicRuleSet::load("/definitely/not/here.tsv").unwrap_err();
        assert!(matches!(err, RulebookError::MissingFile(_)));
    }

    #[test]
    fn follow_up_text_tags_rule_11() {
        let fv = tag("nobody called me back or followed up", &reference());
        assert_eq!(fv.feature_ids, vec![11]);
        assert!(!fv.truncated);
    }

    #[test]
    fn gibberish_is_no_topic() {
        assert_eq!(tag("qwertyuiop", &reference()).feature_ids, vec![27]);
        assert_eq!(tag("", &reference()).feature_ids, vec![27]);
    }

    #[test]
    fn cap_truncates_to_lowest_ids() {
        let text = "I could not understand the agent. She gave wrong information. \
                    The call centre is offshore. The agent was rude. Terrible service. \
                    I cannot log in to the app. The app is confusing. The line had a bad connection. \
                    I was transferred twice.";
        let rb = reference();
        assert_eq!(rb.matching_ids(text), (0..9).collect::<Vec<_>>());
        let fv = rb.tag("x", text, DEFAULT_CAP);
        assert_eq!(fv.feature_ids, (0..7).collect::<Vec<_>>());
        assert!(fv.truncated);
    }

    #[test]
    fn rules_only_names_topics() {
        let rb = reference();
        let p = rb.classify_rules_only("a", "nobody called me back");
        assert_eq!(p.labels(), vec!["Call Lack of follow-up"]);
        let p = rb.classify_rules_only("b", "The agent was rude and the service was terrible.");
        assert_eq!(
            p.labels(),
            vec!["Agent Service Attitude", "Agent Service Quality"]
        );
    }

    #[test]
    fn case_study_text_is_emerging_under_rules() {
        let text =
            "I would like to have my coverage details emailed to me which still was not done. \
                    There was no proof for the explanation provided by your agent.";
        let p = reference().classify_rules_only("case", text);
        assert!(p.is_emerging);
        assert_eq!(p.labels(), vec![EMERGING_TOPIC]);
    }

    #[test]
    fn tagging_ignores_case() {
        let rb = reference();
        let t = "The Agent Was RUDE and I Called Back three times";
        assert_eq!(
            rb.tag("", &t.to_lowercase(), 7),
            rb.tag("", &t.to_uppercase(), 7)
        );
    }
}
