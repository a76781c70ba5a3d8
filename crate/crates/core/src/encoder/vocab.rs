use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::EncoderError;

pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";
pub const CLS_TOKEN: &str = "[CLS]";

pub const DEFAULT_MAX_LEN: usize = 250;

/// Lowercased word tokens: runs of alphanumerics (apostrophes kept inside words).
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|w| w.trim_matches('\''))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Word-level vocabulary. Ids 0, 1, 2 are PAD, UNK and CLS; regular tokens
/// follow in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        Vocabulary::from_tokens(r.tokens)
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr { tokens: v.tokens }
    }
}

impl Vocabulary {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;
    pub const CLS: usize = 2;

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    pub fn build<S: AsRef<str>>(corpus: &[S], min_freq: usize) -> Result<Self, EncoderError> {
        if corpus.is_empty() {
            return Err(EncoderError::EmptyCorpus);
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for doc in corpus {
            for w in word_tokens(doc.as_ref()) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut tokens = vec![
            PAD_TOKEN.to_string(),
            UNK_TOKEN.to_string(),
            CLS_TOKEN.to_string(),
        ];
        tokens.extend(
            counts
                .into_iter()
                .filter(|&(_, c)| c >= min_freq.max(1))
                .map(|(w, _)| w),
        );
        Ok(Self::from_tokens(tokens))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `[CLS]` followed by word ids (UNK for unknown words), at most `max_len` ids.
    pub fn tokenize(&self, text: &str, max_len: usize) -> Vec<usize> {
        let max_len = max_len.max(1);
        let mut ids = Vec::with_capacity(max_len.min(64));
        ids.push(Self::CLS);
        for w in word_tokens(text) {
            if ids.len() == max_len {
                break;
            }
            ids.push(self.id(&w).unwrap_or(Self::UNK));
        }
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_freq_filters_rare_words() {
        let v = Vocabulary::build(&["a b", "b c"], 2).unwrap();
        assert_eq!(v.tokens(), &[PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, "b"]);
        let v = Vocabulary::build(&["a b", "b c"], 1).unwrap();
        assert_eq!(v.tokens()[3..], ["a", "b", "c"]);
    }

    #[test]
    fn rebuild_is_identical() {
        let corpus = ["The agent, was RUDE!", "don't call me", "rude rude agent"];
        assert_eq!(
            Vocabulary::build(&corpus, 1).unwrap(),
            Vocabulary::build(&corpus, 1).unwrap()
        );
    }

    #[test]
    fn empty_corpus() {
        let empty: [&str; 0] = [];
        assert!(matches!(
            Vocabulary::build(&empty, 1),
            Err(EncoderError::EmptyCorpus)
        ));
    }

    #[test]
    fn tokenize_edges() {
        let v = Vocabulary::build(&["hello world"], 1).unwrap();
        assert_eq!(v.tokenize("", 250), vec![Vocabulary::CLS]);
        let ids = v.tokenize("hello there world", 250);
        assert_eq!(
            ids,
            vec![
                Vocabulary::CLS,
                v.id("hello").unwrap(),
                Vocabulary::UNK,
                v.id("world").unwrap()
            ]
        );
        let long = vec!["hello"; 300].join(" ");
        let ids = v.tokenize(&long, 250);
        assert_eq!(ids.len(), 250);
        assert_eq!(ids[0], Vocabulary::CLS);
    }

    #[test]
    fn punctuation_splits_words() {
        assert_eq!(
            word_tokens("Hi,there. It's 5pm!"),
            vec!["hi", "there", "it's", "5pm"]
        );
    }
}
