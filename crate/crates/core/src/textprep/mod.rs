//! Text preprocessing: normalization, stopword removal and stemming,
//! applied in that order.

mod porter;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use porter::stem_token;

const ENGLISH_STOPWORDS: &str = include_str!("../../data/english_stopwords.txt");

/// Ordered lowercase alphabetic tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(pub Vec<String>);

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn join(&self, sep: &str) -> String {
        self.0.join(sep)
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSequence {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSequence(iter.into_iter().map(Into::into).collect())
    }
}

/// Lowercases and splits on everything that is not an ASCII letter.
/// Digits, punctuation, whitespace and non-ASCII characters all act as
/// separators.
pub fn normalize_text(text: &str) -> TokenSequence {
    text.split(|c: char| !c.is_ascii_alphabetic())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_ascii_lowercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordList {
    words: HashSet<String>,
}

impl StopwordList {
    /// The bundled 179-word English list.
    pub fn english() -> Self {
        Self::parse(ENGLISH_STOPWORDS)
    }

    /// One word per line; blank lines and `#` lines are skipped.
    pub fn parse(contents: &str) -> Self {
        let words = contents
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        StopwordList { words }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&contents))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

impl Default for StopwordList {
    fn default() -> Self {
        Self::english()
    }
}

pub fn remove_stopwords(tokens: &TokenSequence, stopwords: &StopwordList) -> TokenSequence {
    tokens.iter().filter(|t| !stopwords.contains(t)).collect()
}

/// The full chain with a configurable stopword list.
#[derive(Debug, Clone, Default)]
pub struct Preprocessor {
    stopwords: StopwordList,
}

impl Preprocessor {
    pub fn new(stopwords: StopwordList) -> Self {
        Preprocessor { stopwords }
    }

    pub fn stopwords(&self) -> &StopwordList {
        &self.stopwords
    }

    pub fn preprocess(&self, text: &str) -> TokenSequence {
        let kept = remove_stopwords(&normalize_text(text), &self.stopwords);
        kept.iter().map(stem_token).collect()
    }
}

/// [`Preprocessor::preprocess`] with the bundled English stopwords.
pub fn preprocess(text: &str) -> TokenSequence {
    Preprocessor::default().preprocess(text)
}
