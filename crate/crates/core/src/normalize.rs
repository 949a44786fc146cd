//! Text preprocessing: lowercase, drop filtered characters and undecodable
//! bytes, then flatten to a single line.

use serde::{Deserialize, Serialize};

use crate::corpus::Snippet;

/// Characters removed by the default filter.
pub const DEFAULT_FILTER: [char; 3] = ['.', ',', '!'];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedDoc {
    pub source_id: String,
    pub text: String,
}

impl NormalizedDoc {
    /// True when nothing survived preprocessing.
    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }
}

/// Per-character lowercase mapping. Context-free on purpose, so that it
/// commutes with character filtering.
pub fn lowercase(text: &str) -> String {
    text.chars().flat_map(char::to_lowercase).collect()
}

/// Decodes `bytes` as UTF-8, deleting invalid sequences, and removes every
/// character in the default filter set.
pub fn filter_chars(bytes: &[u8]) -> String {
    Normalizer::default().filter_chars(bytes)
}

/// Collapses every whitespace run (newlines and indentation included) into a
/// single space and trims both ends.
pub fn flatten(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Runs the default pipeline over a snippet body.
pub fn normalize(snippet: &Snippet) -> NormalizedDoc {
    Normalizer::default().normalize(snippet)
}

/// Preprocessing pipeline with a configurable filter set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Normalizer {
    pub filter: Vec<char>,
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer {
            filter: DEFAULT_FILTER.to_vec(),
        }
    }
}

impl Normalizer {
    pub fn with_filter(filter: impl IntoIterator<Item = char>) -> Self {
        Normalizer {
            filter: filter.into_iter().collect(),
        }
    }

    pub fn filter_chars(&self, bytes: &[u8]) -> String {
        let mut out = String::with_capacity(bytes.len());
        for chunk in bytes.utf8_chunks() {
            out.extend(chunk.valid().chars().filter(|c| !self.filter.contains(c)));
        }
        out
    }

    /// lowercase, filter, flatten; in that order.
    pub fn normalize_bytes(&self, bytes: &[u8]) -> String {
        let mut decoded = String::with_capacity(bytes.len());
        for chunk in bytes.utf8_chunks() {
            decoded.push_str(chunk.valid());
        }
        let lowered = lowercase(&decoded);
        flatten(&self.filter_chars(lowered.as_bytes()))
    }

    pub fn normalize_text(&self, text: &str) -> String {
        self.normalize_bytes(text.as_bytes())
    }

    pub fn normalize(&self, snippet: &Snippet) -> NormalizedDoc {
        NormalizedDoc {
            source_id: snippet.id.clone(),
            text: self.normalize_text(&snippet.body),
        }
    }
}
