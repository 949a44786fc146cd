//! Whitespace tokenization and bag-of-words / TF-IDF vectorization.
//!
//! TF-IDF uses raw counts for term frequency and the smoothed inverse
//! document frequency `ln((1 + N) / (1 + df)) + 1`, followed by L2
//! normalization.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::normalize::NormalizedDoc;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("no token reaches min_df = {0}")]
    EmptyVocabulary(usize),
    #[error("invalid sparse vector: {0}")]
    InvalidVector(String),
}

pub fn tokenize(doc: &NormalizedDoc) -> Vec<String> {
    tokenize_str(&doc.text)
}

pub fn tokenize_str(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

/// Sparse vector with strictly increasing indices and no stored zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dimension: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn new(dimension: usize, entries: Vec<(usize, f64)>) -> Result<Self, FeatureError> {
        for window in entries.windows(2) {
            if window[0].0 >= window[1].0 {
                return Err(FeatureError::InvalidVector(format!(
                    "indices not strictly increasing at {}",
                    window[1].0
                )));
            }
        }
        if let Some(&(i, _)) = entries.iter().find(|(i, _)| *i >= dimension) {
            return Err(FeatureError::InvalidVector(format!(
                "index {i} out of dimension {dimension}"
            )));
        }
        if entries.iter().any(|(_, w)| *w == 0.0 || !w.is_finite()) {
            return Err(FeatureError::InvalidVector(
                "explicit zero or non-finite weight".into(),
            ));
        }
        Ok(SparseVector { dimension, entries })
    }

    /// Builds a sparse vector from a dense slice, dropping zeros.
    pub fn from_dense(values: &[f64]) -> Self {
        SparseVector {
            dimension: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect(),
        }
    }

    pub fn zeros(dimension: usize) -> Self {
        SparseVector {
            dimension,
            entries: Vec::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.entries.binary_search_by_key(&index, |(i, _)| *i) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dimension];
        for &(i, w) in &self.entries {
            dense[i] = w;
        }
        dense
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Featurizer {
    Bow,
    Tfidf,
}

impl std::str::FromStr for Featurizer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bow" => Ok(Featurizer::Bow),
            "tfidf" | "tf-idf" => Ok(Featurizer::Tfidf),
            other => Err(format!("unknown featurizer `{other}` (expected bow or tfidf)")),
        }
    }
}

impl std::fmt::Display for Featurizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Featurizer::Bow => "bow",
            Featurizer::Tfidf => "tfidf",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub token: String,
    pub index: usize,
    pub df: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyDoc {
    corpus_size: usize,
    min_df: usize,
    entries: Vec<VocabEntry>,
}

/// Token index with document frequencies. Serialized as
/// `{corpus_size, min_df, entries: [{token, index, df}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyDoc", into = "VocabularyDoc")]
pub struct Vocabulary {
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
    token_to_index: HashMap<String, usize>,
    corpus_size: usize,
    min_df: usize,
}

impl TryFrom<VocabularyDoc> for Vocabulary {
    type Error = String;

    fn try_from(doc: VocabularyDoc) -> Result<Self, Self::Error> {
        let mut entries = doc.entries;
        entries.sort_by_key(|e| e.index);
        let mut token_to_index = HashMap::with_capacity(entries.len());
        for (expected, entry) in entries.iter().enumerate() {
            if entry.index != expected {
                return Err(format!("vocabulary indices are not dense at {expected}"));
            }
            if entry.df > doc.corpus_size || entry.df < doc.min_df {
                return Err(format!("token `{}` has out-of-range df {}", entry.token, entry.df));
            }
            if token_to_index.insert(entry.token.clone(), entry.index).is_some() {
                return Err(format!("duplicate token `{}`", entry.token));
            }
        }
        Ok(Vocabulary {
            doc_freq: entries.iter().map(|e| e.df).collect(),
            tokens: entries.into_iter().map(|e| e.token).collect(),
            token_to_index,
            corpus_size: doc.corpus_size,
            min_df: doc.min_df,
        })
    }
}

impl From<Vocabulary> for VocabularyDoc {
    fn from(vocab: Vocabulary) -> Self {
        VocabularyDoc {
            corpus_size: vocab.corpus_size,
            min_df: vocab.min_df,
            entries: vocab
                .tokens
                .into_iter()
                .zip(vocab.doc_freq)
                .enumerate()
                .map(|(index, (token, df))| VocabEntry { token, index, df })
                .collect(),
        }
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    pub fn min_df(&self) -> usize {
        self.min_df
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.token_to_index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn doc_freq(&self, token: &str) -> Option<usize> {
        self.index_of(token).map(|i| self.doc_freq[i])
    }

    pub fn idf_at(&self, index: usize) -> f64 {
        let n = self.corpus_size as f64;
        ((1.0 + n) / (1.0 + self.doc_freq[index] as f64)).ln() + 1.0
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        self.index_of(token).map(|i| self.idf_at(i))
    }

    /// SHA-256 over the serialized vocabulary; ties trained models to the
    /// feature space they were trained on.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("vocabulary serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Builds a vocabulary keeping tokens that occur in at least `min_df`
/// documents. Indices follow first appearance.
pub fn build_vocab<S: AsRef<str>>(
    corpus: &[Vec<S>],
    min_df: usize,
) -> Result<Vocabulary, FeatureError> {
    if corpus.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    let mut order: Vec<&str> = Vec::new();
    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in corpus {
        let mut local = HashSet::new();
        let unique = doc.iter().map(AsRef::as_ref).filter(|t| local.insert(*t));
        for token in unique {
            let count = df.entry(token).or_insert(0);
            if *count == 0 {
                order.push(token);
            }
            *count += 1;
        }
    }
    let mut tokens = Vec::new();
    let mut doc_freq = Vec::new();
    let mut token_to_index = HashMap::new();
    for token in order {
        let count = df[token];
        if count >= min_df {
            token_to_index.insert(token.to_owned(), tokens.len());
            tokens.push(token.to_owned());
            doc_freq.push(count);
        }
    }
    if tokens.is_empty() {
        return Err(FeatureError::EmptyVocabulary(min_df));
    }
    Ok(Vocabulary {
        tokens,
        doc_freq,
        token_to_index,
        corpus_size: corpus.len(),
        min_df,
    })
}

fn counts<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Vec<(usize, f64)> {
    let mut tally: HashMap<usize, f64> = HashMap::new();
    for token in tokens {
        if let Some(i) = vocab.index_of(token.as_ref()) {
            *tally.entry(i).or_insert(0.0) += 1.0;
        }
    }
    let mut entries: Vec<(usize, f64)> = tally.into_iter().collect();
    entries.sort_unstable_by_key(|(i, _)| *i);
    entries
}

/// Raw token counts; out-of-vocabulary tokens are ignored.
pub fn bow_vectorize<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> SparseVector {
    SparseVector {
        dimension: vocab.len(),
        entries: counts(tokens, vocab),
    }
}

/// TF-IDF weights, L2-normalized unless the document has no known token.
pub fn tfidf_vectorize<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> SparseVector {
    let mut entries = counts(tokens, vocab);
    for (i, w) in entries.iter_mut() {
        *w *= vocab.idf_at(*i);
    }
    let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, w) in entries.iter_mut() {
            *w /= norm;
        }
    }
    SparseVector {
        dimension: vocab.len(),
        entries,
    }
}

pub fn vectorize<S: AsRef<str>>(
    featurizer: Featurizer,
    tokens: &[S],
    vocab: &Vocabulary,
) -> SparseVector {
    match featurizer {
        Featurizer::Bow => bow_vectorize(tokens, vocab),
        Featurizer::Tfidf => tfidf_vectorize(tokens, vocab),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn docs(raw: &[&[&str]]) -> Vec<Vec<String>> {
        raw.iter()
            .map(|d| d.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    #[test]
    fn tokenize_examples() {
        let doc = NormalizedDoc {
            source_id: "a".into(),
            text: "shell: php occ".into(),
        };
        assert_eq!(tokenize(&doc), ["shell:", "php", "occ"]);
        assert!(tokenize_str("").is_empty());
    }

    #[test]
    fn doc_freq_and_threshold() {
        let corpus = docs(&[&["a", "b"], &["b"]]);
        let vocab = build_vocab(&corpus, 1).unwrap();
        assert_eq!(vocab.doc_freq("a"), Some(1));
        assert_eq!(vocab.doc_freq("b"), Some(2));
        assert_eq!(vocab.index_of("a"), Some(0));
        let pruned = build_vocab(&corpus, 2).unwrap();
        assert_eq!(pruned.len(), 1);
        assert_eq!(pruned.index_of("b"), Some(0));
        assert_eq!(build_vocab(&corpus, 3), Err(FeatureError::EmptyVocabulary(3)));
        assert_eq!(
            build_vocab::<String>(&[], 1),
            Err(FeatureError::EmptyCorpus)
        );
    }

    #[test]
    fn bow_counts_and_oov() {
        let vocab = build_vocab(&docs(&[&["a", "b"]]), 1).unwrap();
        let v = bow_vectorize(&["b", "b", "a"], &vocab);
        assert_eq!(v.entries(), &[(0, 1.0), (1, 2.0)]);
        assert_eq!(bow_vectorize(&["zzz"], &vocab).nnz(), 0);
    }

    #[test]
    fn ubiquitous_token_has_unit_idf() {
        let vocab = build_vocab(&docs(&[&["t"], &["t"], &["t"]]), 1).unwrap();
        assert_eq!(vocab.idf("t"), Some(1.0));
        assert!(tfidf_vectorize::<&str>(&[], &vocab).entries().is_empty());
    }

    #[test]
    fn three_doc_formula() {
        let corpus = docs(&[&["a", "b", "b"], &["b", "c"], &["c", "c", "d"]]);
        let vocab = build_vocab(&corpus, 1).unwrap();
        let v = tfidf_vectorize(&corpus[0], &vocab);
        // hand evaluation: idf(a) = ln(4/2)+1, idf(b) = ln(4/3)+1
        let wa = (2.0f64).ln() + 1.0;
        let wb = 2.0 * ((4.0f64 / 3.0).ln() + 1.0);
        let norm = (wa * wa + wb * wb).sqrt();
        assert!((v.get(0) - wa / norm).abs() < 1e-12);
        assert!((v.get(1) - wb / norm).abs() < 1e-12);
        assert_eq!(v.nnz(), 2);
    }

    #[test]
    fn vocabulary_json_round_trip() {
        let vocab = build_vocab(&docs(&[&["x", "y"], &["y", "z"]]), 1).unwrap();
        let json = serde_json::to_string(&vocab).unwrap();
        assert!(json.contains(r#""corpus_size":2"#));
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vocab);
        assert_eq!(back.fingerprint(), vocab.fingerprint());
    }

    #[test]
    fn sparse_vector_invariants() {
        assert!(SparseVector::new(3, vec![(1, 1.0), (0, 1.0)]).is_err());
        assert!(SparseVector::new(3, vec![(3, 1.0)]).is_err());
        assert!(SparseVector::new(3, vec![(1, 0.0)]).is_err());
        let v = SparseVector::new(3, vec![(0, 2.0), (2, 1.0)]).unwrap();
        assert_eq!(v.to_dense(), vec![2.0, 0.0, 1.0]);
        assert_eq!(SparseVector::from_dense(&v.to_dense()), v);
    }

    fn corpus_strategy() -> impl Strategy<Value = Vec<Vec<String>>> {
        proptest::collection::vec(
            proptest::collection::vec("[a-f]{1,2}", 0..15),
            1..20,
        )
    }

    proptest! {
        #[test]
        fn df_matches_membership(corpus in corpus_strategy()) {
            prop_assume!(corpus.iter().any(|d| !d.is_empty()));
            let vocab = build_vocab(&corpus, 1).unwrap();
            for i in 0..vocab.len() {
                let token = vocab.token(i).unwrap();
                let brute = corpus.iter().filter(|d| d.iter().any(|t| t == token)).count();
                prop_assert_eq!(vocab.doc_freq(token), Some(brute));
            }
        }

        #[test]
        fn idf_is_monotone(corpus in corpus_strategy()) {
            prop_assume!(corpus.iter().any(|d| !d.is_empty()));
            let vocab = build_vocab(&corpus, 1).unwrap();
            for a in 0..vocab.len() {
                for b in 0..vocab.len() {
                    let (ta, tb) = (vocab.token(a).unwrap(), vocab.token(b).unwrap());
                    if vocab.doc_freq(ta) < vocab.doc_freq(tb) {
                        prop_assert!(vocab.idf_at(a) > vocab.idf_at(b));
                    }
                }
            }
        }

        #[test]
        fn bow_weights_bounded_by_length(corpus in corpus_strategy(), doc in proptest::collection::vec("[a-h]{1,2}", 0..30)) {
            prop_assume!(corpus.iter().any(|d| !d.is_empty()));
            let vocab = build_vocab(&corpus, 1).unwrap();
            let v = bow_vectorize(&doc, &vocab);
            let total: f64 = v.entries().iter().map(|(_, w)| *w).sum();
            prop_assert!(total <= doc.len() as f64);
            prop_assert!(v.entries().iter().all(|(_, w)| *w >= 1.0 && w.fract() == 0.0));
        }
    }
}
