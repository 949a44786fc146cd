//! Statistical baseline: normalized text, BoW or TF-IDF features and a
//! random forest, bundled as one serializable model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Snippet;
use crate::eval::PredictionRecord;
use crate::features::{self, FeatureError, Featurizer, SparseVector, Vocabulary};
use crate::forest::{self, ForestConfig, ForestError, RandomForestModel};
use crate::normalize::Normalizer;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("model was trained against vocabulary {expected}, found {found}")]
    VocabularyMismatch { expected: String, found: String },
    #[error("model (de)serialization failed: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Featurizer plus learner configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub featurizer: Featurizer,
    pub min_df: usize,
    pub normalizer: Normalizer,
    pub forest: ForestConfig,
}

impl Pipeline {
    pub fn new(featurizer: Featurizer, forest: ForestConfig) -> Self {
        Pipeline {
            featurizer,
            min_df: 1,
            normalizer: Normalizer::default(),
            forest,
        }
    }

    pub fn name(&self) -> String {
        match self.featurizer {
            Featurizer::Bow => "RF + BoW".to_string(),
            Featurizer::Tfidf => "RF + TF-IDF".to_string(),
        }
    }

    fn tokens(&self, snippets: &[Snippet]) -> Vec<Vec<String>> {
        snippets
            .iter()
            .map(|s| features::tokenize(&self.normalizer.normalize(s)))
            .collect()
    }

    /// Fits vocabulary and forest on `train`. The forest seed is replaced by
    /// `seed`.
    pub fn fit(&self, train: &[Snippet], seed: u64) -> Result<BaselineModel, BaselineError> {
        let tokens = self.tokens(train);
        let vocab = features::build_vocab(&tokens, self.min_df)?;
        let x: Vec<SparseVector> = tokens
            .iter()
            .map(|t| features::vectorize(self.featurizer, t, &vocab))
            .collect();
        let y: Vec<u8> = train.iter().map(|s| s.label).collect();
        let config = ForestConfig {
            seed,
            ..self.forest.clone()
        };
        let forest = forest::train_forest(&x, &y, &config)?.with_vocab_fingerprint(vocab.fingerprint());
        Ok(BaselineModel {
            pipeline: Pipeline {
                forest: config,
                ..self.clone()
            },
            vocabulary: vocab,
            forest,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub pipeline: Pipeline,
    pub vocabulary: Vocabulary,
    pub forest: RandomForestModel,
}

impl BaselineModel {
    pub fn vectorize(&self, snippet: &Snippet) -> SparseVector {
        let doc = self.pipeline.normalizer.normalize(snippet);
        features::vectorize(
            self.pipeline.featurizer,
            &features::tokenize(&doc),
            &self.vocabulary,
        )
    }

    pub fn predict(&self, snippets: &[Snippet]) -> Result<Vec<PredictionRecord>, BaselineError> {
        snippets
            .iter()
            .map(|s| {
                let p = self.forest.predict(&self.vectorize(s))?;
                Ok(PredictionRecord {
                    id: s.id.clone(),
                    predicted_label: p.label,
                    score: Some(p.score),
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String, BaselineError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, BaselineError> {
        let model: BaselineModel = serde_json::from_str(text)?;
        let found = model.vocabulary.fingerprint();
        match &model.forest.vocab_fingerprint {
            Some(expected) if *expected != found => Err(BaselineError::VocabularyMismatch {
                expected: expected.clone(),
                found,
            }),
            _ => Ok(model),
        }
    }
}
