//! Random forest of CART trees trained on bootstrap resamples.
//!
//! Tree `i` draws all of its randomness (bootstrap and feature subsets) from
//! `seed::rng(config.seed, "tree", i)`, so trees can be trained in parallel
//! and still assemble into a bit-identical model.

mod tree;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::SparseVector;
use crate::seed;

pub use tree::{gini, train_tree, DecisionTree, Node};

/// Version tag of the serialized model document.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("class counts must be non-negative and not all zero")]
    InvalidCounts,
    #[error("{samples} samples but {labels} labels")]
    LengthMismatch { samples: usize, labels: usize },
    #[error("no training samples")]
    Empty,
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(u8),
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training data contains a single class ({0})")]
    SingleClass(u8),
    #[error("invalid forest configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("model (de)serialization failed: {0}")]
    Serde(String),
}

/// Number of candidate features examined per split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSubset {
    /// `ceil(sqrt(d))`.
    Sqrt,
    All,
    Count(usize),
}

impl FeatureSubset {
    pub fn resolve(&self, dimension: usize) -> usize {
        let d = dimension.max(1);
        match *self {
            FeatureSubset::Sqrt => ((d as f64).sqrt().ceil() as usize).clamp(1, d),
            FeatureSubset::All => d,
            FeatureSubset::Count(n) => n.clamp(1, d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until purity.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub features_per_split: FeatureSubset,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            features_per_split: FeatureSubset::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn check(&self) -> Result<(), ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::InvalidConfig("n_trees must be at least 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(ForestError::InvalidConfig(
                "min_samples_split must be at least 2".into(),
            ));
        }
        if let FeatureSubset::Count(0) = self.features_per_split {
            return Err(ForestError::InvalidConfig(
                "features_per_split must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub format_version: u32,
    pub config: ForestConfig,
    pub dimension: usize,
    /// Fingerprint of the vocabulary the model was trained against, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_fingerprint: Option<String>,
    pub trees: Vec<DecisionTree>,
}

/// Majority vote of a forest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: u8,
    /// Fraction of trees voting for class 1.
    pub score: f64,
}

/// Per-sample multiplicities seen by tree `tree_index`: a bootstrap resample
/// of size `n` drawn with replacement, or all ones when bootstrap is off.
pub fn tree_sample_weights(config: &ForestConfig, n: usize, tree_index: usize) -> Vec<u32> {
    let mut rng = seed::rng(config.seed, "bootstrap", tree_index as u64);
    bootstrap_weights(config.bootstrap, n, &mut rng)
}

fn bootstrap_weights(bootstrap: bool, n: usize, rng: &mut impl Rng) -> Vec<u32> {
    if !bootstrap {
        return vec![1; n];
    }
    let mut weights = vec![0u32; n];
    for _ in 0..n {
        weights[rng.random_range(0..n)] += 1;
    }
    weights
}

/// Trains `config.n_trees` trees. Requires both classes in `y`.
pub fn train_forest(
    x: &[SparseVector],
    y: &[u8],
    config: &ForestConfig,
) -> Result<RandomForestModel, ForestError> {
    config.check()?;
    let data = tree::TrainingSet::new(x, y)?;
    if let Some(first) = y.first() {
        if y.iter().all(|l| l == first) {
            return Err(ForestError::SingleClass(*first));
        }
    }
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|i| {
            let weights = tree_sample_weights(config, x.len(), i);
            let rng = seed::rng(config.seed, "tree", i as u64);
            tree::grow(&data, &weights, config, rng)
        })
        .collect();
    Ok(RandomForestModel {
        format_version: MODEL_FORMAT_VERSION,
        config: config.clone(),
        dimension: data.dimension,
        vocab_fingerprint: None,
        trees,
    })
}

impl RandomForestModel {
    /// Builds a model from already-trained trees.
    pub fn from_trees(
        config: ForestConfig,
        trees: Vec<DecisionTree>,
    ) -> Result<Self, ForestError> {
        let dimension = trees.first().map(|t| t.dimension).ok_or(ForestError::Empty)?;
        if let Some(t) = trees.iter().find(|t| t.dimension != dimension) {
            return Err(ForestError::DimensionMismatch {
                expected: dimension,
                found: t.dimension,
            });
        }
        Ok(RandomForestModel {
            format_version: MODEL_FORMAT_VERSION,
            config,
            dimension,
            vocab_fingerprint: None,
            trees,
        })
    }

    pub fn with_vocab_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.vocab_fingerprint = Some(fingerprint.into());
        self
    }

    pub fn predict(&self, x: &SparseVector) -> Result<Prediction, ForestError> {
        if x.dimension() != self.dimension {
            return Err(ForestError::DimensionMismatch {
                expected: self.dimension,
                found: x.dimension(),
            });
        }
        let ones = self.trees.iter().filter(|t| t.vote(x) == 1).count();
        let score = ones as f64 / self.trees.len() as f64;
        Ok(Prediction {
            label: u8::from(score > 0.5),
            score,
        })
    }

    pub fn to_json(&self) -> Result<String, ForestError> {
        serde_json::to_string(self).map_err(|e| ForestError::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ForestError> {
        let model: RandomForestModel =
            serde_json::from_str(text).map_err(|e| ForestError::Serde(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(ForestError::UnsupportedVersion(model.format_version));
        }
        Ok(model)
    }
}

/// Free-function form of [`RandomForestModel::predict`].
pub fn predict(model: &RandomForestModel, x: &SparseVector) -> Result<Prediction, ForestError> {
    model.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stump(threshold: f64, low: u8) -> DecisionTree {
        let leaf = |label: u8| Node::Leaf {
            proba: if label == 1 { [0.0, 1.0] } else { [1.0, 0.0] },
        };
        DecisionTree {
            dimension: 1,
            nodes: vec![
                Node::Split {
                    feature: 0,
                    threshold,
                    left: 1,
                    right: 2,
                },
                leaf(low),
                leaf(1 - low),
            ],
        }
    }

    fn separable(n: usize) -> (Vec<SparseVector>, Vec<u8>) {
        let x = (0..n)
            .map(|i| SparseVector::from_dense(&[i as f64, (i % 3) as f64]))
            .collect();
        let y = (0..n).map(|i| u8::from(i >= n / 2)).collect();
        (x, y)
    }

    #[test]
    fn feature_subset_sizes() {
        assert_eq!(FeatureSubset::Sqrt.resolve(10), 4);
        assert_eq!(FeatureSubset::Sqrt.resolve(16), 4);
        assert_eq!(FeatureSubset::Sqrt.resolve(1), 1);
        assert_eq!(FeatureSubset::Count(50).resolve(7), 7);
        assert_eq!(FeatureSubset::All.resolve(7), 7);
    }

    #[test]
    fn config_checks() {
        let bad = ForestConfig {
            n_trees: 0,
            ..ForestConfig::default()
        };
        assert!(bad.check().is_err());
        let bad = ForestConfig {
            min_samples_split: 1,
            ..ForestConfig::default()
        };
        assert!(bad.check().is_err());
    }

    #[test]
    fn unanimous_and_tied_votes() {
        let x = SparseVector::from_dense(&[10.0]);
        let all_one = RandomForestModel::from_trees(
            ForestConfig::default(),
            vec![stump(5.0, 0), stump(3.0, 0)],
        )
        .unwrap();
        assert_eq!(all_one.predict(&x).unwrap(), Prediction { label: 1, score: 1.0 });

        let tied = RandomForestModel::from_trees(
            ForestConfig::default(),
            vec![stump(5.0, 0), stump(5.0, 1)],
        )
        .unwrap();
        assert_eq!(tied.predict(&x).unwrap(), Prediction { label: 0, score: 0.5 });
    }

    #[test]
    fn three_stumps_majority_by_enumeration() {
        let trees = vec![stump(1.0, 0), stump(2.0, 0), stump(3.0, 1)];
        let model = RandomForestModel::from_trees(ForestConfig::default(), trees.clone()).unwrap();
        for v in [0.0, 1.5, 2.5, 3.5] {
            let x = SparseVector::from_dense(&[v]);
            let votes: Vec<u8> = trees
                .iter()
                .map(|t| match t.nodes[0] {
                    Node::Split { threshold, .. } => {
                        let low = if let Node::Leaf { proba } = t.nodes[1] { u8::from(proba[1] > 0.5) } else { unreachable!() };
                        if v <= threshold { low } else { 1 - low }
                    }
                    _ => unreachable!(),
                })
                .collect();
            let ones = votes.iter().filter(|v| **v == 1).count();
            let p = model.predict(&x).unwrap();
            assert_eq!(p.label, u8::from(ones >= 2));
            assert_eq!(p.score, ones as f64 / 3.0);
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let (x, _) = separable(6);
        assert_eq!(
            train_forest(&x, &[1; 6], &ForestConfig::default()),
            Err(ForestError::SingleClass(1))
        );
    }

    #[test]
    fn predict_checks_dimension() {
        let (x, y) = separable(10);
        let model = train_forest(&x, &y, &ForestConfig { n_trees: 3, ..ForestConfig::default() }).unwrap();
        assert!(matches!(
            model.predict(&SparseVector::zeros(5)),
            Err(ForestError::DimensionMismatch { expected: 2, found: 5 })
        ));
    }

    #[test]
    fn fixed_seed_is_byte_identical() {
        let (x, y) = separable(40);
        let config = ForestConfig {
            n_trees: 15,
            seed: 9,
            ..ForestConfig::default()
        };
        let a = train_forest(&x, &y, &config).unwrap().to_json().unwrap();
        let b = train_forest(&x, &y, &config).unwrap().to_json().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn separable_training_accuracy() {
        let (x, y) = separable(60);
        let config = ForestConfig {
            n_trees: 25,
            seed: 4,
            ..ForestConfig::default()
        };
        let model = train_forest(&x, &y, &config).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(model.predict(xi).unwrap().label, *yi);
        }
    }

    #[test]
    fn without_bootstrap_every_tree_sees_all_samples() {
        let config = ForestConfig {
            bootstrap: false,
            ..ForestConfig::default()
        };
        for i in 0..10 {
            assert_eq!(tree_sample_weights(&config, 17, i), vec![1; 17]);
        }
        let with = ForestConfig::default();
        let w0 = tree_sample_weights(&with, 50, 0);
        assert_eq!(w0.iter().sum::<u32>(), 50);
        assert_ne!(w0, tree_sample_weights(&with, 50, 1));
    }

    #[test]
    fn version_is_checked() {
        let (x, y) = separable(10);
        let model = train_forest(&x, &y, &ForestConfig { n_trees: 2, ..ForestConfig::default() }).unwrap();
        let json = model.to_json().unwrap().replacen("\"format_version\":1", "\"format_version\":9", 1);
        assert_eq!(
            RandomForestModel::from_json(&json),
            Err(ForestError::UnsupportedVersion(9))
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn threshold_semantics_and_round_trip(
            points in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0, any::<bool>()), 4..40),
            seed in any::<u64>(),
            probes in proptest::collection::vec((-1.0f64..11.0, -1.0f64..11.0), 1..20),
        ) {
            let x: Vec<SparseVector> = points.iter().map(|(a, b, _)| SparseVector::from_dense(&[*a, *b])).collect();
            let y: Vec<u8> = points.iter().map(|p| u8::from(p.2)).collect();
            prop_assume!(y.contains(&0) && y.contains(&1));
            let config = ForestConfig { n_trees: 6, seed, ..ForestConfig::default() };
            let model = train_forest(&x, &y, &config).unwrap();
            let back = RandomForestModel::from_json(&model.to_json().unwrap()).unwrap();
            for (a, b) in probes {
                let v = SparseVector::from_dense(&[a, b]);
                let p = model.predict(&v).unwrap();
                prop_assert_eq!(p.label == 1, p.score > 0.5);
                let q = back.predict(&v).unwrap();
                prop_assert_eq!(p.score.to_bits(), q.score.to_bits());
                prop_assert_eq!(p.label, q.label);
            }
        }
    }
}
