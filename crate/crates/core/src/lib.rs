//! Detection lab for security misconfigurations in Infrastructure-as-Code
//! scripts (Ansible playbooks and Puppet manifests).
//!
//! The crate covers the whole classical study pipeline:
//!
//! - [`corpus`]: labeled snippet datasets in JSONL, validation, pair-aware
//!   stratified splits and k-fold partitions.
//! - [`normalize`]: lowercasing, character filtering and single-line
//!   flattening.
//! - [`ablate`]: natural-language stripping for Ansible YAML and context
//!   reduction for Puppet manifests.
//! - [`features`]: whitespace tokenization, bag-of-words and TF-IDF vectors.
//! - [`forest`]: CART trees with Gini impurity and a bagged random forest.
//! - [`eval`]: confusion matrices, precision/recall/F1, cross-validation and
//!   report tables.
//! - [`llm`]: prompt templates, a cached chat-completion client, CWE
//!   extraction and LLM benchmarking.
//!
//! A guide with worked examples lives in the `book/` directory at the
//! repository root; its code listings are compiled as doc-tests of this crate.

pub mod ablate;
pub mod baseline;
pub mod corpus;
pub mod eval;
pub mod features;
pub mod forest;
pub mod llm;
pub mod normalize;
pub mod seed;

pub use corpus::{DatasetManifest, Snippet, SplitSpec, Tool};
pub use eval::{ConfusionMatrix, MetricsReport};
pub use features::{SparseVector, Vocabulary};
pub use forest::{ForestConfig, RandomForestModel};
pub use normalize::NormalizedDoc;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/normalization.md")]
    mod normalization {}
    #[doc = include_str!("../../../book/src/ablation.md")]
    mod ablation {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/forest.md")]
    mod forest {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/llm.md")]
    mod llm {}
}
