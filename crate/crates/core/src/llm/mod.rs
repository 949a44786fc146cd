//! LLM benchmarking: prompt templates, a cached chat-completion client, CWE
//! extraction and the detection benchmark.

mod bench;
mod cache;
mod client;
mod cwe;
mod prompt;

use thiserror::Error;

pub use bench::{benchmark, is_ambiguous, BenchOptions, BenchOutcome, LlmVerdict, PairContext, SkippedSnippet};
pub use cache::ResponseCache;
pub use client::{
    query, request_body, BackendError, ChatBackend, ClientConfig, HttpBackend, LlmClient,
    QueryOutcome,
};
pub use cwe::parse_cwes;
pub use prompt::{render_prompt, PromptKind, PromptTemplate, CODE_SNIPPET, FIXED_CODE, VULNERABLE_CODE};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("template must contain {placeholder} exactly once (found {count})")]
    Placeholder {
        placeholder: &'static str,
        count: usize,
    },
    #[error("template kind {0:?} does not accept this rendering")]
    WrongKind(PromptKind),
    #[error("environment variable `{0}` holding the API token is not set")]
    MissingToken(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("unexpected response payload: {0}")]
    InvalidResponse(String),
    #[error("response contains no fenced code block")]
    NoCodeBlock { raw: String },
    #[error("cache error at {path}: {message}")]
    Cache { path: String, message: String },
    #[error("invalid client configuration: {0}")]
    Config(String),
}

impl LlmError {
    /// Transport failures may succeed on a later run.
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Transport { .. })
            || matches!(self, LlmError::Status { code, .. } if *code == 429 || *code >= 500)
    }
}
