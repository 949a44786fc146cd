//! Ablated dataset construction: natural-language removal for Ansible and
//! context reduction for Puppet.

mod puppet;
mod yaml;

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Snippet, Tool};
use crate::llm::{LlmClient, LlmError, PromptKind, PromptTemplate};

pub use puppet::{
    bracket_pairs, heuristic_mark, merge_windows, reduce_lines, HeuristicPatterns, Reduction,
};
pub use yaml::{mapping_keys, strip_ansible_nl};

#[derive(Debug, Error)]
pub enum AblateError {
    #[error("YAML error at line {line}, column {col}: {message}")]
    Yaml {
        message: String,
        line: usize,
        col: usize,
    },
    #[error("snippet has no misconfigured-line annotations; annotate it or use heuristic marking")]
    MissingAnnotations,
    #[error("annotated line {line} is outside the snippet ({lines} lines)")]
    LineOutOfRange { line: usize, lines: usize },
    #[error("collection used as a mapping key")]
    ComplexKey,
    #[error("alias refers to an anchor inside removed content")]
    DanglingAlias,
    #[error("mode {mode} does not apply to {tool} snippets")]
    WrongTool { mode: AblationMode, tool: Tool },
    #[error("invalid ablation rule: {0}")]
    InvalidRule(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    StripNl,
    ReduceContext,
}

impl std::fmt::Display for AblationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AblationMode::StripNl => "strip-nl",
            AblationMode::ReduceContext => "reduce-context",
        })
    }
}

impl FromStr for AblationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strip-nl" | "strip_nl" => Ok(AblationMode::StripNl),
            "reduce-context" | "reduce_context" => Ok(AblationMode::ReduceContext),
            other => Err(format!("unknown ablation mode `{other}`")),
        }
    }
}

/// What to do with a Puppet snippet that has no annotations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unannotated {
    #[default]
    Quarantine,
    /// Mark lines with [`heuristic_mark`]; keep the snippet unchanged when
    /// nothing matches.
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationRule {
    pub mode: AblationMode,
    pub nl_keys: Vec<String>,
    pub before: usize,
    pub after: usize,
    /// Keep the lines that open and close any block around kept lines.
    pub close_blocks: bool,
    pub unannotated: Unannotated,
}

impl Default for AblationRule {
    fn default() -> Self {
        AblationRule {
            mode: AblationMode::StripNl,
            nl_keys: vec!["name".to_string(), "description".to_string()],
            before: 3,
            after: 2,
            close_blocks: true,
            unannotated: Unannotated::Quarantine,
        }
    }
}

impl AblationRule {
    pub fn strip_nl() -> Self {
        AblationRule::default()
    }

    pub fn reduce_context() -> Self {
        AblationRule {
            mode: AblationMode::ReduceContext,
            ..AblationRule::default()
        }
    }

    pub fn check(&self) -> Result<(), AblateError> {
        if self.mode == AblationMode::StripNl && self.nl_keys.is_empty() {
            return Err(AblateError::InvalidRule("nl_keys must not be empty".into()));
        }
        Ok(())
    }
}

/// Reduces an annotated Puppet snippet to its misconfigured lines plus the
/// rule's context window.
pub fn reduce_puppet_context(snippet: &Snippet, rule: &AblationRule) -> Result<String, AblateError> {
    let lines = snippet
        .misconfig_lines
        .as_deref()
        .filter(|l| !l.is_empty())
        .ok_or(AblateError::MissingAnnotations)?;
    Ok(reduce_lines(&snippet.body, lines, rule.before, rule.after, rule.close_blocks)?.text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quarantined {
    pub id: String,
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub col: Option<usize>,
    /// The untouched input, kept for review.
    pub snippet: Snippet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rule: AblationRule,
    pub input: usize,
    pub output: usize,
    pub quarantined: Vec<Quarantined>,
    /// Ids whose annotations came from heuristic marking.
    pub heuristic: Vec<String>,
    /// Ids kept unchanged because heuristic marking found nothing.
    pub passthrough: Vec<String>,
}

fn ablate_one(snippet: &Snippet, rule: &AblationRule, report: &mut AblationReport) -> Result<Snippet, AblateError> {
    let mut out = snippet.clone();
    match rule.mode {
        AblationMode::StripNl => {
            if snippet.tool != Tool::Ansible {
                return Err(AblateError::WrongTool { mode: rule.mode, tool: snippet.tool });
            }
            out.body = strip_ansible_nl(&snippet.body, &rule.nl_keys)?;
            out.misconfig_lines = None;
        }
        AblationMode::ReduceContext => {
            if snippet.tool != Tool::Puppet {
                return Err(AblateError::WrongTool { mode: rule.mode, tool: snippet.tool });
            }
            let annotations = match snippet.misconfig_lines.as_deref() {
                Some(l) if !l.is_empty() => l.to_vec(),
                _ if rule.unannotated == Unannotated::Heuristic => {
                    let marked = heuristic_mark(&snippet.body);
                    if marked.is_empty() {
                        report.passthrough.push(snippet.id.clone());
                        return Ok(out);
                    }
                    report.heuristic.push(snippet.id.clone());
                    marked
                }
                _ => return Err(AblateError::MissingAnnotations),
            };
            let r = reduce_lines(&snippet.body, &annotations, rule.before, rule.after, rule.close_blocks)?;
            out.body = r.text;
            out.misconfig_lines = Some(r.annotations);
        }
    }
    Ok(out)
}

/// Applies `rule` to every snippet. Snippets that cannot be ablated are
/// moved to the quarantine list with their original content.
pub fn ablate_dataset(dataset: &[Snippet], rule: &AblationRule) -> Result<(Vec<Snippet>, AblationReport), AblateError> {
    rule.check()?;
    let mut report = AblationReport {
        rule: rule.clone(),
        input: dataset.len(),
        output: 0,
        quarantined: Vec::new(),
        heuristic: Vec::new(),
        passthrough: Vec::new(),
    };
    let mut out = Vec::with_capacity(dataset.len());
    for snippet in dataset {
        match ablate_one(snippet, rule, &mut report) {
            Ok(s) => out.push(s),
            Err(e) => {
                let (line, col) = match &e {
                    AblateError::Yaml { line, col, .. } => (Some(*line), Some(*col)),
                    _ => (None, None),
                };
                report.quarantined.push(Quarantined {
                    id: snippet.id.clone(),
                    error: e.to_string(),
                    line,
                    col,
                    snippet: snippet.clone(),
                });
            }
        }
    }
    report.output = out.len();
    Ok((out, report))
}

/// Text of the first fenced code block, without the fence lines.
pub fn extract_code_block(response: &str) -> Option<String> {
    let mut lines = response.lines();
    lines.by_ref().find(|l| l.trim_start().starts_with("```"))?;
    let mut body = Vec::new();
    for line in lines {
        if line.trim_start().starts_with("```") {
            return Some(body.join("\n"));
        }
        body.push(line);
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanOutcome {
    pub cleaned: String,
    pub original: String,
    pub raw_response: String,
    pub cached: bool,
}

/// Asks the model to clean `body` with a cleaning template and returns the
/// fenced code block of its answer next to the original.
pub fn llm_clean(body: &str, template: &PromptTemplate, client: &LlmClient) -> Result<CleanOutcome, AblateError> {
    if template.kind != PromptKind::Cleaning {
        return Err(LlmError::WrongKind(template.kind).into());
    }
    let prompt = template.render_snippet(body)?;
    let out = client.query(&prompt)?;
    let cleaned = extract_code_block(&out.text).ok_or_else(|| LlmError::NoCodeBlock { raw: out.text.clone() })?;
    Ok(CleanOutcome {
        cleaned,
        original: body.to_string(),
        raw_response: out.text,
        cached: out.cached,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fences() {
        assert_eq!(extract_code_block("Here:\n```puppet\na\n  b\n```\nbye").as_deref(), Some("a\n  b"));
        assert_eq!(extract_code_block("no code"), None);
        assert_eq!(extract_code_block("```\nunterminated"), None);
    }

    #[test]
    fn rule_checks() {
        let rule = AblationRule { nl_keys: vec![], ..AblationRule::strip_nl() };
        assert!(rule.check().is_err());
        assert!(AblationRule { nl_keys: vec![], ..AblationRule::reduce_context() }.check().is_ok());
        assert_eq!("strip-nl".parse::<AblationMode>().unwrap(), AblationMode::StripNl);
        assert!("shrink".parse::<AblationMode>().is_err());
    }

    #[test]
    fn dataset_quarantines_instead_of_dropping() {
        let good = Snippet::new("a", Tool::Ansible, "- name: x\n  shell: ls", 1);
        let bad = Snippet::new("b", Tool::Ansible, "- [unclosed", 0);
        let (out, report) = ablate_dataset(&[good, bad.clone()], &AblationRule::strip_nl()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].body, "- shell: ls");
        assert_eq!(report.quarantined.len(), 1);
        assert_eq!(report.quarantined[0].snippet, bad);
        assert!(report.quarantined[0].line.is_some());
    }

    #[test]
    fn unannotated_puppet() {
        let clean = Snippet::new("c", Tool::Puppet, "package { 'x': }", 0);
        let risky = Snippet::new("r", Tool::Puppet, "user { 'u':\n  password => 'p',\n}", 1);
        let data = [clean.clone(), risky];
        let (out, report) = ablate_dataset(&data, &AblationRule::reduce_context()).unwrap();
        assert!(out.is_empty());
        assert_eq!(report.quarantined.len(), 2);

        let rule = AblationRule { unannotated: Unannotated::Heuristic, ..AblationRule::reduce_context() };
        let (out, report) = ablate_dataset(&data, &rule).unwrap();
        assert_eq!(out[0], clean);
        assert_eq!(out[1].misconfig_lines.as_deref(), Some(&[2][..]));
        assert_eq!(report.passthrough, ["c"]);
        assert_eq!(report.heuristic, ["r"]);
    }
}
