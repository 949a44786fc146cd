//! Labeled IaC snippet datasets.
//!
//! The interchange format is JSONL: one [`Snippet`] per line, UTF-8, with the
//! field names `id`, `tool`, `body`, `label`, `pair_id` and `misconfig_lines`.

mod split;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use split::{kfold, stratified_split, Fold, Split, SplitSpec};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: label {label} is not 0 or 1")]
    InvalidLabel { line: usize, label: i64 },
    #[error("line {line}: duplicate snippet id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: snippet `{id}`: {reason}")]
    Invariant {
        line: usize,
        id: String,
        reason: String,
    },
    #[error("dataset is empty")]
    Empty,
    #[error("dataset contains a single class ({label}); stratification is impossible")]
    SingleClass { label: u8 },
    #[error("invalid split specification: {0}")]
    InvalidSplitSpec(String),
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("k = {k} exceeds dataset size {size}")]
    TooFewSnippets { k: usize, size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tool {
    Ansible,
    Puppet,
}

impl fmt::Display for Tool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tool::Ansible => "ansible",
            Tool::Puppet => "puppet",
        })
    }
}

impl std::str::FromStr for Tool {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ansible" => Ok(Tool::Ansible),
            "puppet" => Ok(Tool::Puppet),
            other => Err(format!("unknown tool `{other}` (expected ansible or puppet)")),
        }
    }
}

/// One labeled IaC code unit. Label 1 marks a misconfigured snippet, 0 a
/// clean (or fixed) one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub id: String,
    pub tool: Tool,
    pub body: String,
    pub label: u8,
    /// Links a misconfigured snippet to its fixed counterpart.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<String>,
    /// 1-based line numbers of the misconfigured instructions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub misconfig_lines: Option<Vec<usize>>,
}

impl Snippet {
    pub fn new(id: impl Into<String>, tool: Tool, body: impl Into<String>, label: u8) -> Self {
        Snippet {
            id: id.into(),
            tool,
            body: body.into(),
            label,
            pair_id: None,
            misconfig_lines: None,
        }
    }

    pub fn line_count(&self) -> usize {
        self.body.lines().count()
    }

    /// Invariant violations of this snippet taken on its own (ids are checked
    /// at dataset level).
    pub fn problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.label > 1 {
            problems.push(format!("label {} is not 0 or 1", self.label));
        }
        if self.body.trim().is_empty() {
            problems.push("body is empty after trimming".to_string());
        }
        if let Some(lines) = &self.misconfig_lines {
            let count = self.line_count();
            for &line in lines {
                if line == 0 || line > count {
                    problems.push(format!(
                        "misconfig line {line} outside [1, {count}]"
                    ));
                }
            }
        }
        problems
    }
}

/// Raw JSONL record. Labels are read as integers first so that out-of-range
/// values produce a domain error instead of a type error.
#[derive(Deserialize)]
struct RawSnippet {
    id: String,
    tool: Tool,
    body: String,
    label: i64,
    #[serde(default)]
    pair_id: Option<String>,
    #[serde(default)]
    misconfig_lines: Option<Vec<usize>>,
}

fn records<R: BufRead>(reader: R) -> Result<Vec<(usize, RawSnippet)>, CorpusError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let number = idx + 1;
        let line = line.map_err(|e| CorpusError::Malformed {
            line: number,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawSnippet = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: number,
            message: e.to_string(),
        })?;
        out.push((number, raw));
    }
    Ok(out)
}

/// Parses JSONL from a reader, enforcing every snippet invariant.
pub fn parse_jsonl<R: BufRead>(reader: R) -> Result<Vec<Snippet>, CorpusError> {
    let mut seen = HashSet::new();
    let mut snippets = Vec::new();
    for (line, raw) in records(reader)? {
        if !(0..=1).contains(&raw.label) {
            return Err(CorpusError::InvalidLabel {
                line,
                label: raw.label,
            });
        }
        if !seen.insert(raw.id.clone()) {
            return Err(CorpusError::DuplicateId { line, id: raw.id });
        }
        let snippet = Snippet {
            id: raw.id,
            tool: raw.tool,
            body: raw.body,
            label: raw.label as u8,
            pair_id: raw.pair_id,
            misconfig_lines: raw.misconfig_lines,
        };
        if let Some(reason) = snippet.problems().into_iter().next() {
            return Err(CorpusError::Invariant {
                line,
                id: snippet.id,
                reason,
            });
        }
        snippets.push(snippet);
    }
    Ok(snippets)
}

/// Loads a JSONL dataset, enforcing every snippet invariant. Record order is
/// preserved.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<Snippet>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_jsonl(BufReader::new(file))
}

/// Loads a JSONL dataset without enforcing snippet invariants, so that
/// [`validate`] can report every violation. Labels outside `0..=255` are
/// mapped to 255 and reported by `validate`.
pub fn load_jsonl_lenient(path: impl AsRef<Path>) -> Result<Vec<Snippet>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(records(BufReader::new(file))?
        .into_iter()
        .map(|(_, raw)| Snippet {
            id: raw.id,
            tool: raw.tool,
            body: raw.body,
            label: u8::try_from(raw.label).unwrap_or(u8::MAX),
            pair_id: raw.pair_id,
            misconfig_lines: raw.misconfig_lines,
        })
        .collect())
}

pub fn write_jsonl<W: Write, T: Serialize>(mut writer: W, records: &[T]) -> io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

/// An invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    /// `None` when the dataset is empty or mixes tools.
    pub tool: Option<Tool>,
    pub total: usize,
    pub per_label_counts: BTreeMap<u8, usize>,
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

impl DatasetManifest {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Recounts a dataset and reports every invariant violation by snippet id.
pub fn validate(name: &str, dataset: &[Snippet]) -> DatasetManifest {
    let mut per_label_counts = BTreeMap::new();
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    let mut tools = HashSet::new();
    for snippet in dataset {
        *per_label_counts.entry(snippet.label).or_insert(0) += 1;
        tools.insert(snippet.tool);
        if !seen.insert(snippet.id.as_str()) {
            violations.push(Violation {
                id: snippet.id.clone(),
                message: "duplicate id".to_string(),
            });
        }
        for message in snippet.problems() {
            violations.push(Violation {
                id: snippet.id.clone(),
                message,
            });
        }
    }
    let tool = if tools.len() == 1 {
        tools.into_iter().next()
    } else {
        None
    };
    DatasetManifest {
        name: name.to_string(),
        tool,
        total: dataset.len(),
        per_label_counts,
        provenance: String::new(),
        seed: None,
        violations,
    }
}

pub(crate) fn label_counts(dataset: &[Snippet]) -> (usize, usize) {
    let ones = dataset.iter().filter(|s| s.label == 1).count();
    (dataset.len() - ones, ones)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, label: i64) -> String {
        format!(r#"{{"id":"{id}","tool":"ansible","body":"- shell: ls","label":{label}}}"#)
    }

    #[test]
    fn empty_input_is_empty_dataset() {
        assert!(parse_jsonl("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn label_two_names_its_line() {
        let text = format!("{}\n{}\n", line("a", 1), line("b", 2));
        match parse_jsonl(text.as_bytes()) {
            Err(CorpusError::InvalidLabel { line, label }) => {
                assert_eq!((line, label), (2, 2));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn malformed_and_duplicate_lines_are_rejected() {
        let text = format!("{}\nnot json\n", line("a", 1));
        assert!(matches!(
            parse_jsonl(text.as_bytes()),
            Err(CorpusError::Malformed { line: 2, .. })
        ));
        let text = format!("{}\n{}\n", line("a", 1), line("a", 0));
        assert!(matches!(
            parse_jsonl(text.as_bytes()),
            Err(CorpusError::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn order_is_preserved_and_blank_lines_skipped() {
        let text = format!("{}\n\n{}\n{}\n", line("c", 1), line("a", 0), line("b", 1));
        let ids: Vec<_> = parse_jsonl(text.as_bytes())
            .unwrap()
            .into_iter()
            .map(|s| s.id)
            .collect();
        assert_eq!(ids, ["c", "a", "b"]);
    }

    #[test]
    fn out_of_range_misconfig_line_is_an_error_on_load() {
        let text = r#"{"id":"a","tool":"puppet","body":"x\ny","label":1,"misconfig_lines":[3]}"#;
        assert!(matches!(
            parse_jsonl(text.as_bytes()),
            Err(CorpusError::Invariant { line: 1, .. })
        ));
    }

    #[test]
    fn validate_recounts_labels() {
        let data = vec![
            Snippet::new("a", Tool::Ansible, "x", 1),
            Snippet::new("b", Tool::Ansible, "y", 0),
            Snippet::new("c", Tool::Ansible, "z", 1),
        ];
        let manifest = validate("toy", &data);
        assert_eq!(manifest.total, 3);
        assert_eq!(manifest.per_label_counts, BTreeMap::from([(0, 1), (1, 2)]));
        assert_eq!(manifest.tool, Some(Tool::Ansible));
        assert!(manifest.is_valid());
        assert_eq!(
            manifest.total,
            manifest.per_label_counts.values().sum::<usize>()
        );
    }

    #[test]
    fn validate_reports_line_bound_violation() {
        let body = (1..=10).map(|i| format!("line {i}")).collect::<Vec<_>>().join("\n");
        let mut snippet = Snippet::new("p1", Tool::Puppet, body, 1);
        snippet.misconfig_lines = Some(vec![99]);
        let manifest = validate("toy", &[snippet]);
        assert_eq!(manifest.violations.len(), 1);
        assert_eq!(manifest.violations[0].id, "p1");
        assert!(manifest.violations[0].message.contains("99"));
    }

    #[test]
    fn validate_flags_duplicates_and_empty_bodies() {
        let data = vec![
            Snippet::new("a", Tool::Puppet, "  \n", 0),
            Snippet::new("a", Tool::Ansible, "x", 1),
        ];
        let manifest = validate("mixed", &data);
        assert_eq!(manifest.tool, None);
        assert_eq!(manifest.violations.len(), 2);
    }
}
