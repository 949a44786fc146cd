//! Context reduction for Puppet manifests.

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::AblateError;

/// Result of keeping a subset of lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reduction {
    pub text: String,
    /// Kept original line numbers (1-based, ascending).
    pub kept: Vec<usize>,
    /// Annotated lines renumbered into `text`.
    pub annotations: Vec<usize>,
}

/// Merged, sorted, 1-based inclusive windows of `before`/`after` lines
/// around each annotation, clipped to `1..=line_count`. Windows that touch
/// are merged.
pub fn merge_windows(
    annotations: &[usize],
    line_count: usize,
    before: usize,
    after: usize,
) -> Vec<(usize, usize)> {
    let mut spans: Vec<(usize, usize)> = annotations
        .iter()
        .filter(|&&l| l >= 1 && l <= line_count)
        .map(|&l| (l.saturating_sub(before).max(1), (l + after).min(line_count)))
        .collect();
    spans.sort_unstable();
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(spans.len());
    for (s, e) in spans {
        match merged.last_mut() {
            Some(last) if s <= last.1 + 1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    merged
}

/// Byte offset of a `#` comment outside quotes, if any. Quote state does
/// not carry across lines.
pub(crate) fn comment_start(line: &str) -> Option<usize> {
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match quote {
            Some(q) => {
                if escaped {
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == q {
                    quote = None;
                }
            }
            None => match c {
                '\'' | '"' => quote = Some(c),
                '#' => return Some(i),
                _ => {}
            },
        }
    }
    None
}

/// Line pairs (1-based) of matching brackets in code, ignoring quoted text
/// and comments. Unmatched brackets are skipped.
pub fn bracket_pairs(lines: &[&str]) -> Vec<(usize, usize)> {
    let mut stack: Vec<(char, usize)> = Vec::new();
    let mut pairs = Vec::new();
    for (n, line) in lines.iter().enumerate() {
        let code = &line[..comment_start(line).unwrap_or(line.len())];
        let mut quote: Option<char> = None;
        let mut escaped = false;
        for c in code.chars() {
            if let Some(q) = quote {
                if escaped {
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == q {
                    quote = None;
                }
                continue;
            }
            let open = match c {
                '\'' | '"' => {
                    quote = Some(c);
                    continue;
                }
                '{' | '[' | '(' => {
                    stack.push((c, n + 1));
                    continue;
                }
                '}' => '{',
                ']' => '[',
                ')' => '(',
                _ => continue,
            };
            if let Some(pos) = stack.iter().rposition(|&(o, _)| o == open) {
                let (_, start) = stack[pos];
                stack.truncate(pos);
                if start != n + 1 {
                    pairs.push((start, n + 1));
                }
            }
        }
    }
    pairs
}

/// Keeps the annotated lines with their windows. With `close_blocks`, the
/// opening and closing lines of every bracketed block that encloses a kept
/// line are kept too, so the excerpt stays balanced.
pub fn reduce_lines(
    body: &str,
    annotations: &[usize],
    before: usize,
    after: usize,
    close_blocks: bool,
) -> Result<Reduction, AblateError> {
    if annotations.is_empty() {
        return Err(AblateError::MissingAnnotations);
    }
    let lines: Vec<&str> = body.split_inclusive('\n').collect();
    let n = lines.len();
    if let Some(&bad) = annotations.iter().find(|&&l| l == 0 || l > n) {
        return Err(AblateError::LineOutOfRange { line: bad, lines: n });
    }
    let mut keep = vec![false; n + 1];
    for (s, e) in merge_windows(annotations, n, before, after) {
        keep[s..=e].iter_mut().for_each(|k| *k = true);
    }
    if close_blocks {
        let pairs = bracket_pairs(&lines.iter().map(|l| l.trim_end_matches(['\n', '\r'])).collect::<Vec<_>>());
        loop {
            let mut prefix = vec![0usize; n + 1];
            for i in 1..=n {
                prefix[i] = prefix[i - 1] + usize::from(keep[i]);
            }
            let mut changed = false;
            for &(i, j) in &pairs {
                if prefix[j] > prefix[i - 1] && !(keep[i] && keep[j]) {
                    keep[i] = true;
                    keep[j] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }
    let kept: Vec<usize> = (1..=n).filter(|&i| keep[i]).collect();
    let text: String = kept.iter().map(|&i| lines[i - 1]).collect();
    let mut ann: Vec<usize> = annotations.to_vec();
    ann.sort_unstable();
    ann.dedup();
    let annotations = ann
        .iter()
        .map(|l| kept.binary_search(l).expect("annotated lines are kept") + 1)
        .collect();
    Ok(Reduction {
        text,
        kept,
        annotations,
    })
}

/// Named regular expressions matched against each line's code (comments
/// removed).
#[derive(Debug, Clone)]
pub struct HeuristicPatterns {
    patterns: Vec<(String, Regex)>,
}

const DEFAULT_PATTERNS: [(&str, &str); 5] = [
    (
        "password-literal",
        r#"(?i)\w*pass(word|wd)?\w*\s*=>\s*['"][^'"]*['"]"#,
    ),
    (
        "secret-literal",
        r#"(?i)\w*(secret|token|api_?key|private_?key)\w*\s*=>\s*['"][^'"]+['"]"#,
    ),
    (
        "url-credentials",
        r#"(?i)[a-z][a-z0-9+.-]*://[^/\s:@'"]+:[^/\s@'"]+@"#,
    ),
    (
        "world-writable-octal",
        r#"(?i)\bmode\s*=>\s*['"]?[0-7]?[0-7]{2}[2367]\b"#,
    ),
    (
        "world-writable-symbolic",
        r#"(?i)\bmode\s*=>\s*['"](?:[^'"]*,)?[ugo]*[ao][ugo]*[+=][rwxXst]*w"#,
    ),
];

impl Default for HeuristicPatterns {
    fn default() -> Self {
        HeuristicPatterns {
            patterns: DEFAULT_PATTERNS
                .iter()
                .map(|(name, re)| (name.to_string(), Regex::new(re).expect("valid pattern")))
                .collect(),
        }
    }
}

impl HeuristicPatterns {
    pub fn new<I, S>(patterns: I) -> Result<Self, regex::Error>
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let patterns = patterns
            .into_iter()
            .map(|(n, p)| Ok((n.as_ref().to_string(), Regex::new(p.as_ref())?)))
            .collect::<Result<_, regex::Error>>()?;
        Ok(HeuristicPatterns { patterns })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.patterns.iter().map(|(n, _)| n.as_str())
    }

    /// 1-based numbers of lines matching any pattern.
    pub fn mark(&self, body: &str) -> Vec<usize> {
        body.lines()
            .enumerate()
            .filter(|(_, line)| {
                let code = &line[..comment_start(line).unwrap_or(line.len())];
                self.patterns.iter().any(|(_, re)| re.is_match(code))
            })
            .map(|(i, _)| i + 1)
            .collect()
    }
}

/// Lines of likely misconfigurations under the default patterns.
pub fn heuristic_mark(body: &str) -> Vec<usize> {
    HeuristicPatterns::default().mark(body)
}
