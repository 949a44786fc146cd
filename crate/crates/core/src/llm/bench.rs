use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{parse_cwes, render_prompt, LlmClient, LlmError, PromptTemplate};
use crate::corpus::Snippet;
use crate::eval::{ConfusionMatrix, MetricsReport, Provenance};

/// What goes into the `[FIXED_CODE]` slot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairContext {
    /// The body of the other snippet sharing the `pair_id`, or empty.
    #[default]
    Counterpart,
    Empty,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub pair_context: PairContext,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmVerdict {
    pub id: String,
    pub model: String,
    pub raw_response: String,
    pub cwes: Vec<String>,
    pub predicted_label: u8,
    pub latency_ms: u64,
    pub cached: bool,
    pub retries: u32,
    /// Prose without any CWE that still reads like a finding.
    pub needs_review: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSnippet {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOutcome {
    pub report: MetricsReport,
    /// In dataset order.
    pub verdicts: Vec<LlmVerdict>,
    pub skipped: Vec<SkippedSnippet>,
    /// Ids of verdicts with `needs_review` set.
    pub flagged: Vec<String>,
}

const FINDING_WORDS: [&str; 9] = [
    "vulnerab",
    "insecure",
    "misconfig",
    "hardcod",
    "plaintext",
    "weak",
    "cwe",
    "risk",
    "exposure",
];

/// A response carries no CWE but is either empty or talks about a finding.
pub fn is_ambiguous(response: &str) -> bool {
    if !parse_cwes(response).is_empty() {
        return false;
    }
    let lower = response.to_lowercase();
    lower.trim().is_empty() || FINDING_WORDS.iter().any(|w| lower.contains(w))
}

fn counterparts(dataset: &[Snippet]) -> HashMap<&str, Vec<usize>> {
    let mut by_pair: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, s) in dataset.iter().enumerate() {
        if let Some(p) = &s.pair_id {
            by_pair.entry(p.as_str()).or_default().push(i);
        }
    }
    by_pair
}

/// Queries the model once per snippet and scores the verdicts against the
/// labels. Snippets whose query fails are skipped and counted.
pub fn benchmark(
    dataset: &[Snippet],
    template: &PromptTemplate,
    client: &LlmClient,
    options: &BenchOptions,
) -> Result<BenchOutcome, LlmError> {
    let pairs = counterparts(dataset);
    let mut prompts = Vec::with_capacity(dataset.len());
    for (i, snippet) in dataset.iter().enumerate() {
        let fixed = match (options.pair_context, &snippet.pair_id) {
            (PairContext::Counterpart, Some(p)) => pairs[p.as_str()]
                .iter()
                .find(|&&j| j != i)
                .map(|&j| dataset[j].body.as_str())
                .unwrap_or(""),
            _ => "",
        };
        prompts.push(render_prompt(template, &snippet.body, fixed)?);
    }

    let model = client.config().model.clone();
    let workers = client.config().max_in_flight.min(dataset.len()).max(1);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<LlmVerdict, LlmError>>>> =
        Mutex::new((0..dataset.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= dataset.len() {
                    break;
                }
                let result = client.query(&prompts[i]).map(|out| {
                    let cwes = parse_cwes(&out.text);
                    LlmVerdict {
                        id: dataset[i].id.clone(),
                        model: model.clone(),
                        predicted_label: u8::from(!cwes.is_empty()),
                        needs_review: is_ambiguous(&out.text),
                        cwes,
                        raw_response: out.text,
                        latency_ms: out.latency_ms,
                        cached: out.cached,
                        retries: out.retries,
                    }
                });
                results.lock().expect("worker panicked")[i] = Some(result);
            });
        }
    });

    let mut matrix = ConfusionMatrix::default();
    let mut verdicts = Vec::new();
    let mut skipped = Vec::new();
    for (snippet, result) in dataset.iter().zip(results.into_inner().expect("worker panicked")) {
        match result.expect("every index is visited") {
            Ok(v) => {
                matrix.record(v.predicted_label, snippet.label);
                verdicts.push(v);
            }
            Err(e) => skipped.push(SkippedSnippet {
                id: snippet.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    let flagged: Vec<String> = verdicts
        .iter()
        .filter(|v| v.needs_review)
        .map(|v| v.id.clone())
        .collect();

    let mut report = MetricsReport::from_matrix(model.clone(), matrix).with_provenance(Provenance {
        evaluated_on: "llm-bench".to_string(),
        seed: None,
        config: serde_json::json!({
            "model": model,
            "temperature": client.config().temperature,
            "tool": template.tool,
            "pair_context": options.pair_context,
        }),
        dataset: None,
    });
    if !skipped.is_empty() {
        report
            .warnings
            .push(format!("{} snippet(s) skipped after query failures", skipped.len()));
    }
    if !flagged.is_empty() {
        report
            .warnings
            .push(format!("{} response(s) flagged for manual review", flagged.len()));
    }
    Ok(BenchOutcome {
        report,
        verdicts,
        skipped,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Tool;
    use crate::llm::{BackendError, ClientConfig, ResponseCache};
    use serde_json::Value;

    fn client(dir: &std::path::Path, reply: impl Fn(&str) -> Result<String, BackendError> + Send + Sync + 'static) -> LlmClient {
        let backend = move |body: &Value| reply(body["messages"][0]["content"].as_str().unwrap());
        let config = ClientConfig {
            token_env: None,
            max_retries: 0,
            backoff_ms: 0,
            ..ClientConfig::default()
        };
        LlmClient::new(config, Box::new(backend), ResponseCache::open(dir).unwrap()).unwrap()
    }

    fn dataset(labels: &[u8]) -> Vec<Snippet> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| Snippet::new(format!("s{i}"), Tool::Puppet, format!("line {i}"), l))
            .collect()
    }

    #[test]
    fn forced_positives_give_full_recall() {
        let dir = tempfile::tempdir().unwrap();
        let c = client(dir.path(), |_| Ok("CWE-798".into()));
        let out = benchmark(
            &dataset(&[1, 1, 1]),
            &PromptTemplate::detection(Tool::Puppet),
            &c,
            &BenchOptions::default(),
        )
        .unwrap();
        assert_eq!(out.report.recall, 1.0);
        assert_eq!(out.report.matrix.tp, 3);
        assert!(out.verdicts.iter().all(|v| v.cwes == ["CWE-798"]));
    }

    #[test]
    fn always_secure_gives_zero_scores() {
        let dir = tempfile::tempdir().unwrap();
        let c = client(dir.path(), |_| Ok("secure".into()));
        let out = benchmark(
            &dataset(&[1, 0, 1]),
            &PromptTemplate::detection(Tool::Puppet),
            &c,
            &BenchOptions::default(),
        )
        .unwrap();
        assert_eq!(out.report.matrix.tp, 0);
        assert_eq!((out.report.precision, out.report.recall), (0.0, 0.0));
        assert!(out.flagged.is_empty());
    }

    #[test]
    fn failures_are_skipped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let c = client(dir.path(), |p| {
            if p.contains("line 1") {
                Err(BackendError::Status { code: 400, body: "bad".into() })
            } else {
                Ok("Possibly insecure.".into())
            }
        });
        let out = benchmark(
            &dataset(&[1, 0, 0]),
            &PromptTemplate::detection(Tool::Puppet),
            &c,
            &BenchOptions::default(),
        )
        .unwrap();
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].id, "s1");
        assert_eq!(out.verdicts.len(), 2);
        assert_eq!(out.flagged, ["s0", "s2"]);
        let warnings = out.report.warnings.join("\n");
        assert!(warnings.contains("1 snippet(s) skipped"));
        assert!(warnings.contains("2 response(s) flagged"));
    }

    #[test]
    fn counterpart_fills_fixed_slot() {
        let dir = tempfile::tempdir().unwrap();
        let c = client(dir.path(), |p| Ok(p.to_string()));
        let mut data = dataset(&[1, 0]);
        data[0].pair_id = Some("p".into());
        data[1].pair_id = Some("p".into());
        let t = PromptTemplate::detection(Tool::Puppet);
        let out = benchmark(&data, &t, &c, &BenchOptions::default()).unwrap();
        assert!(out.verdicts[0].raw_response.ends_with("Vulnerable code: line 0\nFixed code: line 1"));
        let out = benchmark(&data, &t, &c, &BenchOptions { pair_context: PairContext::Empty }).unwrap();
        assert!(out.verdicts[1].raw_response.ends_with("Vulnerable code: line 1\nFixed code: "));
    }

    #[test]
    fn ambiguity() {
        assert!(is_ambiguous(""));
        assert!(is_ambiguous("This uses a weak hash."));
        assert!(!is_ambiguous("CWE-327 weak hash"));
        assert!(!is_ambiguous("No issues found."));
    }
}
