use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use iaclab::corpus::{load_jsonl, write_jsonl};
use iaclab::llm::{render_prompt, PromptTemplate, ResponseCache};
use iaclab::{Snippet, Tool};
use serde_json::Value;

fn iaclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iaclab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_corpus(path: &Path, snippets: &[Snippet]) {
    let mut out = Vec::new();
    write_jsonl(&mut out, snippets).unwrap();
    std::fs::write(path, out).unwrap();
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn toy_corpus(n: usize) -> Vec<Snippet> {
    (0..n)
        .map(|i| {
            if i % 2 == 0 {
                Snippet::new(format!("m{i}"), Tool::Puppet, format!("user {{ 'u{i}':\n  password => 'plain{i}',\n}}"), 1)
            } else {
                Snippet::new(format!("c{i}"), Tool::Puppet, format!("package {{ 'pkg{i}':\n  ensure => installed,\n}}"), 0)
            }
        })
        .collect()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = iaclab(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage"), "{stderr}");
}

#[test]
fn help_exits_zero() {
    assert_eq!(iaclab(&["--help"]).status.code(), Some(0));
}

#[test]
fn split_reproduces_ansible_sizes_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("ansible.jsonl");
    let data: Vec<Snippet> = (0..3066)
        .map(|i| Snippet::new(format!("a{i}"), Tool::Ansible, format!("- shell: task {i}"), u8::from(i % 3 == 0)))
        .collect();
    write_corpus(&input, &data);
    let runs: Vec<PathBuf> = (0..2).map(|r| dir.path().join(format!("run{r}"))).collect();
    for out_dir in &runs {
        let out = iaclab(&["split", "--input", p(&input), "--out-dir", p(out_dir), "--ratios", "0.7,0.2,0.1", "--seed", "42"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "train 2146  val 613  test 307");
    }
    for (name, size) in [("train.jsonl", 2146), ("val.jsonl", 613), ("test.jsonl", 307)] {
        assert_eq!(load_jsonl(runs[0].join(name)).unwrap().len(), size);
        assert_eq!(
            std::fs::read(runs[0].join(name)).unwrap(),
            std::fs::read(runs[1].join(name)).unwrap()
        );
    }
    let prov = read_json(&runs[0].join("split.json.provenance.json"));
    assert_eq!(prov["seed"], 42);
    assert_eq!(prov["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(prov["outputs"].as_array().unwrap().len(), 4);
}

#[test]
fn train_then_eval_predicts_back() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("toy.jsonl");
    write_corpus(&corpus, &toy_corpus(20));
    let model = dir.path().join("model.json");
    let out = iaclab(&["train-baseline", "--train", p(&corpus), "--features", "tfidf", "--seed", "5", "--model-out", p(&model)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(model.with_file_name("model.json.provenance.json").exists());

    let report = dir.path().join("report.json");
    let preds = dir.path().join("preds.jsonl");
    let out = iaclab(&[
        "eval", "--dataset", p(&corpus), "--model", p(&model),
        "--report-out", p(&report), "--predictions-out", p(&preds),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&report);
    assert_eq!(r["f1"], 1.0);
    assert_eq!(r["name"], "RF + TF-IDF");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().next().unwrap().starts_with("Approach"));

    // the written predictions feed back through the prediction-file path
    let out = iaclab(&["eval", "--dataset", p(&corpus), "--predictions", p(&preds), "--name", "replay"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("replay"));

    // retraining with the same seed gives the same bytes
    let again = dir.path().join("model2.json");
    iaclab(&["train-baseline", "--train", p(&corpus), "--features", "tfidf", "--seed", "5", "--model-out", p(&again)]);
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn cross_validation_runs_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("toy.jsonl");
    write_corpus(&corpus, &toy_corpus(24));
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 9\n[forest]\nn_trees = 9\n[baseline]\nfeatures = \"bow\"\n[eval]\nfolds = 4\n").unwrap();
    let report = dir.path().join("cv.json");
    let out = iaclab(&["--config", p(&cfg), "eval", "--dataset", p(&corpus), "--cross-validate", "--report-out", p(&report)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&report);
    assert_eq!(r["name"], "RF + BoW");
    assert_eq!(r["aggregation"], "median");
    assert_eq!(r["per_fold"].as_array().unwrap().len(), 4);
    let prov = read_json(&dir.path().join("cv.json.provenance.json"));
    assert_eq!(prov["seed"], 9);
    assert_eq!(prov["config"]["pipeline"]["forest"]["n_trees"], 9);

    // flags win over the file
    let out = iaclab(&["--config", p(&cfg), "eval", "--dataset", p(&corpus), "--cross-validate", "--folds", "3", "--report-out", p(&report)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(read_json(&report)["per_fold"].as_array().unwrap().len(), 3);
}

#[test]
fn bad_config_and_bad_data_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("toy.jsonl");
    write_corpus(&corpus, &toy_corpus(6));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[forest]\ntrees = 3\n").unwrap();
    let out = iaclab(&["--config", p(&cfg), "validate", "--input", p(&corpus)]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\":\"x\",\"tool\":\"puppet\",\"body\":\"a\",\"label\":2}\n").unwrap();
    assert_eq!(iaclab(&["validate", "--input", p(&bad)]).status.code(), Some(3));
    assert_eq!(iaclab(&["split", "--input", p(&bad), "--out-dir", p(dir.path())]).status.code(), Some(3));

    let out = iaclab(&["split", "--input", p(&corpus), "--out-dir", p(dir.path()), "--ratios", "0.5,0.5"]);
    assert_eq!(out.status.code(), Some(2));

    let preds = dir.path().join("short.jsonl");
    std::fs::write(&preds, "{\"id\":\"m0\",\"predicted_label\":1}\n").unwrap();
    assert_eq!(iaclab(&["eval", "--dataset", p(&corpus), "--predictions", p(&preds)]).status.code(), Some(3));

    let missing = dir.path().join("nope.jsonl");
    assert_eq!(iaclab(&["normalize", "--input", p(&missing), "--output", p(&preds)]).status.code(), Some(1));
}

#[test]
fn validate_reports_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("toy.jsonl");
    let mut data = toy_corpus(3);
    data[1].misconfig_lines = Some(vec![99]);
    write_corpus(&corpus, &data);
    let manifest = dir.path().join("manifest.json");
    let out = iaclab(&["validate", "--input", p(&corpus), "--output", p(&manifest)]);
    assert_eq!(out.status.code(), Some(3));
    let m = read_json(&manifest);
    assert_eq!(m["total"], 3);
    assert_eq!(m["per_label_counts"]["1"], 2);
    assert_eq!(m["violations"][0]["id"], "c1");
}

#[test]
fn normalize_adds_text_field() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("in.jsonl");
    write_corpus(&corpus, &[Snippet::new("a", Tool::Ansible, "Mode: 0750.\n  Shell: PHP!", 1)]);
    let out_path = dir.path().join("out.jsonl");
    assert_eq!(iaclab(&["normalize", "--input", p(&corpus), "--output", p(&out_path)]).status.code(), Some(0));
    let line: Value = serde_json::from_str(std::fs::read_to_string(&out_path).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(line["normalized_text"], "mode: 0750 shell: php");
    assert_eq!(line["id"], "a");
}

#[test]
fn ablate_quarantines_unparseable_snippets() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("in.jsonl");
    write_corpus(
        &corpus,
        &[
            Snippet::new("ok", Tool::Ansible, "# c\n- name: x\n  shell: ls", 1),
            Snippet::new("broken", Tool::Ansible, "- shell: [ls", 0),
        ],
    );
    let out_path = dir.path().join("stripped.jsonl");
    let out = iaclab(&["ablate", "--input", p(&corpus), "--output", p(&out_path), "--mode", "strip-nl"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let kept = load_jsonl(&out_path).unwrap();
    assert_eq!(kept.len(), 1);
    assert_eq!(kept[0].body, "- shell: ls");
    let q = read_json(&dir.path().join("stripped.jsonl.quarantine.json"));
    assert_eq!(q["quarantined"][0]["id"], "broken");
    assert_eq!(q["quarantined"][0]["snippet"]["body"], "- shell: [ls");
}

#[test]
fn llm_bench_runs_from_a_seeded_cache() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("bench.jsonl");
    let data = toy_corpus(4);
    write_corpus(&corpus, &data);
    let cache_dir = dir.path().join("cache");
    let cache = ResponseCache::open(&cache_dir).unwrap();
    let template = PromptTemplate::detection(Tool::Puppet);
    for s in &data {
        let reply = if s.label == 1 { "CWE-259: hard-coded password" } else { "No issues found." };
        cache.put("stub", &render_prompt(&template, &s.body, "").unwrap(), reply).unwrap();
    }
    let mut reports = Vec::new();
    for run in 0..2 {
        let out_dir = dir.path().join(format!("bench{run}"));
        let out = iaclab(&[
            "llm-bench", "--dataset", p(&corpus), "--out-dir", p(&out_dir),
            "--llm-model", "stub", "--endpoint", "http://127.0.0.1:9/v1", "--token-env", "",
            "--cache-dir", p(&cache_dir),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8_lossy(&out.stdout).to_string();
        assert!(stdout.starts_with("Model"), "{stdout}");
        assert!(stdout.contains("1.00  1.00  1.00"), "{stdout}");
        reports.push(std::fs::read(out_dir.join("report.json")).unwrap());
        let preds = std::fs::read_to_string(out_dir.join("predictions.jsonl")).unwrap();
        assert_eq!(preds.lines().count(), 4);
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn report_renders_saved_reports() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path().join("lf.json");
    std::fs::write(
        &r,
        r#"{"name":"LF","precision":0.87,"recall":0.75,"f1":0.79,"matrix":{"tp":75,"fp":11,"tn":0,"fn":25},"provenance":{"evaluated_on":"test-set"}}"#,
    )
    .unwrap();
    let table = dir.path().join("table.txt");
    let out = iaclab(&["report", "--input", p(&r), "--output", p(&table)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&table).unwrap();
    assert_eq!(text.lines().next().unwrap(), "Approach     P     R    F1");
    assert!(text.contains("LF        0.87  0.75  0.79"));
}
