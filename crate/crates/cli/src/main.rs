mod config;
mod provenance;

use std::fmt::Display;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use iaclab::ablate::{self, AblateError, AblationMode, Unannotated};
use iaclab::baseline::{BaselineError, BaselineModel, Pipeline};
use iaclab::corpus::{self, CorpusError, Snippet, SplitSpec, Tool};
use iaclab::eval::{self, EvalError, MetricsReport, Provenance as ReportProvenance, TableLayout};
use iaclab::features::{FeatureError, Featurizer};
use iaclab::forest::{FeatureSubset, ForestError};
use iaclab::llm::{self, LlmClient, LlmError, PairContext, PromptTemplate, ResponseCache};
use iaclab::normalize::Normalizer;
use serde::Serialize;
use serde_json::json;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "iaclab", version, about = "IaC security-misconfiguration study pipeline")]
struct Cli {
    /// TOML experiment configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a JSONL corpus and emit its manifest.
    Validate(ValidateArgs),
    /// Add the normalized text to every snippet.
    Normalize(NormalizeArgs),
    /// Build an ablated dataset.
    Ablate(AblateArgs),
    /// Stratified train/validation/test split.
    Split(SplitArgs),
    /// Train a random-forest baseline.
    TrainBaseline(TrainArgs),
    /// Score a model, a prediction file, or a cross-validated baseline.
    Eval(EvalArgs),
    /// Benchmark a chat-completion model on detection.
    LlmBench(BenchArgs),
    /// Render metric reports as a table.
    Report(ReportArgs),
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    name: Option<String>,
    /// Manifest path; printed to stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct NormalizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Characters to delete, e.g. ".,!".
    #[arg(long)]
    filter: Option<String>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// strip-nl or reduce-context.
    #[arg(long)]
    mode: Option<AblationMode>,
    /// Defaults to `<output>.quarantine.json`.
    #[arg(long)]
    quarantine: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    nl_keys: Option<Vec<String>>,
    #[arg(long)]
    before: Option<usize>,
    #[arg(long)]
    after: Option<usize>,
    /// Do not keep the enclosing block's opening and closing lines.
    #[arg(long)]
    no_close_blocks: bool,
    /// Mark unannotated Puppet snippets with the built-in patterns.
    #[arg(long)]
    heuristic: bool,
    /// Clean with the configured chat model instead of the parsers.
    #[arg(long)]
    llm: bool,
    #[command(flatten)]
    client: ClientArgs,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    ratios: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PipelineArgs {
    /// bow or tfidf.
    #[arg(long)]
    features: Option<Featurizer>,
    #[arg(long)]
    min_df: Option<usize>,
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    /// sqrt, all, or a number.
    #[arg(long)]
    features_per_split: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training corpus; repeat to concatenate several files.
    #[arg(long, required = true)]
    train: Vec<PathBuf>,
    #[arg(long)]
    model_out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Labeled corpus; repeat to concatenate several files.
    #[arg(long, required = true)]
    dataset: Vec<PathBuf>,
    #[arg(long, conflicts_with_all = ["predictions", "cross_validate"])]
    model: Option<PathBuf>,
    /// JSONL records `{id, predicted_label, score?}`.
    #[arg(long, conflicts_with = "cross_validate")]
    predictions: Option<PathBuf>,
    #[arg(long)]
    cross_validate: bool,
    #[arg(long)]
    folds: Option<usize>,
    /// Row label in the report.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    report_out: Option<PathBuf>,
    /// Where to write the model's predictions.
    #[arg(long, requires = "model")]
    predictions_out: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct ClientArgs {
    #[arg(long)]
    endpoint: Option<String>,
    /// Model identifier sent to the endpoint.
    #[arg(long = "llm-model")]
    llm_model: Option<String>,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    token_env: Option<String>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// counterpart or empty.
    #[arg(long)]
    pair_context: Option<String>,
    #[command(flatten)]
    client: ClientArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON files, one table row each.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    #[arg(long)]
    title: Option<String>,
    #[arg(long)]
    label_header: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
}

enum Failure {
    Runtime(String),
    Usage(String),
    Data(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
        }
    }
}

impl Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Runtime(m) | Failure::Usage(m) | Failure::Data(m) => f.write_str(m),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => Failure::Runtime(e.to_string()),
            CorpusError::InvalidSplitSpec(_) | CorpusError::InvalidK(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Corpus(c) => c.into(),
            EvalError::Io(_) | EvalError::AllFoldsFailed(_) => Failure::Runtime(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<ForestError> for Failure {
    fn from(e: ForestError) -> Self {
        match e {
            ForestError::InvalidConfig(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<BaselineError> for Failure {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Forest(f) => f.into(),
            BaselineError::Features(FeatureError::InvalidVector(_)) => {
                Failure::Runtime(e.to_string())
            }
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<LlmError> for Failure {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Config(_) | LlmError::MissingToken(_) | LlmError::Placeholder { .. } => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<AblateError> for Failure {
    fn from(e: AblateError) -> Self {
        match e {
            AblateError::InvalidRule(_) => Failure::Usage(e.to_string()),
            AblateError::Llm(l) => l.into(),
            _ => Failure::Data(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn usage(message: impl Display) -> Failure {
    Failure::Usage(message.to_string())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}

fn write_records<T: Serialize>(path: &Path, records: &[T]) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    corpus::write_jsonl(&mut out, records)?;
    out.flush()
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<Snippet>, Failure> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(corpus::load_jsonl(p)?);
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = all.iter().find(|s| !seen.insert(s.id.as_str())) {
        return Err(Failure::Data(format!("duplicate id `{}` across inputs", dup.id)));
    }
    Ok(all)
}

fn single_tool(data: &[Snippet]) -> Result<Tool, Failure> {
    let tool = data
        .first()
        .map(|s| s.tool)
        .ok_or_else(|| Failure::Data("dataset is empty".into()))?;
    if data.iter().any(|s| s.tool != tool) {
        return Err(Failure::Data("dataset mixes Ansible and Puppet snippets".into()));
    }
    Ok(tool)
}

fn print_table(reports: &[MetricsReport], layout: &TableLayout) {
    print!("{}", eval::render_table(reports, layout));
}

fn validate(args: ValidateArgs) -> CmdResult {
    let data = corpus::load_jsonl_lenient(&args.input)?;
    let name = args.name.unwrap_or_else(|| {
        args.input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let manifest = corpus::validate(&name, &data);
    match &args.output {
        Some(path) => {
            write_json(path, &manifest)?;
            provenance::write("validate", None, json!({"name": name}), &[&args.input], &[path])?;
        }
        None => println!("{}", serde_json::to_string_pretty(&manifest)?),
    }
    for v in &manifest.violations {
        eprintln!("{}: {}", v.id, v.message);
    }
    if manifest.is_valid() {
        Ok(())
    } else {
        Err(Failure::Data(format!(
            "{} invariant violation(s)",
            manifest.violations.len()
        )))
    }
}

#[derive(Serialize)]
struct NormalizedRecord<'a> {
    #[serde(flatten)]
    snippet: &'a Snippet,
    normalized_text: String,
}

fn normalize(args: NormalizeArgs, cfg: &RunConfig) -> CmdResult {
    let filter = args.filter.unwrap_or_else(|| cfg.baseline.filter.clone());
    let normalizer = Normalizer::with_filter(filter.chars());
    let data = corpus::load_jsonl(&args.input)?;
    let records: Vec<NormalizedRecord> = data
        .iter()
        .map(|s| NormalizedRecord {
            snippet: s,
            normalized_text: normalizer.normalize(s).text,
        })
        .collect();
    write_records(&args.output, &records)?;
    provenance::write(
        "normalize",
        None,
        json!({"filter": filter}),
        &[&args.input],
        &[&args.output],
    )?;
    eprintln!("normalized {} snippet(s)", records.len());
    Ok(())
}

fn client_config(args: &ClientArgs, cfg: &RunConfig) -> llm::ClientConfig {
    let mut c = cfg.llm.clone();
    if let Some(v) = &args.endpoint {
        c.endpoint = v.clone();
    }
    if let Some(v) = &args.llm_model {
        c.model = v.clone();
    }
    if let Some(v) = &args.token_env {
        c.token_env = Some(v.clone()).filter(|s| !s.is_empty());
    }
    if let Some(v) = args.max_in_flight {
        c.max_in_flight = v;
    }
    if let Some(v) = args.max_retries {
        c.max_retries = v;
    }
    if let Some(v) = args.timeout_secs {
        c.timeout_secs = v;
    }
    c
}

fn open_client(
    args: &ClientArgs,
    cfg: &RunConfig,
    default_cache: PathBuf,
) -> Result<(LlmClient, PathBuf), Failure> {
    let config = client_config(args, cfg);
    let cache_dir = args
        .cache_dir
        .clone()
        .or_else(|| cfg.bench.cache_dir.clone())
        .unwrap_or(default_cache);
    let cache = ResponseCache::open(&cache_dir)?;
    Ok((LlmClient::http(config, cache)?, cache_dir))
}

#[derive(Serialize)]
struct ReviewRecord {
    id: String,
    original: String,
    cleaned: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    deterministic: Option<String>,
    matches_deterministic: bool,
}

fn ablate(args: AblateArgs, cfg: &RunConfig) -> CmdResult {
    let mut rule = cfg.ablate.clone();
    if let Some(m) = args.mode {
        rule.mode = m;
    }
    if let Some(k) = &args.nl_keys {
        rule.nl_keys = k.clone();
    }
    if let Some(b) = args.before {
        rule.before = b;
    }
    if let Some(a) = args.after {
        rule.after = a;
    }
    if args.no_close_blocks {
        rule.close_blocks = false;
    }
    if args.heuristic {
        rule.unannotated = Unannotated::Heuristic;
    }
    rule.check()?;
    let data = corpus::load_jsonl(&args.input)?;
    let quarantine_path = args.quarantine.clone().unwrap_or_else(|| {
        let mut name = args.output.file_name().unwrap_or_default().to_os_string();
        name.push(".quarantine.json");
        args.output.with_file_name(name)
    });
    let (deterministic, mut report) = ablate::ablate_dataset(&data, &rule)?;

    let mut outputs = vec![args.output.clone(), quarantine_path.clone()];
    let mut config = json!({"rule": rule});
    let snippets = if args.llm {
        let default_cache = args.output.with_file_name("llm-cache");
        let (client, cache_dir) = open_client(&args.client, cfg, default_cache)?;
        config["llm"] = json!({"client": client.config(), "cache_dir": cache_dir});
        let by_id: std::collections::HashMap<&str, &Snippet> =
            deterministic.iter().map(|s| (s.id.as_str(), s)).collect();
        let mut cleaned = Vec::new();
        let mut review = Vec::new();
        report.quarantined.clear();
        for s in &data {
            let template = PromptTemplate::cleaning(s.tool);
            match ablate::llm_clean(&s.body, &template, &client) {
                Ok(out) => {
                    let det = by_id.get(s.id.as_str()).map(|d| d.body.clone());
                    review.push(ReviewRecord {
                        id: s.id.clone(),
                        matches_deterministic: det.as_deref() == Some(out.cleaned.as_str()),
                        original: out.original,
                        cleaned: out.cleaned.clone(),
                        deterministic: det,
                    });
                    let mut c = s.clone();
                    c.body = out.cleaned;
                    c.misconfig_lines = None;
                    cleaned.push(c);
                }
                Err(e) => report.quarantined.push(ablate::Quarantined {
                    id: s.id.clone(),
                    error: e.to_string(),
                    line: None,
                    col: None,
                    snippet: s.clone(),
                }),
            }
        }
        let mut name = args.output.file_name().unwrap_or_default().to_os_string();
        name.push(".review.jsonl");
        let review_path = args.output.with_file_name(name);
        write_records(&review_path, &review)?;
        outputs.push(review_path);
        report.output = cleaned.len();
        cleaned
    } else {
        deterministic
    };
    write_records(&args.output, &snippets)?;
    write_json(&quarantine_path, &report)?;
    let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    provenance::write("ablate", None, config, &[&args.input], &outs)?;
    eprintln!(
        "ablated {} of {} snippet(s); {} quarantined",
        snippets.len(),
        data.len(),
        report.quarantined.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct SplitManifest {
    seed: u64,
    ratios: [f64; 3],
    sizes: [usize; 3],
    label_counts: [[usize; 2]; 3],
    deviations: Vec<String>,
}

fn label_counts(part: &[Snippet]) -> [usize; 2] {
    let ones = part.iter().filter(|s| s.label == 1).count();
    [part.len() - ones, ones]
}

fn split(args: SplitArgs, cfg: &RunConfig) -> CmdResult {
    let ratios: [f64; 3] = match args.ratios {
        Some(r) => r
            .try_into()
            .map_err(|_| usage("--ratios takes exactly three fractions"))?,
        None => cfg.split.ratios,
    };
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let spec = SplitSpec::new(ratios[0], ratios[1], ratios[2], seed)?;
    let data = corpus::load_jsonl(&args.input)?;
    let split = corpus::stratified_split(&data, &spec)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let paths = ["train.jsonl", "val.jsonl", "test.jsonl"].map(|n| args.out_dir.join(n));
    let parts = [&split.train, &split.val, &split.test];
    for (path, part) in paths.iter().zip(parts) {
        write_records(path, part)?;
    }
    let manifest_path = args.out_dir.join("split.json");
    let manifest = SplitManifest {
        seed,
        ratios,
        sizes: parts.map(|p| p.len()),
        label_counts: parts.map(|p| label_counts(p)),
        deviations: split.deviations.clone(),
    };
    write_json(&manifest_path, &manifest)?;
    let outs = [
        manifest_path.as_path(),
        paths[0].as_path(),
        paths[1].as_path(),
        paths[2].as_path(),
    ];
    provenance::write("split", Some(seed), json!({"ratios": ratios}), &[&args.input], &outs)?;
    for d in &split.deviations {
        eprintln!("deviation: {d}");
    }
    println!(
        "train {}  val {}  test {}",
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    Ok(())
}

fn parse_subset(s: &str) -> Result<FeatureSubset, Failure> {
    match s {
        "sqrt" => Ok(FeatureSubset::Sqrt),
        "all" => Ok(FeatureSubset::All),
        n => n
            .parse()
            .map(FeatureSubset::Count)
            .map_err(|_| usage(format!("invalid --features-per-split `{n}`"))),
    }
}

fn pipeline(args: &PipelineArgs, cfg: &RunConfig) -> Result<(Pipeline, u64), Failure> {
    let mut forest = cfg.forest.clone();
    if let Some(n) = args.n_trees {
        forest.n_trees = n;
    }
    if let Some(d) = args.max_depth {
        forest.max_depth = Some(d);
    }
    if let Some(f) = &args.features_per_split {
        forest.features_per_split = parse_subset(f)?;
    }
    let seed = args.seed.or(cfg.seed).unwrap_or(forest.seed);
    forest.seed = seed;
    forest.check()?;
    let mut p = Pipeline::new(args.features.unwrap_or(cfg.baseline.features), forest);
    p.min_df = args.min_df.unwrap_or(cfg.baseline.min_df);
    p.normalizer = Normalizer::with_filter(cfg.baseline.filter.chars());
    Ok((p, seed))
}

fn train_baseline(args: TrainArgs, cfg: &RunConfig) -> CmdResult {
    let (pipeline, seed) = pipeline(&args.pipeline, cfg)?;
    let data = load_all(&args.train)?;
    let model = pipeline.fit(&data, seed)?;
    if let Some(dir) = args.model_out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&args.model_out, model.to_json()?)?;
    let inputs: Vec<&Path> = args.train.iter().map(PathBuf::as_path).collect();
    provenance::write(
        "train-baseline",
        Some(seed),
        serde_json::to_value(&pipeline)?,
        &inputs,
        &[&args.model_out],
    )?;
    eprintln!(
        "trained {} on {} snippet(s), vocabulary {}",
        pipeline.name(),
        data.len(),
        model.vocabulary.len()
    );
    Ok(())
}

fn eval_cmd(args: EvalArgs, cfg: &RunConfig) -> CmdResult {
    let data = load_all(&args.dataset)?;
    let mut inputs: Vec<PathBuf> = args.dataset.clone();
    let (report, seed, config) = if let Some(model_path) = &args.model {
        inputs.push(model_path.clone());
        let text = std::fs::read_to_string(model_path)?;
        let model = BaselineModel::from_json(&text)?;
        let preds = model.predict(&data)?;
        if let Some(out) = &args.predictions_out {
            write_records(out, &preds)?;
        }
        let matrix = eval::confusion_against(&preds, &data)?;
        let name = args.name.clone().unwrap_or_else(|| model.pipeline.name());
        let config = serde_json::to_value(&model.pipeline)?;
        let report = MetricsReport::from_matrix(name, matrix).with_provenance(ReportProvenance {
            evaluated_on: "held-out".to_string(),
            seed: Some(model.pipeline.forest.seed),
            config: config.clone(),
            dataset: Some(corpus::validate("dataset", &data)),
        });
        (report, Some(model.pipeline.forest.seed), config)
    } else if let Some(pred_path) = &args.predictions {
        inputs.push(pred_path.clone());
        let preds = eval::parse_predictions(BufReader::new(File::open(pred_path)?))?;
        let matrix = eval::confusion_against(&preds, &data)?;
        let name = args.name.clone().unwrap_or_else(|| {
            pred_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
        let report = MetricsReport::from_matrix(name, matrix).with_provenance(ReportProvenance {
            evaluated_on: "prediction-file".to_string(),
            seed: None,
            config: json!({"predictions": pred_path}),
            dataset: Some(corpus::validate("dataset", &data)),
        });
        (report, None, json!({"predictions": pred_path}))
    } else if args.cross_validate {
        let (pipeline, seed) = pipeline(&args.pipeline, cfg)?;
        let k = args.folds.unwrap_or(cfg.eval.folds);
        let mut report = eval::cross_validate(&pipeline, &data, k, seed)?;
        if let Some(n) = &args.name {
            report.name = n.clone();
        }
        let config = json!({"pipeline": pipeline, "folds": k});
        (report, Some(seed), config)
    } else {
        return Err(usage(
            "eval needs one of --model, --predictions or --cross-validate",
        ));
    };
    print_table(std::slice::from_ref(&report), &TableLayout::default());
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(out) = &args.report_out {
        write_json(out, &report)?;
        let ins: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
        let mut outs = vec![out.as_path()];
        if let Some(p) = &args.predictions_out {
            outs.push(p);
        }
        provenance::write("eval", seed, config, &ins, &outs)?;
    }
    Ok(())
}

fn llm_bench(args: BenchArgs, cfg: &RunConfig) -> CmdResult {
    let data = corpus::load_jsonl(&args.dataset)?;
    let tool = single_tool(&data)?;
    let pair_context = match args.pair_context.as_deref() {
        None => cfg.bench.pair_context,
        Some("counterpart") => PairContext::Counterpart,
        Some("empty") => PairContext::Empty,
        Some(other) => return Err(usage(format!("invalid --pair-context `{other}`"))),
    };
    std::fs::create_dir_all(&args.out_dir)?;
    let (client, cache_dir) = open_client(&args.client, cfg, args.out_dir.join("cache"))?;
    let template = PromptTemplate::detection(tool);
    let options = llm::BenchOptions { pair_context };
    let outcome = llm::benchmark(&data, &template, &client, &options)?;

    let report_path = args.out_dir.join("report.json");
    let verdicts_path = args.out_dir.join("verdicts.jsonl");
    let predictions_path = args.out_dir.join("predictions.jsonl");
    let skipped_path = args.out_dir.join("skipped.json");
    write_json(&report_path, &outcome.report)?;
    write_records(&verdicts_path, &outcome.verdicts)?;
    let preds: Vec<eval::PredictionRecord> = outcome
        .verdicts
        .iter()
        .map(|v| eval::PredictionRecord {
            id: v.id.clone(),
            predicted_label: v.predicted_label,
            score: None,
        })
        .collect();
    write_records(&predictions_path, &preds)?;
    write_json(&skipped_path, &json!({"skipped": outcome.skipped, "flagged": outcome.flagged}))?;
    provenance::write(
        "llm-bench",
        None,
        json!({"client": client.config(), "cache_dir": cache_dir, "pair_context": pair_context}),
        &[&args.dataset],
        &[&report_path, &verdicts_path, &predictions_path, &skipped_path],
    )?;
    print_table(
        std::slice::from_ref(&outcome.report),
        &TableLayout {
            label_header: "Model".to_string(),
            ..TableLayout::default()
        },
    );
    for w in &outcome.report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn report(args: ReportArgs) -> CmdResult {
    let mut reports = Vec::new();
    for path in &args.input {
        let text = std::fs::read_to_string(path)?;
        let r: MetricsReport = serde_json::from_str(&text)
            .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        reports.push(r);
    }
    let layout = TableLayout {
        title: args.title.clone(),
        label_header: args.label_header.clone().unwrap_or_else(|| "Approach".into()),
    };
    let table = eval::render_table(&reports, &layout);
    match &args.output {
        Some(out) => {
            std::fs::write(out, &table)?;
            let ins: Vec<&Path> = args.input.iter().map(PathBuf::as_path).collect();
            provenance::write(
                "report",
                None,
                json!({"title": args.title, "label_header": layout.label_header}),
                &ins,
                &[out],
            )?;
        }
        None => print!("{table}"),
    }
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(usage)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Validate(a) => validate(a),
        Command::Normalize(a) => normalize(a, &cfg),
        Command::Ablate(a) => ablate(a, &cfg),
        Command::Split(a) => split(a, &cfg),
        Command::TrainBaseline(a) => train_baseline(a, &cfg),
        Command::Eval(a) => eval_cmd(a, &cfg),
        Command::LlmBench(a) => llm_bench(a, &cfg),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
