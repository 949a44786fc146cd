//! Confusion matrices, precision/recall/F1, cross-validation and report
//! tables.
//!
//! The positive class is label 1 (misconfigured). Zero denominators resolve
//! to 0: precision when `tp + fp = 0`, recall when `tp + fn = 0`, F1 when
//! `P + R = 0`. Each such case is recorded as a report warning.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::BufRead;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::Pipeline;
use crate::corpus::{self, CorpusError, DatasetManifest, Snippet};
use crate::seed;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction ids do not match truth ids: missing {missing:?}, extra {extra:?}")]
    IdMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error("duplicate id `{0}` in {1}")]
    DuplicateId(String, &'static str),
    #[error("label {1} for `{0}` is not 0 or 1")]
    InvalidLabel(String, u8),
    #[error("line {line}: malformed prediction record: {message}")]
    MalformedPrediction { line: usize, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("every fold failed: {0}")]
    AllFoldsFailed(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, predicted: u8, actual: u8) {
        match (predicted, actual) {
            (1, 1) => self.tp += 1,
            (1, _) => self.fp += 1,
            (_, 1) => self.fn_ += 1,
            _ => self.tn += 1,
        }
    }

    /// The same matrix with label 0 taken as the positive class.
    pub fn swap_classes(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }

    pub fn merge(&self, other: &Self) -> Self {
        ConfusionMatrix {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }

    pub fn scores(&self) -> Scores {
        precision_recall_f1(self)
    }

    /// Warnings for each zero-denominator convention applied.
    pub fn degenerate_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        if self.tp + self.fp == 0 {
            warnings.push("no positive predictions: precision set to 0".to_string());
        }
        if self.tp + self.fn_ == 0 {
            warnings.push("no positive samples: recall set to 0".to_string());
        }
        if self.tp == 0 {
            warnings.push("precision + recall = 0: F1 set to 0".to_string());
        }
        warnings
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn precision_recall_f1(matrix: &ConfusionMatrix) -> Scores {
    let precision = ratio(matrix.tp, matrix.tp + matrix.fp);
    let recall = ratio(matrix.tp, matrix.tp + matrix.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Scores {
        precision,
        recall,
        f1,
    }
}

/// Counts a confusion matrix from `(id, label)` pairs. Both sides must carry
/// exactly the same ids.
pub fn confusion(
    predictions: &[(String, u8)],
    truth: &[(String, u8)],
) -> Result<ConfusionMatrix, EvalError> {
    let mut actual: HashMap<&str, u8> = HashMap::with_capacity(truth.len());
    for (id, label) in truth {
        if *label > 1 {
            return Err(EvalError::InvalidLabel(id.clone(), *label));
        }
        if actual.insert(id, *label).is_some() {
            return Err(EvalError::DuplicateId(id.clone(), "truth"));
        }
    }
    let mut seen = BTreeSet::new();
    let mut extra = Vec::new();
    for (id, label) in predictions {
        if *label > 1 {
            return Err(EvalError::InvalidLabel(id.clone(), *label));
        }
        if !seen.insert(id.as_str()) {
            return Err(EvalError::DuplicateId(id.clone(), "predictions"));
        }
        if !actual.contains_key(id.as_str()) {
            extra.push(id.clone());
        }
    }
    let mut missing: Vec<String> = truth
        .iter()
        .filter(|(id, _)| !seen.contains(id.as_str()))
        .map(|(id, _)| id.clone())
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        missing.sort();
        extra.sort();
        return Err(EvalError::IdMismatch { missing, extra });
    }
    let mut matrix = ConfusionMatrix::default();
    for (id, label) in predictions {
        matrix.record(*label, actual[id.as_str()]);
    }
    Ok(matrix)
}

/// Prediction file record, shared with external producers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub predicted_label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

pub fn parse_predictions<R: BufRead>(reader: R) -> Result<Vec<PredictionRecord>, EvalError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord =
            serde_json::from_str(&line).map_err(|e| EvalError::MalformedPrediction {
                line: idx + 1,
                message: e.to_string(),
            })?;
        if record.predicted_label > 1 {
            return Err(EvalError::MalformedPrediction {
                line: idx + 1,
                message: format!("predicted_label {} is not 0 or 1", record.predicted_label),
            });
        }
        out.push(record);
    }
    Ok(out)
}

/// Confusion matrix of prediction records against labeled snippets.
pub fn confusion_against(
    predictions: &[PredictionRecord],
    truth: &[Snippet],
) -> Result<ConfusionMatrix, EvalError> {
    let preds: Vec<(String, u8)> = predictions
        .iter()
        .map(|p| (p.id.clone(), p.predicted_label))
        .collect();
    let truth: Vec<(String, u8)> = truth.iter().map(|s| (s.id.clone(), s.label)).collect();
    confusion(&preds, &truth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Median,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub holdout_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<ConfusionMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Scores>,
    /// Set when the fold could not be evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// What the numbers were measured on, e.g. `test-set` or
    /// `cv-median (k=8)`.
    pub evaluated_on: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetManifest>,
}

/// Metrics of one approach on one dataset.
///
/// For a single evaluation `aggregation` is `None` and the scores are
/// recomputable from `matrix`. For cross-validation the scores are the
/// per-fold aggregate and `matrix` is the sum over evaluated folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matrix: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<Aggregation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_fold: Option<Vec<FoldReport>>,
    #[serde(default)]
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn from_matrix(name: impl Into<String>, matrix: ConfusionMatrix) -> Self {
        let scores = matrix.scores();
        MetricsReport {
            name: name.into(),
            precision: scores.precision,
            recall: scores.recall,
            f1: scores.f1,
            matrix,
            aggregation: None,
            per_fold: None,
            provenance: Provenance::default(),
            warnings: matrix.degenerate_warnings(),
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn scores(&self) -> Scores {
        Scores {
            precision: self.precision,
            recall: self.recall,
            f1: self.f1,
        }
    }
}

/// Median of a non-empty sample; the mean of the two middle values for even
/// lengths.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Aggregates per-fold results. Failed folds are skipped with a warning.
pub fn aggregate(
    name: impl Into<String>,
    folds: Vec<FoldReport>,
    aggregation: Aggregation,
) -> Result<MetricsReport, EvalError> {
    let ok: Vec<(ConfusionMatrix, Scores)> = folds
        .iter()
        .filter_map(|f| Some((f.matrix?, f.scores?)))
        .collect();
    let mut warnings: Vec<String> = folds
        .iter()
        .filter_map(|f| {
            f.failure
                .as_ref()
                .map(|why| format!("fold {} failed: {why}", f.fold))
        })
        .collect();
    if ok.is_empty() {
        return Err(EvalError::AllFoldsFailed(warnings.join("; ")));
    }
    let pick = |get: fn(&Scores) -> f64| -> f64 {
        let values: Vec<f64> = ok.iter().map(|(_, s)| get(s)).collect();
        match aggregation {
            Aggregation::Median => median(&values),
            Aggregation::Mean => mean(&values),
        }
    };
    let matrix = ok
        .iter()
        .fold(ConfusionMatrix::default(), |acc, (m, _)| acc.merge(m));
    for (i, (m, _)) in ok.iter().enumerate() {
        for w in m.degenerate_warnings() {
            warnings.push(format!("fold {i}: {w}"));
        }
    }
    Ok(MetricsReport {
        name: name.into(),
        precision: pick(|s| s.precision),
        recall: pick(|s| s.recall),
        f1: pick(|s| s.f1),
        matrix,
        aggregation: Some(aggregation),
        per_fold: Some(folds),
        provenance: Provenance::default(),
        warnings,
    })
}

/// Generic k-fold driver: `run(train, holdout, fold_seed)` returns predicted
/// labels for the holdout ids. Folds run in parallel and are reduced in
/// fold order; scores are aggregated by median.
pub fn cross_validate_with<F>(
    name: &str,
    dataset: &[Snippet],
    k: usize,
    seed: u64,
    run: F,
) -> Result<MetricsReport, EvalError>
where
    F: Fn(&[Snippet], &[Snippet], u64) -> Result<Vec<(String, u8)>, String> + Sync,
{
    let folds = corpus::kfold(dataset, k, seed)?;
    let reports: Vec<FoldReport> = folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| {
            let fold_seed = seed::derive(seed, "fold", i as u64);
            let truth: Vec<(String, u8)> =
                fold.holdout.iter().map(|s| (s.id.clone(), s.label)).collect();
            let outcome = run(&fold.train, &fold.holdout, fold_seed)
                .and_then(|preds| confusion(&preds, &truth).map_err(|e| e.to_string()));
            let mut report = FoldReport {
                fold: i,
                train_size: fold.train.len(),
                holdout_size: fold.holdout.len(),
                matrix: None,
                scores: None,
                failure: None,
            };
            match outcome {
                Ok(matrix) => {
                    report.scores = Some(matrix.scores());
                    report.matrix = Some(matrix);
                }
                Err(why) => report.failure = Some(why),
            }
            report
        })
        .collect();
    let mut report = aggregate(name, reports, Aggregation::Median)?;
    report.provenance.evaluated_on = format!("cv-median (k={k})");
    report.provenance.seed = Some(seed);
    report.provenance.dataset = Some(corpus::validate(name, dataset));
    Ok(report)
}

/// Cross-validates a baseline pipeline: vocabulary and forest are fitted on
/// each fold's train side and scored on its holdout.
pub fn cross_validate(
    pipeline: &Pipeline,
    dataset: &[Snippet],
    k: usize,
    seed: u64,
) -> Result<MetricsReport, EvalError> {
    let name = pipeline.name();
    let mut report = cross_validate_with(&name, dataset, k, seed, |train, holdout, fold_seed| {
        let model = pipeline.fit(train, fold_seed).map_err(|e| e.to_string())?;
        let preds = model.predict(holdout).map_err(|e| e.to_string())?;
        Ok(preds.into_iter().map(|p| (p.id, p.predicted_label)).collect())
    })?;
    report.provenance.config = serde_json::to_value(pipeline).unwrap_or_default();
    Ok(report)
}

/// Rounds to two decimals, ties to even.
pub fn round2(x: f64) -> f64 {
    let scaled = x * 100.0;
    let floor = scaled.floor();
    let diff = scaled - floor;
    let rounded = if diff > 0.5 || (diff == 0.5 && floor % 2.0 != 0.0) {
        floor + 1.0
    } else {
        floor
    };
    rounded / 100.0
}

/// Column layout of a rendered table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableLayout {
    pub title: Option<String>,
    pub label_header: String,
}

impl Default for TableLayout {
    fn default() -> Self {
        TableLayout {
            title: None,
            label_header: "Approach".to_string(),
        }
    }
}

/// Renders reports as an aligned plain-text table, one row per report in
/// input order: `label | P | R | F1`.
pub fn render_table(reports: &[MetricsReport], layout: &TableLayout) -> String {
    let header = [layout.label_header.as_str(), "P", "R", "F1"];
    let rows: Vec<[String; 4]> = reports
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                format!("{:.2}", round2(r.precision)),
                format!("{:.2}", round2(r.recall)),
                format!("{:.2}", round2(r.f1)),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    if let Some(title) = &layout.title {
        let _ = writeln!(out, "{title}");
    }
    let line = |cells: &[&str]| -> String {
        let mut s = format!("{:<w$}", cells[0], w = widths[0]);
        for (cell, w) in cells[1..].iter().zip(&widths[1..]) {
            let _ = write!(s, "  {cell:>w$}");
        }
        s.trim_end().to_string()
    };
    let _ = writeln!(out, "{}", line(&header));
    let rule: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    let _ = writeln!(out, "{}", "-".repeat(rule));
    for row in &rows {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        let _ = writeln!(out, "{}", line(&cells));
    }
    out
}
