//! Answer accuracy, consistency over entailed questions, and the chi-square
//! distance between predicted and gold answer histograms.
//!
//! Consistency is a per-source mean: for every question answered correctly
//! that lists at least one entailed question, take the fraction of its
//! entailed questions that are also answered correctly, then average.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::batcher::QuestionRecord;
use crate::entailment::{EntailmentKb, SemanticCategory, Structural};

/// One line of a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("no prediction for question `{0}`")]
    MissingPrediction(String),
    #[error("duplicate prediction for question `{0}`")]
    DuplicatePrediction(String),
    #[error("question `{source_id}` lists unknown entailed question `{id}`")]
    DanglingEntailedId { source_id: String, id: String },
    #[error("question `{id}` has unknown task `{task}`")]
    UnknownTask { id: String, task: String },
    #[error("no gold records")]
    EmptyInput,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const STRUCTURAL_ROWS: [Structural; 5] = [
    Structural::Choose,
    Structural::Compare,
    Structural::Logical,
    Structural::Query,
    Structural::Verify,
];

pub const SEMANTIC_ROWS: [SemanticCategory; 5] = [
    SemanticCategory::Attr,
    SemanticCategory::Cat,
    SemanticCategory::Global,
    SemanticCategory::Obj,
    SemanticCategory::Rel,
];

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Counts {
    pub total: usize,
    pub binary: usize,
    pub open: usize,
    pub consistency_sources: usize,
    pub per_category: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub binary_accuracy: f64,
    pub open_accuracy: f64,
    pub consistency: f64,
    /// Set when no question qualified as a consistency source.
    pub consistency_undefined: bool,
    pub distribution: f64,
    /// Accuracy per structural and semantic category label.
    pub per_category: BTreeMap<String, f64>,
    pub counts: Counts,
}

/// A question is binary when its gold answer is yes or no.
pub fn is_binary(answer: &str) -> bool {
    answer.eq_ignore_ascii_case("yes") || answer.eq_ignore_ascii_case("no")
}

fn index_predictions(preds: &[Prediction]) -> Result<HashMap<&str, &str>, MetricsError> {
    let mut map = HashMap::with_capacity(preds.len());
    for p in preds {
        if map.insert(p.id.as_str(), p.answer.as_str()).is_some() {
            return Err(MetricsError::DuplicatePrediction(p.id.clone()));
        }
    }
    Ok(map)
}

fn correctness<'a>(preds: &[Prediction], gold: &'a [QuestionRecord]) -> Result<HashMap<&'a str, bool>, MetricsError> {
    let by_id = index_predictions(preds)?;
    gold.iter()
        .map(|r| {
            let p = by_id
                .get(r.id.as_str())
                .ok_or_else(|| MetricsError::MissingPrediction(r.id.clone()))?;
            Ok((r.id.as_str(), *p == r.answer))
        })
        .collect()
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Overall, binary, open and per-category accuracy; fills the accuracy
/// fields and counts of the report.
pub fn accuracy_report(preds: &[Prediction], gold: &[QuestionRecord], kb: &EntailmentKb) -> Result<MetricsReport, MetricsError> {
    let ok = correctness(preds, gold)?;
    let mut report = MetricsReport::default();
    let (mut correct, mut bin_ok, mut open_ok) = (0, 0, 0);
    let mut cat_ok: BTreeMap<String, usize> = BTreeMap::new();
    for r in gold {
        let hit = ok[r.id.as_str()];
        let task = kb.task(&r.task).ok_or_else(|| MetricsError::UnknownTask {
            id: r.id.clone(),
            task: r.task.clone(),
        })?;
        correct += hit as usize;
        if is_binary(&r.answer) {
            report.counts.binary += 1;
            bin_ok += hit as usize;
        } else {
            report.counts.open += 1;
            open_ok += hit as usize;
        }
        for label in [task.structural.to_string(), task.semantic.to_string()] {
            *report.counts.per_category.entry(label.clone()).or_default() += 1;
            *cat_ok.entry(label).or_default() += hit as usize;
        }
    }
    report.counts.total = gold.len();
    report.accuracy = ratio(correct, gold.len());
    report.binary_accuracy = ratio(bin_ok, report.counts.binary);
    report.open_accuracy = ratio(open_ok, report.counts.open);
    report.per_category = report
        .counts
        .per_category
        .iter()
        .map(|(k, &n)| (k.clone(), ratio(cat_ok[k], n)))
        .collect();
    Ok(report)
}

/// Per-source consistency, its source count, and whether it was undefined
/// (no source question, reported as 0).
pub fn consistency(preds: &[Prediction], gold: &[QuestionRecord]) -> Result<(f64, usize, bool), MetricsError> {
    let ok = correctness(preds, gold)?;
    let mut sum = 0.0;
    let mut sources = 0usize;
    for r in gold {
        for e in &r.entailed_ids {
            if !ok.contains_key(e.as_str()) {
                return Err(MetricsError::DanglingEntailedId {
                    source_id: r.id.clone(),
                    id: e.clone(),
                });
            }
        }
        if r.entailed_ids.is_empty() || !ok[r.id.as_str()] {
            continue;
        }
        let hits = r.entailed_ids.iter().filter(|e| ok[e.as_str()]).count();
        sum += hits as f64 / r.entailed_ids.len() as f64;
        sources += 1;
    }
    if sources == 0 {
        return Ok((0.0, 0, true));
    }
    Ok((sum / sources as f64, sources, false))
}

/// Chi-square distance `Σ (p_a - g_a)² / g_a` between normalized answer
/// histograms. Predicted answers outside the gold support use `ε = 1/(2N)`
/// in place of `g_a`.
pub fn distribution_distance(preds: &[Prediction], gold: &[QuestionRecord]) -> Result<f64, MetricsError> {
    if gold.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let by_id = index_predictions(preds)?;
    let mut g: BTreeMap<&str, usize> = BTreeMap::new();
    let mut p: BTreeMap<&str, usize> = BTreeMap::new();
    for r in gold {
        *g.entry(r.answer.as_str()).or_default() += 1;
        let a = by_id
            .get(r.id.as_str())
            .ok_or_else(|| MetricsError::MissingPrediction(r.id.clone()))?;
        *p.entry(a).or_default() += 1;
    }
    let n = gold.len() as f64;
    let eps = 1.0 / (2.0 * n);
    let mut d = 0.0;
    for (a, &gc) in &g {
        let (ga, pa) = (gc as f64 / n, p.get(a).copied().unwrap_or(0) as f64 / n);
        d += (pa - ga).powi(2) / ga;
    }
    for (a, &pc) in &p {
        if !g.contains_key(a) {
            let pa = pc as f64 / n;
            d += pa * pa / eps;
        }
    }
    Ok(d)
}

/// Every metric at once.
pub fn evaluate(preds: &[Prediction], gold: &[QuestionRecord], kb: &EntailmentKb) -> Result<MetricsReport, MetricsError> {
    let mut report = accuracy_report(preds, gold, kb)?;
    let (c, sources, undefined) = consistency(preds, gold)?;
    report.consistency = c;
    report.consistency_undefined = undefined;
    report.counts.consistency_sources = sources;
    report.distribution = distribution_distance(preds, gold)?;
    Ok(report)
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}%", 100.0 * v))
}

/// Aligned table with one column per report, rows in the usual order:
/// Binary, Open, Accuracy, Consistency, Validity, Plausibility, Distribution,
/// then structural and semantic categories.
pub fn format_table(columns: &[(&str, &MetricsReport)]) -> String {
    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    let mut row = |name: &str, f: &dyn Fn(&MetricsReport) -> String| {
        rows.push((name.to_string(), columns.iter().map(|(_, r)| f(r)).collect()));
    };
    row("Binary", &|r| pct((r.counts.binary > 0).then_some(r.binary_accuracy)));
    row("Open", &|r| pct((r.counts.open > 0).then_some(r.open_accuracy)));
    row("Accuracy", &|r| pct(Some(r.accuracy)));
    row("Consistency", &|r| pct((!r.consistency_undefined).then_some(r.consistency)));
    row("Validity", &|_| "n/a".into());
    row("Plausibility", &|_| "n/a".into());
    row("Distribution", &|r| format!("{:.4}", r.distribution));
    let labels = STRUCTURAL_ROWS
        .iter()
        .map(ToString::to_string)
        .chain(SEMANTIC_ROWS.iter().map(ToString::to_string));
    for label in labels {
        row(&label, &|r| pct(r.per_category.get(&label).copied()));
    }

    let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("Metric".len());
    let col_w: Vec<usize> = columns
        .iter()
        .enumerate()
        .map(|(i, (h, _))| rows.iter().map(|(_, v)| v[i].len()).max().unwrap_or(0).max(h.len()))
        .collect();
    let mut out = String::new();
    let _ = write!(out, "{:<name_w$}", "Metric");
    for ((h, _), w) in columns.iter().zip(&col_w) {
        let _ = write!(out, "  {h:>w$}");
    }
    out.push('\n');
    for (name, vals) in &rows {
        let _ = write!(out, "{name:<name_w$}");
        for (v, w) in vals.iter().zip(&col_w) {
            let _ = write!(out, "  {v:>w$}");
        }
        out.push('\n');
    }
    out
}

pub fn read_predictions(reader: impl BufRead) -> Result<Vec<Prediction>, MetricsError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| MetricsError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_predictions(mut w: impl Write, preds: &[Prediction]) -> std::io::Result<()> {
    for p in preds {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
