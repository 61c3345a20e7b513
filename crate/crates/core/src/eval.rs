//! Micro precision, recall and F1.
//!
//! Two counting rules are offered. `positive_class` is the TACRED convention:
//! pairs where gold and prediction are both the negative label contribute
//! nothing, and predicting the negative label is never a false positive.
//! `all_class` treats the negative label like any other, which for one label
//! per instance makes precision, recall and accuracy coincide.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::RelationSchema;
use crate::normalize::{MatchKind, PredictionRecord};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("predictions without a gold label: {}", .0.join(", "))]
    MissingGold(Vec<String>),
    #[error("duplicate prediction ids: {}", .0.join(", "))]
    DuplicatePrediction(Vec<String>),
    #[error("instance {id}: label {label:?} is not in the schema")]
    UnknownLabel { id: String, label: String },
    #[error("no predictions to score")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    PositiveClass,
    AllClass,
}

impl ScoringMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoringMode::PositiveClass => "positive_class",
            ScoringMode::AllClass => "all_class",
        }
    }
}

impl fmt::Display for ScoringMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoringMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive_class" => Ok(ScoringMode::PositiveClass),
            "all_class" => Ok(ScoringMode::AllClass),
            other => Err(format!("unknown scoring mode {other:?} (expected positive_class or all_class)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// precision, recall, F1 with every 0/0 defined as 0.
pub fn micro_prf(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: ScoringMode,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_label: BTreeMap<String, LabelCounts>,
    pub unparseable_count: u64,
    pub total: u64,
}

pub fn score_positive_class(
    preds: &[PredictionRecord],
    golds: &HashMap<String, String>,
    schema: &RelationSchema,
) -> Result<MetricsReport, EvalError> {
    score(preds, golds, schema, ScoringMode::PositiveClass)
}

pub fn score_all_class(
    preds: &[PredictionRecord],
    golds: &HashMap<String, String>,
    schema: &RelationSchema,
) -> Result<MetricsReport, EvalError> {
    score(preds, golds, schema, ScoringMode::AllClass)
}

pub fn score(
    preds: &[PredictionRecord],
    golds: &HashMap<String, String>,
    schema: &RelationSchema,
    mode: ScoringMode,
) -> Result<MetricsReport, EvalError> {
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut seen = HashSet::with_capacity(preds.len());
    let mut dups = Vec::new();
    let mut missing = Vec::new();
    for p in preds {
        if !seen.insert(p.instance_id.as_str()) {
            dups.push(p.instance_id.clone());
        }
        if !golds.contains_key(&p.instance_id) {
            missing.push(p.instance_id.clone());
        }
    }
    if !dups.is_empty() {
        dups.sort();
        dups.dedup();
        return Err(EvalError::DuplicatePrediction(dups));
    }
    if !missing.is_empty() {
        missing.sort();
        return Err(EvalError::MissingGold(missing));
    }

    let counted = |label: &str| mode == ScoringMode::AllClass || !schema.is_negative(label);
    let mut per_label: BTreeMap<String, LabelCounts> =
        schema.labels().iter().filter(|l| counted(l)).map(|l| (l.clone(), LabelCounts::default())).collect();

    let mut unparseable = 0;
    for p in preds {
        let gold = &golds[&p.instance_id];
        for label in [gold, &p.scored_label] {
            if !schema.contains(label) {
                return Err(EvalError::UnknownLabel { id: p.instance_id.clone(), label: label.clone() });
            }
        }
        if p.match_kind == MatchKind::Unparseable {
            unparseable += 1;
        }
        let pred = &p.scored_label;
        if pred == gold {
            if counted(gold) {
                per_label.get_mut(gold).expect("label present").tp += 1;
            }
        } else {
            if counted(pred) {
                per_label.get_mut(pred).expect("label present").fp += 1;
            }
            if counted(gold) {
                per_label.get_mut(gold).expect("label present").fn_ += 1;
            }
        }
    }

    let (tp, fp, fn_) = per_label.values().fold((0, 0, 0), |(a, b, c), l| (a + l.tp, b + l.fp, c + l.fn_));
    let (precision, recall, f1) = micro_prf(tp, fp, fn_);
    Ok(MetricsReport {
        mode,
        tp,
        fp,
        fn_,
        precision,
        recall,
        f1,
        per_label,
        unparseable_count: unparseable,
        total: preds.len() as u64,
    })
}

/// Two-decimal percentage, as printed in result tables.
pub fn percent(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

/// Human-readable summary followed by the per-label breakdown.
pub fn render_metrics_text(report: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mode: {}", report.mode);
    let _ = writeln!(
        out,
        "P(%) {}  R(%) {}  F1(%) {}",
        percent(report.precision),
        percent(report.recall),
        percent(report.f1)
    );
    let _ = writeln!(
        out,
        "tp {}  fp {}  fn {}  total {}  unparseable {}",
        report.tp, report.fp, report.fn_, report.total, report.unparseable_count
    );
    let width = report.per_label.keys().map(String::len).max().unwrap_or(5).max(5);
    let _ = writeln!(out, "\n{:<width$} {:>7} {:>7} {:>7}", "label", "tp", "fp", "fn");
    for (label, c) in &report.per_label {
        let _ = writeln!(out, "{label:<width$} {:>7} {:>7} {:>7}", c.tp, c.fp, c.fn_);
    }
    out
}
