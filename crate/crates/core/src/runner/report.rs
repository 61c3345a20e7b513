use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::warn;

use super::{Method, RunError, RunManifest, RunStatus};
use crate::dataset::KnownDataset;
use crate::eval::{percent, render_metrics_text, ScoringMode};

pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const REPORT_CSV_FILE: &str = "report.csv";

/// P, R, F1 as fractions.
pub type Prf = (f64, f64, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub method: Method,
    /// Keyed by dataset name.
    pub cells: BTreeMap<String, Prf>,
}

/// Rows are (model, method) sorted by model label, then method in the order
/// simple, rag, finetuned, rag_finetuned. Columns are datasets: the known
/// benchmarks first in their customary order, then any others by name.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub mode: ScoringMode,
    pub datasets: Vec<String>,
    pub rows: Vec<ReportRow>,
}

fn dataset_rank(name: &str) -> (usize, String) {
    match KnownDataset::from_name(name) {
        Some(k) => (k.report_order(), String::new()),
        None => (usize::MAX, name.to_string()),
    }
}

/// Collects completed manifests into a table. Runs that did not complete are
/// skipped; when two runs fill the same cell the later one in `manifests`
/// wins.
pub fn build_report(manifests: &[RunManifest], mode: ScoringMode) -> Result<ReportTable, RunError> {
    let mut rows: BTreeMap<(String, Method), BTreeMap<String, Prf>> = BTreeMap::new();
    let mut datasets: Vec<String> = Vec::new();
    for m in manifests {
        if m.status != RunStatus::Completed {
            warn!("skipping {} run on {}: status {:?}", m.config.method, m.dataset, m.status);
            continue;
        }
        let Some(metrics) = m.metrics_for(mode) else {
            warn!("skipping {} run on {}: no {mode} metrics", m.config.method, m.dataset);
            continue;
        };
        let cell = rows.entry((m.config.model_label().to_string(), m.config.method)).or_default();
        if cell.insert(m.dataset.clone(), (metrics.precision, metrics.recall, metrics.f1)).is_some() {
            warn!("several {} runs of {} on {}; keeping the last", m.config.method, m.config.model_label(), m.dataset);
        }
        if !datasets.contains(&m.dataset) {
            datasets.push(m.dataset.clone());
        }
    }
    if rows.is_empty() {
        return Err(RunError::Config("no completed runs to report".into()));
    }
    datasets.sort_by_key(|d| dataset_rank(d));
    Ok(ReportTable {
        mode,
        datasets,
        rows: rows.into_iter().map(|((model, method), cells)| ReportRow { model, method, cells }).collect(),
    })
}

const CELL: usize = 7;

pub fn render_report_text(table: &ReportTable) -> String {
    let model_w = table.rows.iter().map(|r| r.model.len()).max().unwrap_or(0).max("model".len());
    let method_w = Method::ALL.iter().map(|m| m.as_str().len()).max().unwrap_or(0);
    let group_w = 3 * CELL + 2;

    let mut out = String::new();
    let _ = writeln!(out, "scoring: {}", table.mode);
    let mut line1 = format!("{:<model_w$}  {:<method_w$}", "", "");
    let mut line2 = format!("{:<model_w$}  {:<method_w$}", "model", "method");
    for d in &table.datasets {
        let _ = write!(line1, " | {d:^group_w$}");
        let _ = write!(line2, " | {:>CELL$} {:>CELL$} {:>CELL$}", "P", "R", "F1");
    }
    let _ = writeln!(out, "{}", line1.trim_end());
    let _ = writeln!(out, "{line2}");
    let _ = writeln!(out, "{}", "-".repeat(line2.len()));
    for row in &table.rows {
        let mut line = format!("{:<model_w$}  {:<method_w$}", row.model, row.method.as_str());
        for d in &table.datasets {
            match row.cells.get(d) {
                Some((p, r, f)) => {
                    let _ = write!(line, " | {:>CELL$} {:>CELL$} {:>CELL$}", percent(*p), percent(*r), percent(*f));
                }
                None => {
                    let _ = write!(line, " | {:>CELL$} {:>CELL$} {:>CELL$}", "-", "-", "-");
                }
            }
        }
        let _ = writeln!(out, "{line}");
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_report_csv(table: &ReportTable) -> String {
    let mut header = vec!["model".to_string(), "method".to_string()];
    for d in &table.datasets {
        for m in ["P", "R", "F1"] {
            header.push(csv_field(&format!("{d} {m}")));
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for row in &table.rows {
        let mut fields = vec![csv_field(&row.model), row.method.as_str().to_string()];
        for d in &table.datasets {
            match row.cells.get(d) {
                Some((p, r, f)) => fields.extend([percent(*p), percent(*r), percent(*f)]),
                None => fields.extend([String::new(), String::new(), String::new()]),
            }
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Writes `report.txt` and `report.csv` into `dir`.
pub fn emit_report(
    manifests: &[RunManifest],
    mode: ScoringMode,
    dir: impl AsRef<Path>,
) -> Result<(PathBuf, PathBuf), RunError> {
    let table = build_report(manifests, mode)?;
    write_pair(dir.as_ref(), &render_report_text(&table), &render_report_csv(&table))
}

fn write_pair(dir: &Path, text: &str, csv: &str) -> Result<(PathBuf, PathBuf), RunError> {
    std::fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.to_path_buf(), source })?;
    let (txt_path, csv_path) = (dir.join(REPORT_TEXT_FILE), dir.join(REPORT_CSV_FILE));
    for (path, body) in [(&txt_path, text), (&csv_path, csv)] {
        std::fs::write(path, body).map_err(|source| RunError::Io { path: path.clone(), source })?;
    }
    Ok((txt_path, csv_path))
}

/// Single-run report: the positive-class table row followed by the full
/// breakdown for each scoring mode.
pub(crate) fn write_run_report(manifest: &RunManifest, dir: &Path) -> Result<(PathBuf, PathBuf), RunError> {
    let table = build_report(std::slice::from_ref(manifest), ScoringMode::PositiveClass)?;
    let mut text = render_report_text(&table);
    for m in &manifest.metrics {
        text.push('\n');
        text.push_str(&render_metrics_text(m));
    }
    write_pair(dir, &text, &render_report_csv(&table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::ExperimentConfig;

    pub(crate) fn manifest(dataset: &str, model: &str, method: Method, prf: Prf) -> RunManifest {
        let config = ExperimentConfig::parse(&format!(
            "dataset_name = {dataset}\nbundle_path = b\nmethod = {method}\ngeneration_endpoint = mock:m\n\
             generation_model_id = {model}\noutput_dir = o\nembedding_endpoint = test\nstore_path = s\n\
             allow_train_overlap_prompting = true\n"
        ))
        .unwrap();
        let metric = |mode| crate::eval::MetricsReport {
            mode,
            tp: 0,
            fp: 0,
            fn_: 0,
            precision: prf.0,
            recall: prf.1,
            f1: prf.2,
            per_label: BTreeMap::new(),
            unparseable_count: 0,
            total: 1,
        };
        RunManifest {
            status: RunStatus::Completed,
            config,
            dataset: KnownDataset::from_name(dataset).map_or(dataset.to_string(), |k| k.name().to_string()),
            dataset_counts: BTreeMap::new(),
            label_count: 0,
            generator: "mock".into(),
            decoding: Default::default(),
            store_fingerprint: None,
            started_at: String::new(),
            finished_at: None,
            resumed: false,
            cache_hits: 0,
            cache_misses: 0,
            requests_issued: 0,
            unparseable_count: 0,
            predictions_sha256: None,
            metrics: vec![metric(ScoringMode::PositiveClass), metric(ScoringMode::AllClass)],
            error: None,
        }
    }

    #[test]
    fn single_manifest_gives_one_row() {
        let t =
            build_report(&[manifest("tacred", "m", Method::Simple, (0.92, 0.5, 0.6479))], ScoringMode::PositiveClass)
                .unwrap();
        assert_eq!(t.rows.len(), 1);
        let csv = render_report_csv(&t);
        assert_eq!(csv, "model,method,TACRED P,TACRED R,TACRED F1\nm,simple,92.00,50.00,64.79\n");
        let text = render_report_text(&t);
        assert!(text.contains("92.00"));
    }

    #[test]
    fn rows_follow_method_order_and_columns_follow_dataset_order() {
        let ms = vec![
            manifest("toy", "m", Method::RagFinetuned, (0.1, 0.1, 0.1)),
            manifest("semeval", "m", Method::Finetuned, (0.2, 0.2, 0.2)),
            manifest("re-tacred", "m", Method::Rag, (0.3, 0.3, 0.3)),
            manifest("tacrev", "m", Method::Simple, (0.4, 0.4, 0.4)),
            manifest("tacred", "m", Method::Simple, (0.5, 0.5, 0.5)),
        ];
        let t = build_report(&ms, ScoringMode::PositiveClass).unwrap();
        let methods: Vec<_> = t.rows.iter().map(|r| r.method).collect();
        assert_eq!(methods, Method::ALL);
        assert_eq!(t.datasets, ["TACRED", "TACREV", "Re-TACRED", "SemEVAL", "toy"]);
        let csv = render_report_csv(&t);
        assert_eq!(csv.lines().nth(1).unwrap(), "m,simple,50.00,50.00,50.00,40.00,40.00,40.00,,,,,,,,,");
    }

    #[test]
    fn incomplete_runs_are_skipped() {
        let mut m = manifest("tacred", "m", Method::Simple, (0.5, 0.5, 0.5));
        m.status = RunStatus::Failed;
        assert!(build_report(&[m], ScoringMode::PositiveClass).is_err());
        assert!(build_report(&[], ScoringMode::PositiveClass).is_err());
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("q\"x"), "\"q\"\"x\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
