//! Run-directory layout and report files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::HarnessError;
use crate::metrics::{self, EmbeddingProvider, MetricsReport};
use crate::types::RunRecord;

pub const RECORDS_DIR: &str = "records";
pub const REPORT_JSON: &str = "report.json";
pub const SCALING_CSV: &str = "scaling_curve.csv";
pub const COMPARISON_CSV: &str = "comparison.csv";

pub const SCALING_HEADER: &str = "method,iteration,solved,tasks,fraction";
pub const COMPARISON_HEADER: &str = "method,tasks,budget,pass_at_1,pass_any,val_score,mean_calls,\
tfidf_sim,embed_sim,lev_sim,seq_sim,identity_rate,iters_incl,iters_excl,fp_rate,fn_rate";

/// Placeholder for undefined values in CSV output.
const UNDEFINED: &str = "\u{2014}";

/// File-system safe, collision-free form of a task id: bytes outside
/// `[A-Za-z0-9_.-]` are percent-encoded.
pub fn sanitize(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for b in id.bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' || b == b'_' || (b == b'.' && !out.is_empty()) {
            out.push(b as char);
        } else {
            write!(out, "%{b:02X}").unwrap();
        }
    }
    out
}

pub fn record_path(run_dir: &Path, record: &RunRecord) -> PathBuf {
    run_dir
        .join(RECORDS_DIR)
        .join(record.method.as_str())
        .join(format!("{}.json", sanitize(&record.task_id)))
}

pub fn write_record(run_dir: &Path, record: &RunRecord) -> Result<PathBuf, HarnessError> {
    let path = record_path(run_dir, record);
    let dir = path.parent().expect("record path has a parent");
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    fs::write(&path, record.to_json()).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

/// Every record under `run_dir/records`, in path order.
pub fn read_records(run_dir: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let root = run_dir.join(RECORDS_DIR);
    let mut paths = Vec::new();
    if root.is_dir() {
        for method in fs::read_dir(&root).map_err(|e| HarnessError::io(&root, e))? {
            let method = method.map_err(|e| HarnessError::io(&root, e))?.path();
            if !method.is_dir() {
                continue;
            }
            for f in fs::read_dir(&method).map_err(|e| HarnessError::io(&method, e))? {
                let p = f.map_err(|e| HarnessError::io(&method, e))?.path();
                if p.extension().is_some_and(|x| x == "json") {
                    paths.push(p);
                }
            }
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(HarnessError::NoRecords(run_dir.to_path_buf()));
    }
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
            RunRecord::from_json(&text).map_err(|e| HarnessError::Record {
                path: p.clone(),
                message: e.to_string(),
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| format!("{x:.6}"))
}

pub fn scaling_csv(report: &MetricsReport) -> String {
    let mut out = format!("{SCALING_HEADER}\n");
    for m in &report.methods {
        for (i, f) in m.scaling_curve.iter().enumerate() {
            let solved = (f.value * m.tasks as f64).round() as u64;
            writeln!(out, "{},{},{},{},{:.6}", m.method, i + 1, solved, m.tasks, f.value).unwrap();
        }
    }
    out
}

pub fn comparison_csv(report: &MetricsReport) -> String {
    let mut out = format!("{COMPARISON_HEADER}\n");
    for m in &report.methods {
        let s = &m.similarity;
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.3},{},{},{},{},{},{},{},{},{}",
            m.method,
            m.tasks,
            m.budget,
            m.pass_at_1.value,
            m.pass_any.value,
            m.mean_validation_score,
            m.mean_generator_calls,
            opt(s.tfidf_cos),
            opt(s.embed_cos),
            opt(s.levenshtein_sim),
            opt(s.token_seq_sim),
            opt(s.identity_rate),
            opt(m.iterations.iters_incl),
            opt(m.iterations.iters_excl),
            opt(m.confusion_rates.map(|r| r.fp)),
            opt(m.confusion_rates.map(|r| r.fn_)),
        )
        .unwrap();
    }
    out
}

/// Recomputes every metric from the stored records and rewrites the three
/// report files.
pub fn emit_report(
    run_dir: &Path,
    embedder: Option<&mut dyn EmbeddingProvider>,
) -> Result<MetricsReport, HarnessError> {
    let records = read_records(run_dir)?;
    let report = metrics::build_report(&records, embedder)?;
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    for (name, body) in [
        (REPORT_JSON, json),
        (SCALING_CSV, scaling_csv(&report)),
        (COMPARISON_CSV, comparison_csv(&report)),
    ] {
        let p = run_dir.join(name);
        fs::write(&p, body).map_err(|e| HarnessError::io(&p, e))?;
    }
    Ok(report)
}
