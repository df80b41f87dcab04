//! Quantities computed from finished run records. Everything here is a pure
//! function of the records (plus an optional embedding provider).

pub mod embedding;
pub mod similarity;

use std::collections::BTreeMap;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Method, RunRecord};
use crate::verifier::{self, ConfusionMatrix, ConfusionRates};
pub use embedding::{EmbeddingError, EmbeddingProvider, HashingEmbedder, HttpEmbedder};

pub const REPORT_SCHEMA: &str = "sfs-report/1";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no run records")]
    Empty,
    #[error("record for {0} carries no hidden-test verdicts")]
    MissingHiddenVerdicts(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("confusion matrix: {0}")]
    Confusion(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

fn hidden(record: &RunRecord) -> Result<&[bool], MetricsError> {
    record
        .hidden_pass
        .as_deref()
        .ok_or_else(|| MetricsError::MissingHiddenVerdicts(record.task_id.clone()))
}

/// Solution indices by descending reward, earliest first on ties.
pub fn submission_order(record: &RunRecord) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..record.solutions.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ra, rb) = (
            record.solutions[a].reward.unwrap_or(0.0),
            record.solutions[b].reward.unwrap_or(0.0),
        );
        rb.total_cmp(&ra).then(
            record.solutions[a]
                .iteration_index
                .cmp(&record.solutions[b].iteration_index),
        )
    });
    idx
}

/// Fraction of records where one of the first `k` submissions passes the
/// hidden tests.
pub fn pass_at_k(records: &[RunRecord], k: usize) -> Result<Ratio<u64>, MetricsError> {
    if k == 0 {
        return Err(MetricsError::InvalidK);
    }
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut solved = 0u64;
    for r in records {
        let h = hidden(r)?;
        if submission_order(r).into_iter().take(k).any(|i| h[i]) {
            solved += 1;
        }
    }
    Ok(Ratio::new(solved, records.len() as u64))
}

/// Fraction of records with any hidden-correct candidate.
pub fn pass_any(records: &[RunRecord]) -> Result<Ratio<u64>, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut solved = 0u64;
    for r in records {
        if hidden(r)?.iter().any(|p| *p) {
            solved += 1;
        }
    }
    Ok(Ratio::new(solved, records.len() as u64))
}

/// Mean candidate reward per record, averaged over records.
pub fn mean_validation_score(records: &[RunRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let per_task: f64 = records
        .iter()
        .map(|r| r.solutions.iter().map(|s| s.reward.unwrap_or(0.0)).sum::<f64>() / r.solutions.len() as f64)
        .sum();
    Ok(per_task / records.len() as f64)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    /// Tasks with at least two candidates.
    pub tasks: usize,
    pub tfidf_cos: Option<f64>,
    pub embed_cos: Option<f64>,
    pub levenshtein_sim: Option<f64>,
    pub token_seq_sim: Option<f64>,
    /// Fraction of candidate pairs that are the exact same string.
    pub identity_rate: Option<f64>,
}

struct TaskSimilarity {
    tfidf: f64,
    lev: f64,
    seq: f64,
    identity: f64,
}

fn task_similarity(codes: &[&str]) -> TaskSimilarity {
    let m = similarity::tfidf_matrix(codes);
    let idx: Vec<usize> = (0..codes.len()).collect();
    TaskSimilarity {
        tfidf: similarity::mean_pairwise(&idx, |a, b| m[*a][*b]).unwrap_or(0.0),
        lev: similarity::mean_pairwise(codes, |a, b| similarity::levenshtein_sim(a, b)).unwrap_or(0.0),
        seq: similarity::mean_pairwise(codes, |a, b| similarity::token_seq_sim(a, b)).unwrap_or(0.0),
        identity: similarity::mean_pairwise(codes, |a, b| f64::from(u8::from(a == b))).unwrap_or(0.0),
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> Option<f64> {
    let n = values.len();
    (n > 0).then(|| values.sum::<f64>() / n as f64)
}

/// Mean pairwise similarity per task, then across tasks. Tasks with fewer
/// than two candidates are skipped.
pub fn similarity_suite(
    tasks: &[Vec<&str>],
    embedder: Option<&mut dyn EmbeddingProvider>,
) -> Result<SimilarityReport, MetricsError> {
    let included: Vec<&Vec<&str>> = tasks.iter().filter(|t| t.len() >= 2).collect();
    let per_task: Vec<TaskSimilarity> = included.par_iter().map(|t| task_similarity(t)).collect();
    let embed_cos = match embedder {
        None => None,
        Some(e) => {
            let mut means = Vec::with_capacity(included.len());
            for t in &included {
                let v = e.embed(t)?;
                means.push(similarity::mean_pairwise(&v, |a, b| similarity::cosine(a, b)).unwrap_or(0.0));
            }
            mean(means.into_iter())
        }
    };
    Ok(SimilarityReport {
        tasks: included.len(),
        tfidf_cos: mean(per_task.iter().map(|t| t.tfidf)),
        embed_cos,
        levenshtein_sim: mean(per_task.iter().map(|t| t.lev)),
        token_seq_sim: mean(per_task.iter().map(|t| t.seq)),
        identity_rate: mean(per_task.iter().map(|t| t.identity)),
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    /// Mean 1-based iteration of the first hidden-correct candidate.
    pub iters_incl: Option<f64>,
    /// Same, leaving out records solved by the first candidate.
    pub iters_excl: Option<f64>,
}

/// 1-based iteration of the first hidden-correct candidate, or `budget + 1`.
pub fn discovery_iteration(record: &RunRecord) -> Result<u32, MetricsError> {
    let h = hidden(record)?;
    Ok(h.iter()
        .position(|p| *p)
        .map_or(record.budget + 1, |i| record.solutions[i].iteration_index + 1))
}

pub fn iteration_stats(records: &[RunRecord]) -> Result<IterationStats, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let found: Vec<f64> = records
        .iter()
        .map(|r| discovery_iteration(r).map(f64::from))
        .collect::<Result<_, _>>()?;
    let later: Vec<f64> = found.iter().copied().filter(|i| *i > 1.0).collect();
    Ok(IterationStats {
        iters_incl: mean(found.into_iter()),
        iters_excl: mean(later.into_iter()),
    })
}

/// Fraction of records with a hidden-correct candidate among the first `i`
/// iterations, for `i = 1..=max budget`.
pub fn scaling_curve(records: &[RunRecord]) -> Result<Vec<Ratio<u64>>, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let horizon = records.iter().map(|r| r.budget).max().unwrap_or(0);
    let found: Vec<u32> = records.iter().map(discovery_iteration).collect::<Result<_, _>>()?;
    let n = records.len() as u64;
    Ok((1..=horizon)
        .map(|i| Ratio::new(found.iter().filter(|f| **f <= i).count() as u64, n))
        .collect())
}

pub fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// An exact fraction alongside its floating-point value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fraction {
    pub value: f64,
    pub exact: String,
}

impl From<Ratio<u64>> for Fraction {
    fn from(r: Ratio<u64>) -> Self {
        Self {
            value: ratio_f64(r),
            exact: format!("{}/{}", r.numer(), r.denom()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub tasks: usize,
    pub budget: u32,
    pub pass_at_1: Fraction,
    pub pass_any: Fraction,
    pub mean_validation_score: f64,
    pub mean_generator_calls: f64,
    pub similarity: SimilarityReport,
    pub iterations: IterationStats,
    /// Verifier verdict on the submitted candidate against hidden truth.
    pub confusion: ConfusionMatrix,
    pub confusion_rates: Option<ConfusionRates>,
    pub scaling_curve: Vec<Fraction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema: String,
    /// Provider used for `embed_cos`, absent when none was configured.
    pub embedding_provider: Option<String>,
    pub methods: Vec<MethodReport>,
}

/// Records grouped by method, each group sorted by task id.
pub fn group_by_method(records: &[RunRecord]) -> BTreeMap<Method, Vec<RunRecord>> {
    let mut groups: BTreeMap<Method, Vec<RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.method).or_default().push(r.clone());
    }
    for g in groups.values_mut() {
        g.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    }
    groups
}

pub fn method_report(
    method: Method,
    records: &[RunRecord],
    embedder: Option<&mut dyn EmbeddingProvider>,
) -> Result<MethodReport, MetricsError> {
    let codes: Vec<Vec<&str>> = records
        .iter()
        .map(|r| r.solutions.iter().map(|s| s.code.as_str()).collect())
        .collect();
    let confusion = verifier::confusion(records).map_err(|e| MetricsError::Confusion(e.to_string()))?;
    Ok(MethodReport {
        method,
        tasks: records.len(),
        budget: records.iter().map(|r| r.budget).max().unwrap_or(0),
        pass_at_1: pass_at_k(records, 1)?.into(),
        pass_any: pass_any(records)?.into(),
        mean_validation_score: mean_validation_score(records)?,
        mean_generator_calls: records.iter().map(|r| f64::from(r.generator_call_count)).sum::<f64>()
            / records.len() as f64,
        similarity: similarity_suite(&codes, embedder)?,
        iterations: iteration_stats(records)?,
        confusion,
        confusion_rates: confusion.rates(),
        scaling_curve: scaling_curve(records)?.into_iter().map(Fraction::from).collect(),
    })
}

pub fn build_report(
    records: &[RunRecord],
    mut embedder: Option<&mut dyn EmbeddingProvider>,
) -> Result<MetricsReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let provider = embedder.as_ref().map(|e| e.name());
    let mut methods = Vec::new();
    for (m, group) in group_by_method(records) {
        let e: Option<&mut dyn EmbeddingProvider> = match &mut embedder {
            Some(e) => Some(&mut **e),
            None => None,
        };
        methods.push(method_report(m, &group, e)?);
    }
    Ok(MetricsReport {
        schema: REPORT_SCHEMA.to_string(),
        embedding_provider: provider,
        methods,
    })
}
