//! Benchmark orchestration: load tasks, run every (task, method) pair, score
//! against hidden tests, write records and reports.

pub mod dataset;
pub mod report;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generators::openai::{InFlightLimit, API_KEY_ENV};
use crate::generators::{Generator, GeneratorError, OpenAiConfig, OpenAiGenerator, SyntheticGenerator};
use crate::metrics::{EmbeddingProvider, MetricsError, MetricsReport};
use crate::strategies::{run_method, StrategyError};
use crate::types::{CoreError, Method, RunConfig, RunRecord, ValidationTest};
use crate::verifier::sandbox::{SandboxConfig, SandboxVerifier};
use crate::verifier::synthetic::SyntheticVerifier;
use crate::verifier::{Verifier, VerifierError};
pub use dataset::{load_dataset, BenchTask, DatasetFormat, GivenTests, SyntheticConfig};
pub use report::emit_report;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {message}", path.display())]
    Record { path: PathBuf, message: String },
    #[error("no run records under {}", .0.display())]
    NoRecords(PathBuf),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorChoice {
    #[default]
    Synthetic,
    OpenaiCompat,
}

impl std::str::FromStr for GeneratorChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "synthetic" => Ok(Self::Synthetic),
            "openai-compat" => Ok(Self::OpenaiCompat),
            other => Err(format!("unknown generator {other:?}")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchmarkConfig {
    pub methods: Vec<Method>,
    pub run: RunConfig,
    pub generator: GeneratorChoice,
    pub openai: OpenAiConfig,
    pub sandbox: SandboxConfig,
    pub workers: usize,
    pub given_tests: GivenTests,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Sfs],
            run: RunConfig::default(),
            generator: GeneratorChoice::Synthetic,
            openai: OpenAiConfig::default(),
            sandbox: SandboxConfig::default(),
            workers: 1,
            given_tests: GivenTests::None,
        }
    }
}

#[derive(Debug, Error)]
enum JobError {
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("hidden evaluation failed: {0}")]
    Hidden(#[from] VerifierError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("invariant violated: {0}")]
    Invariant(CoreError),
}

impl JobError {
    fn is_violation(&self) -> bool {
        matches!(self, JobError::Invariant(_))
            || matches!(
                self,
                JobError::Strategy(StrategyError::Config(CoreError::InvalidRecord(_)))
            )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobFailure {
    pub task_id: String,
    pub method: Method,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct BenchmarkSummary {
    pub tasks: usize,
    pub jobs: usize,
    pub written: Vec<PathBuf>,
    pub failures: Vec<JobFailure>,
    /// Failures caused by a broken record invariant (e.g. a budget overrun).
    pub violations: usize,
    pub report: Option<MetricsReport>,
}

impl BenchmarkSummary {
    /// Tasks with at least one failed method.
    pub fn failed_tasks(&self) -> usize {
        let mut ids: Vec<&str> = self.failures.iter().map(|f| f.task_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// False when more than 10% of tasks errored or any invariant broke.
    pub fn success(&self) -> bool {
        self.violations == 0 && self.failed_tasks() * 10 <= self.tasks && self.report.is_some()
    }
}

/// Per-task seed: the run seed mixed with an FNV-1a hash of the task id, so
/// results do not depend on task order or worker count.
pub fn task_seed(rng_seed: u64, task_id: &str) -> u64 {
    let h = task_id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3)
    });
    rng_seed ^ h
}

/// Hidden-test verdict for every candidate in the record.
pub fn evaluate_hidden(
    record: &RunRecord,
    hidden: &[ValidationTest],
    verifier: &mut dyn Verifier,
) -> Result<Vec<bool>, VerifierError> {
    record
        .solutions
        .iter()
        .map(|s| verifier.execute(&s.code, hidden).map(|r| r.all_pass()))
        .collect()
}

fn run_job(
    bench: &BenchTask,
    method: Method,
    cfg: &BenchmarkConfig,
    limit: &Arc<InFlightLimit>,
    out_dir: &Path,
) -> Result<PathBuf, JobError> {
    let mut task = bench.task.clone();
    dataset::apply_given_tests(&mut task, cfg.given_tests);
    let seed = task_seed(cfg.run.rng_seed, &task.id);
    let run_cfg = RunConfig {
        rng_seed: seed,
        ..cfg.run.clone()
    };
    let mut generator: Box<dyn Generator> = match (cfg.generator, &bench.landscape) {
        (GeneratorChoice::Synthetic, Some(l)) => Box::new(SyntheticGenerator::new(l.clone(), seed)),
        (GeneratorChoice::Synthetic, None) => {
            return Err(HarnessError::Config("the synthetic generator needs a synthetic dataset".into()).into())
        }
        (GeneratorChoice::OpenaiCompat, _) => Box::new(OpenAiGenerator::from_env(cfg.openai.clone(), limit.clone())?),
    };
    let mut verifier: Box<dyn Verifier> = match &bench.landscape {
        Some(l) => Box::new(SyntheticVerifier::new(l.clone())),
        None => Box::new(SandboxVerifier::new(cfg.sandbox.clone())),
    };
    let outcome = run_method(method, &task.view(), &run_cfg, &mut *generator, &mut *verifier)?;
    let mut record = outcome.run_record;
    record.hidden_pass = Some(evaluate_hidden(&record, &task.hidden_tests, &mut *verifier)?);
    record.validate().map_err(JobError::Invariant)?;
    Ok(report::write_record(out_dir, &record)?)
}

/// Runs every method on every task, then writes the report files. Per-job
/// failures are logged and collected rather than aborting the run.
pub fn run_benchmark(
    tasks: &[BenchTask],
    cfg: &BenchmarkConfig,
    out_dir: &Path,
    embedder: Option<&mut dyn EmbeddingProvider>,
) -> Result<BenchmarkSummary, HarnessError> {
    if tasks.is_empty() {
        return Err(HarnessError::Config("dataset has no tasks".into()));
    }
    if cfg.methods.is_empty() {
        return Err(HarnessError::Config("no methods selected".into()));
    }
    cfg.run.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
    match cfg.generator {
        GeneratorChoice::Synthetic if tasks.iter().any(|t| t.landscape.is_none()) => {
            return Err(HarnessError::Config(
                "the synthetic generator needs a synthetic dataset".into(),
            ));
        }
        GeneratorChoice::OpenaiCompat if std::env::var(API_KEY_ENV).map_or(true, |k| k.trim().is_empty()) => {
            return Err(HarnessError::Config(format!("{API_KEY_ENV} is not set")));
        }
        _ => {}
    }
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;

    let limit = InFlightLimit::new(cfg.openai.max_in_flight);
    let jobs: Vec<(&BenchTask, Method)> = tasks
        .iter()
        .flat_map(|t| cfg.methods.iter().map(move |m| (t, *m)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let results: Vec<Result<PathBuf, JobError>> = pool.install(|| {
        jobs.par_iter()
            .map(|(t, m)| run_job(t, *m, cfg, &limit, out_dir))
            .collect()
    });

    let mut written = Vec::new();
    let mut failures = Vec::new();
    let mut violations = 0;
    for ((t, m), r) in jobs.iter().zip(results) {
        match r {
            Ok(p) => written.push(p),
            Err(e) => {
                tracing::error!(task = %t.task.id, method = %m, error = %e, "job failed");
                if e.is_violation() {
                    violations += 1;
                }
                failures.push(JobFailure {
                    task_id: t.task.id.clone(),
                    method: *m,
                    message: e.to_string(),
                });
            }
        }
    }
    let report = if written.is_empty() {
        None
    } else {
        Some(emit_report(out_dir, embedder)?)
    };
    Ok(BenchmarkSummary {
        tasks: tasks.len(),
        jobs: jobs.len(),
        written,
        failures,
        violations,
        report,
    })
}
