//! Test execution, rewards and verifier-accuracy accounting.

pub mod sandbox;
pub mod synthetic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generators::{
    prompts, GenerationContext, GenerationKind, GenerationRequest, Generator, GeneratorError, Sampling,
};
use crate::types::{RunRecord, TaskView, ValidationTest};

pub use sandbox::{SandboxConfig, SandboxVerifier};
pub use synthetic::SyntheticVerifier;

/// Cap on the stdout/stderr excerpts kept in an [`ExecutionResult`].
pub const OUTPUT_EXCERPT_LIMIT: usize = 4096;

/// Default per-test timeout in seconds.
pub const DEFAULT_TEST_TIMEOUT_S: f64 = 5.0;

#[derive(Debug, Error)]
pub enum VerifierError {
    #[error("sandbox unavailable: {0}")]
    SandboxUnavailable(String),
    #[error("sandbox protocol error: {0}")]
    Protocol(String),
    #[error("invalid verifier input: {0}")]
    InvalidInput(String),
    #[error("validation test generation failed: {0}")]
    Generation(#[from] GeneratorError),
    #[error("no valid validation tests could be generated")]
    NoTests,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Error,
    Timeout,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Error => "error",
            Verdict::Timeout => "timeout",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pass" => Some(Verdict::Pass),
            "fail" => Some(Verdict::Fail),
            "error" => Some(Verdict::Error),
            "timeout" => Some(Verdict::Timeout),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub index: usize,
    pub status: Verdict,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub verdicts: Vec<TestVerdict>,
    #[serde(default)]
    pub stdout: String,
    #[serde(default)]
    pub stderr: String,
    pub wall_s: f64,
}

impl ExecutionResult {
    pub fn passed(&self) -> usize {
        self.verdicts.iter().filter(|v| v.status == Verdict::Pass).count()
    }

    pub fn all_pass(&self) -> bool {
        !self.verdicts.is_empty() && self.passed() == self.verdicts.len()
    }
}

/// Truncates `s` to at most `limit` bytes on a char boundary.
pub fn excerpt(s: &str, limit: usize) -> String {
    if s.len() <= limit {
        return s.to_string();
    }
    let mut end = limit;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    s[..end].to_string()
}

pub trait Verifier: Send {
    fn execute(&mut self, code: &str, tests: &[ValidationTest]) -> Result<ExecutionResult, VerifierError>;

    /// Parse-only check of a test or program in the target runtime.
    fn check_syntax(&mut self, _source: &str) -> Result<bool, VerifierError> {
        Ok(true)
    }
}

impl<V: Verifier + ?Sized> Verifier for Box<V> {
    fn execute(&mut self, code: &str, tests: &[ValidationTest]) -> Result<ExecutionResult, VerifierError> {
        (**self).execute(code, tests)
    }

    fn check_syntax(&mut self, source: &str) -> Result<bool, VerifierError> {
        (**self).check_syntax(source)
    }
}

/// Fraction of tests passed. Errors and timeouts count as failures.
pub fn reward(result: &ExecutionResult) -> Result<f64, VerifierError> {
    if result.verdicts.is_empty() {
        return Err(VerifierError::InvalidInput("execution result has no verdicts".into()));
    }
    Ok(result.passed() as f64 / result.verdicts.len() as f64)
}

/// Feedback text handed back to the generator: one line per test annotated
/// with its verdict, then the stderr excerpt.
pub fn render_feedback(tests: &[ValidationTest], result: &ExecutionResult) -> String {
    let mut out = String::new();
    for v in &result.verdicts {
        let src = tests
            .get(v.index)
            .map_or("<missing test>", |t| t.assertion_source.as_str());
        let first_line = src.lines().next().unwrap_or("");
        if v.message.is_empty() {
            out.push_str(&format!("{first_line}  # {}\n", v.status.as_str()));
        } else {
            out.push_str(&format!(
                "{first_line}  # {}: {}\n",
                v.status.as_str(),
                v.message.trim()
            ));
        }
    }
    if !result.stderr.trim().is_empty() {
        out.push_str("stderr:\n");
        out.push_str(&excerpt(&result.stderr, OUTPUT_EXCERPT_LIMIT));
        if !out.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionRates {
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn rates(&self) -> Option<ConfusionRates> {
        let t = self.total();
        (t > 0).then(|| {
            let t = t as f64;
            ConfusionRates {
                tp: self.tp as f64 / t,
                fp: self.fp as f64 / t,
                tn: self.tn as f64 / t,
                fn_: self.fn_ as f64 / t,
            }
        })
    }

    pub fn record(&mut self, verifier_positive: bool, hidden_pass: bool) {
        match (verifier_positive, hidden_pass) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

/// Tallies verifier verdicts on submitted solutions against hidden truth. A
/// submission is verifier-positive iff its reward is exactly 1.
pub fn confusion(records: &[RunRecord]) -> Result<ConfusionMatrix, VerifierError> {
    let mut m = ConfusionMatrix::default();
    for r in records {
        let sub = r
            .submitted_solution()
            .ok_or_else(|| VerifierError::InvalidInput(format!("{}: submitted solution missing", r.task_id)))?;
        let reward = sub
            .reward
            .ok_or_else(|| VerifierError::InvalidInput(format!("{}: submitted solution has no reward", r.task_id)))?;
        let hidden = r
            .hidden_pass
            .as_ref()
            .and_then(|h| h.get(sub.solution_id as usize).copied())
            .ok_or_else(|| VerifierError::InvalidInput(format!("{}: no hidden verdicts", r.task_id)))?;
        m.record(reward == 1.0, hidden);
    }
    Ok(m)
}

/// Result of validation-test generation plus the number of generator calls
/// spent on it.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedTests {
    pub tests: Vec<ValidationTest>,
    pub generator_calls: u32,
}

/// Asks the generator for `count` assert tests. Extras are dropped; a
/// shortfall triggers one more request. Every kept test passes a parse-only
/// check in the target runtime.
pub fn generate_validation_tests(
    task: &TaskView,
    count: u32,
    sampling: Sampling,
    generator: &mut dyn Generator,
    verifier: &mut dyn Verifier,
) -> Result<GeneratedTests, VerifierError> {
    if count == 0 {
        return Err(VerifierError::InvalidInput("test count must be at least 1".into()));
    }
    let mut tests: Vec<ValidationTest> = Vec::new();
    let mut calls = 0;
    for attempt in 0..2 {
        let missing = count as usize - tests.len();
        let req = GenerationRequest {
            kind: GenerationKind::Tests,
            context: GenerationContext {
                prompt: task.prompt.clone(),
                entry_point: task.entry_point.clone(),
                count: Some(missing as u32),
                ..GenerationContext::default()
            },
            sampling,
        };
        calls += 1;
        let text = match generator.generate(&req) {
            Ok(resp) => resp.text,
            Err(e) if tests.is_empty() && attempt == 1 => return Err(e.into()),
            Err(e) => {
                tracing::warn!(task = %task.id, error = %e, "test generation request failed");
                continue;
            }
        };
        for line in prompts::parse_assert_lines(&text) {
            if tests.len() == count as usize {
                break;
            }
            let Ok(t) = ValidationTest::new(&line) else { continue };
            if tests.iter().any(|x| x.assertion_source == t.assertion_source) {
                continue;
            }
            if verifier.check_syntax(&t.assertion_source)? {
                tests.push(t);
            }
        }
        if tests.len() == count as usize {
            break;
        }
    }
    if tests.is_empty() {
        return Err(VerifierError::NoTests);
    }
    Ok(GeneratedTests {
        tests,
        generator_calls: calls,
    })
}
