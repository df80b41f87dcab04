//! Executes `SYNTH c m` programs against synthetic tests without a runtime.
//!
//! Two test shapes are understood:
//! `assert synth_grade() >= t` and `assert synth_point() == (c, m)`.

use std::sync::LazyLock;

use regex::Regex;

use super::{ExecutionResult, TestVerdict, Verdict, Verifier, VerifierError};
use crate::generators::synthetic::{Point, SyntheticLandscape};
use crate::types::ValidationTest;

static GRADE_TEST: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^assert\s+synth_grade\(\)\s*>=\s*(\d+)\s*$").unwrap());
static POINT_TEST: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^assert\s+synth_point\(\)\s*==\s*\(\s*(\d+)\s*,\s*(\d+)\s*\)\s*$").unwrap());

pub fn point_test(p: Point) -> ValidationTest {
    ValidationTest::new(&format!("assert synth_point() == ({}, {})", p.cluster, p.member)).expect("well-formed assert")
}

#[derive(Clone, Debug)]
pub struct SyntheticVerifier {
    landscape: SyntheticLandscape,
}

impl SyntheticVerifier {
    pub fn new(landscape: SyntheticLandscape) -> Self {
        Self { landscape }
    }

    fn check(&self, p: Point, test: &str) -> (Verdict, String) {
        let test = test.trim();
        if let Some(c) = GRADE_TEST.captures(test) {
            let Ok(t) = c[1].parse::<u32>() else {
                return (Verdict::Error, "threshold out of range".into());
            };
            let g = self.landscape.grade(p);
            return if g >= t {
                (Verdict::Pass, String::new())
            } else {
                (Verdict::Fail, format!("output {g} is incorrect"))
            };
        }
        if let Some(c) = POINT_TEST.captures(test) {
            let expected = match (c[1].parse(), c[2].parse()) {
                (Ok(a), Ok(b)) => Point::new(a, b),
                _ => return (Verdict::Error, "point out of range".into()),
            };
            return if p == expected {
                (Verdict::Pass, String::new())
            } else {
                (Verdict::Fail, format!("output {p} is incorrect"))
            };
        }
        (Verdict::Error, "unsupported test".into())
    }
}

impl Verifier for SyntheticVerifier {
    fn execute(&mut self, code: &str, tests: &[ValidationTest]) -> Result<ExecutionResult, VerifierError> {
        if tests.is_empty() {
            return Err(VerifierError::InvalidInput("no tests to execute".into()));
        }
        let point = self.landscape.decode(code).ok();
        let verdicts = tests
            .iter()
            .enumerate()
            .map(|(index, t)| {
                let (status, message) = match point {
                    Some(p) => self.check(p, &t.assertion_source),
                    None => (Verdict::Fail, "parse failure".to_string()),
                };
                TestVerdict { index, status, message }
            })
            .collect();
        Ok(ExecutionResult {
            verdicts,
            stdout: String::new(),
            stderr: String::new(),
            wall_s: 0.0,
        })
    }

    fn check_syntax(&mut self, source: &str) -> Result<bool, VerifierError> {
        let s = source.trim();
        Ok(GRADE_TEST.is_match(s) || POINT_TEST.is_match(s))
    }
}
