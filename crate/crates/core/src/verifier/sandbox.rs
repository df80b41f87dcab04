//! Client side of the sandbox runner's line-delimited JSON protocol.
//!
//! One runner process is kept alive per verifier and serves one request at a
//! time. If a response does not arrive before the deadline the process is
//! killed and every test of that request is reported as a timeout.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{excerpt, ExecutionResult, TestVerdict, Verdict, Verifier, VerifierError, OUTPUT_EXCERPT_LIMIT};
use crate::types::ValidationTest;

pub const PROTOCOL_VERSION: u32 = 1;

/// Messages from the runner are capped at this many bytes.
pub const MESSAGE_LIMIT: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunnerMode {
    Execute,
    ParseOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunnerRequest {
    pub v: u32,
    pub mode: RunnerMode,
    pub code: String,
    pub tests: Vec<String>,
    pub timeout_s: f64,
}

impl RunnerRequest {
    pub fn validate(&self) -> Result<(), VerifierError> {
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(VerifierError::InvalidInput(format!(
                "timeout {} must be positive",
                self.timeout_s
            )));
        }
        if self.mode == RunnerMode::Execute && self.tests.is_empty() {
            return Err(VerifierError::InvalidInput(
                "execute mode needs at least one test".into(),
            ));
        }
        Ok(())
    }

    /// The exact request line written to the runner, without the newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("runner request serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunnerResult {
    pub status: String,
    #[serde(default)]
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunnerResponse {
    pub v: u32,
    pub results: Vec<RunnerResult>,
    #[serde(default)]
    pub stderr: String,
    #[serde(default)]
    pub wall_s: f64,
}

/// Decodes one response line and checks it against the number of results
/// the request expects.
pub fn parse_runner_response(line: &str, expected: usize) -> Result<ExecutionResult, VerifierError> {
    let resp: RunnerResponse =
        serde_json::from_str(line.trim_end()).map_err(|e| VerifierError::Protocol(format!("bad response: {e}")))?;
    if resp.v != PROTOCOL_VERSION {
        return Err(VerifierError::Protocol(format!(
            "unsupported protocol version {}",
            resp.v
        )));
    }
    if resp.results.len() != expected {
        return Err(VerifierError::Protocol(format!(
            "expected {expected} results, got {}: {}",
            resp.results.len(),
            excerpt(&resp.stderr, 200)
        )));
    }
    if !(resp.wall_s.is_finite() && resp.wall_s >= 0.0) {
        return Err(VerifierError::Protocol(format!("invalid wall time {}", resp.wall_s)));
    }
    let mut verdicts = Vec::with_capacity(expected);
    for (index, r) in resp.results.into_iter().enumerate() {
        let status = Verdict::parse(&r.status)
            .ok_or_else(|| VerifierError::Protocol(format!("unknown status {:?}", r.status)))?;
        verdicts.push(TestVerdict {
            index,
            status,
            message: excerpt(&r.message, MESSAGE_LIMIT),
        });
    }
    Ok(ExecutionResult {
        verdicts,
        stdout: String::new(),
        stderr: excerpt(&resp.stderr, OUTPUT_EXCERPT_LIMIT),
        wall_s: resp.wall_s,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SandboxConfig {
    /// Runner executable followed by its arguments.
    pub command: Vec<String>,
    pub working_dir: Option<PathBuf>,
    pub test_timeout_s: f64,
    /// Slack on top of the per-request budget before the runner is killed.
    pub grace_s: f64,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            command: vec!["python3".into(), "-m".into(), "sfs_sandbox".into()],
            working_dir: None,
            test_timeout_s: super::DEFAULT_TEST_TIMEOUT_S,
            grace_s: 1.0,
        }
    }
}

struct RunnerProcess {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl RunnerProcess {
    fn spawn(cfg: &SandboxConfig) -> Result<Self, VerifierError> {
        let (program, args) = cfg
            .command
            .split_first()
            .ok_or_else(|| VerifierError::SandboxUnavailable("empty runner command".into()))?;
        let mut cmd = Command::new(program);
        cmd.args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null());
        if let Some(dir) = &cfg.working_dir {
            cmd.current_dir(dir);
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| VerifierError::SandboxUnavailable(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
        })
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

enum Exchange {
    Line(String),
    Deadline,
    Closed(String),
}

/// Verifier backed by an external runner process.
pub struct SandboxVerifier {
    cfg: SandboxConfig,
    process: Option<RunnerProcess>,
}

impl SandboxVerifier {
    pub fn new(cfg: SandboxConfig) -> Self {
        Self { cfg, process: None }
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.cfg
    }

    fn exchange(&mut self, line: &str, deadline: Duration) -> Result<Exchange, VerifierError> {
        if self.process.is_none() {
            self.process = Some(RunnerProcess::spawn(&self.cfg)?);
        }
        let proc = self.process.as_mut().expect("process present");
        let write = proc
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| proc.stdin.write_all(b"\n"))
            .and_then(|_| proc.stdin.flush());
        if let Err(e) = write {
            return Ok(Exchange::Closed(format!("write failed: {e}")));
        }
        match proc.lines.recv_timeout(deadline) {
            Ok(Ok(l)) => Ok(Exchange::Line(l)),
            Ok(Err(e)) => Ok(Exchange::Closed(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => Ok(Exchange::Deadline),
            Err(RecvTimeoutError::Disconnected) => Ok(Exchange::Closed("runner exited".into())),
        }
    }

    fn reset(&mut self) {
        if let Some(p) = self.process.take() {
            p.kill();
        }
    }

    fn request(&mut self, req: &RunnerRequest, expected: usize) -> Result<ExecutionResult, VerifierError> {
        req.validate()?;
        let slots = expected.max(1) as f64;
        let deadline = Duration::from_secs_f64(req.timeout_s * slots + self.cfg.grace_s);
        let line = req.to_line();
        let started = Instant::now();
        // A dead runner gets one restart before the sandbox is declared unavailable.
        for _ in 0..2 {
            match self.exchange(&line, deadline)? {
                Exchange::Line(l) => return parse_runner_response(&l, expected),
                Exchange::Deadline => {
                    self.reset();
                    return Ok(timeout_result(expected, started.elapsed().as_secs_f64()));
                }
                Exchange::Closed(why) => {
                    tracing::warn!(reason = %why, "sandbox runner went away, restarting");
                    self.reset();
                }
            }
        }
        Err(VerifierError::SandboxUnavailable("runner keeps exiting".into()))
    }
}

fn timeout_result(n: usize, wall_s: f64) -> ExecutionResult {
    ExecutionResult {
        verdicts: (0..n)
            .map(|index| TestVerdict {
                index,
                status: Verdict::Timeout,
                message: "killed at time limit".into(),
            })
            .collect(),
        stdout: String::new(),
        stderr: String::new(),
        wall_s,
    }
}

impl Drop for SandboxVerifier {
    fn drop(&mut self) {
        self.reset();
    }
}

impl Verifier for SandboxVerifier {
    fn execute(&mut self, code: &str, tests: &[ValidationTest]) -> Result<ExecutionResult, VerifierError> {
        let req = RunnerRequest {
            v: PROTOCOL_VERSION,
            mode: RunnerMode::Execute,
            code: code.to_string(),
            tests: tests.iter().map(|t| t.assertion_source.clone()).collect(),
            timeout_s: self.cfg.test_timeout_s,
        };
        self.request(&req, tests.len())
    }

    fn check_syntax(&mut self, source: &str) -> Result<bool, VerifierError> {
        let req = RunnerRequest {
            v: PROTOCOL_VERSION,
            mode: RunnerMode::ParseOnly,
            code: source.to_string(),
            tests: Vec::new(),
            timeout_s: self.cfg.test_timeout_s,
        };
        let r = self.request(&req, 1)?;
        Ok(r.verdicts[0].status == Verdict::Pass)
    }
}
