//! Domain types shared by every search strategy.
//!
//! Strategies only ever see a [`TaskView`]; the hidden tests live on [`Task`]
//! and are consumed by the benchmark harness after a run has finished.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Policy, PuctConfig};
use crate::verifier::ExecutionResult;

/// Schema tag written at the top of every serialized [`RunRecord`].
pub const RUN_RECORD_SCHEMA: &str = "sfs-run/1";

/// Maximum length of a test description, in characters.
pub const MAX_TEST_DESCRIPTION: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("no candidates")]
    NoCandidates,
    #[error("candidate {0} has no reward")]
    MissingReward(SolutionId),
    #[error("invalid validation test: {0}")]
    InvalidTest(String),
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error("invalid run record: {0}")]
    InvalidRecord(String),
}

pub type SolutionId = u32;

/// A single executable assertion used as a verifier signal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationTest {
    pub assertion_source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl ValidationTest {
    /// Builds a test from one line of assertion source.
    ///
    /// Accepts `assert expr`, `assert(expr)` and the `assert expr, "message"`
    /// form; the trailing message becomes the description.
    pub fn new(source: &str) -> Result<Self, CoreError> {
        let line = source.trim();
        if line.contains('\n') {
            return Err(CoreError::InvalidTest("assertion spans several lines".into()));
        }
        let rest = line
            .strip_prefix("assert")
            .ok_or_else(|| CoreError::InvalidTest(format!("not an assert statement: {line:?}")))?;
        match rest.chars().next() {
            Some(ch) if ch.is_whitespace() || ch == '(' => {}
            _ => return Err(CoreError::InvalidTest(format!("not an assert statement: {line:?}"))),
        }
        if rest.trim().is_empty() {
            return Err(CoreError::InvalidTest("empty assertion".into()));
        }
        let description = trailing_message(line).map(|d| d.chars().take(MAX_TEST_DESCRIPTION).collect());
        Ok(Self {
            assertion_source: line.to_string(),
            description,
        })
    }

    /// Wraps a whole test program (e.g. a `check` function plus its call) as
    /// one opaque test. Used for dataset-provided hidden tests.
    pub fn composite(program: impl Into<String>) -> Self {
        Self {
            assertion_source: program.into(),
            description: None,
        }
    }
}

/// Extracts `msg` from `assert expr, "msg"`.
fn trailing_message(line: &str) -> Option<String> {
    let quote = if line.ends_with('"') {
        '"'
    } else if line.ends_with('\'') {
        '\''
    } else {
        return None;
    };
    let body = &line[..line.len() - 1];
    let open = body.rfind(quote)?;
    let before = body[..open].trim_end();
    if !before.ends_with(',') {
        return None;
    }
    let msg = &body[open + 1..];
    (!msg.is_empty()).then(|| msg.to_string())
}

/// One program-synthesis problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub prompt: String,
    pub entry_point: String,
    pub hidden_tests: Vec<ValidationTest>,
    pub validation_tests: Vec<ValidationTest>,
}

impl Task {
    /// The strategy-facing view: everything except the hidden tests.
    pub fn view(&self) -> TaskView {
        TaskView {
            id: self.id.clone(),
            prompt: self.prompt.clone(),
            entry_point: self.entry_point.clone(),
            validation_tests: self.validation_tests.clone(),
        }
    }
}

/// A task as seen by a search strategy. There is no hidden-test slot.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskView {
    pub id: String,
    pub prompt: String,
    pub entry_point: String,
    pub validation_tests: Vec<ValidationTest>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DirectionId(pub u32);

impl fmt::Display for DirectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}", self.0)
    }
}

/// One generated program together with its lineage and verifier outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSolution {
    pub solution_id: SolutionId,
    pub code: String,
    pub parent_id: Option<SolutionId>,
    pub direction_id: Option<DirectionId>,
    pub iteration_index: u32,
    pub feedback: Option<ExecutionResult>,
    pub reward: Option<f64>,
}

impl CandidateSolution {
    pub fn is_seed(&self) -> bool {
        self.parent_id.is_none()
    }
}

/// Value estimate and visit count for one branch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectionStats {
    pub q_value: f64,
    pub visits: u32,
}

/// A textual improvement direction attached to a search node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub id: DirectionId,
    pub text: String,
    pub stats: DirectionStats,
    /// Cumulative generator log-probability of the direction text, when the
    /// backend reports one. Feeds the PUCT prior.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_prob: Option<f64>,
}

impl Direction {
    pub fn new(id: u32, text: impl Into<String>) -> Self {
        Self {
            id: DirectionId(id),
            text: text.into(),
            stats: DirectionStats::default(),
            log_prob: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Improved,
    Worsened,
    Unchanged,
}

impl Outcome {
    pub fn classify(parent_reward: f64, child_reward: f64) -> Self {
        if child_reward > parent_reward {
            Outcome::Improved
        } else if child_reward < parent_reward {
            Outcome::Worsened
        } else {
            Outcome::Unchanged
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Improved => "improved",
            Outcome::Worsened => "worsened",
            Outcome::Unchanged => "unchanged",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Insight {
    pub text: String,
    pub origin: String,
    pub outcome: Outcome,
}

/// Bounded global store of search insights. Oldest entries are evicted first.
#[derive(Clone, Debug, PartialEq)]
pub struct InsightMemory {
    entries: VecDeque<Insight>,
    capacity: usize,
}

impl InsightMemory {
    pub const DEFAULT_CAPACITY: usize = 10;

    pub fn new(capacity: usize) -> Self {
        Self {
            entries: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, insight: Insight) {
        if self.capacity == 0 {
            return;
        }
        while self.entries.len() >= self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(insight);
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &Insight> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Lines handed to the generator, oldest first.
    pub fn render(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|i| format!("[{}] {}", i.outcome.as_str(), i.text))
            .collect()
    }
}

impl Default for InsightMemory {
    fn default() -> Self {
        Self::new(Self::DEFAULT_CAPACITY)
    }
}

/// Instruction bank used to diversify seed generation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedTheme {
    #[default]
    None,
    Role,
    Style,
    Jabberwocky,
}

impl std::str::FromStr for SeedTheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(SeedTheme::None),
            "role" => Ok(SeedTheme::Role),
            "style" => Ok(SeedTheme::Style),
            "jabberwocky" => Ok(SeedTheme::Jabberwocky),
            other => Err(format!("unknown theme {other:?}")),
        }
    }
}

/// Search strategy identifiers, in report order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sfs,
    Line,
    Bon,
    Tree,
    Genetic,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Sfs, Method::Line, Method::Bon, Method::Tree, Method::Genetic];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sfs => "sfs",
            Method::Line => "line",
            Method::Bon => "bon",
            Method::Tree => "tree",
            Method::Genetic => "genetic",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// Per-run search configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Total candidate solutions generated, seeds included.
    pub budget: u32,
    pub seed_count: u32,
    pub branching: u32,
    pub exploration: f64,
    pub selection_policy: Policy,
    pub puct: PuctConfig,
    /// Theme bank used for SFS seeds.
    pub seed_theme: SeedTheme,
    /// Theme bank used for best-of-N sampling.
    pub bon_theme: SeedTheme,
    pub validation_test_count: u32,
    pub rng_seed: u64,
    /// Generate textual directions (off: identical placeholder slots).
    pub scattering: bool,
    /// Keep and use the insight memory.
    pub scouting: bool,
    pub insight_capacity: usize,
    /// Stop once a candidate passes every validation test.
    pub early_stop: bool,
    pub seed_temperature: f64,
    pub refine_temperature: f64,
    pub max_tokens: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            budget: 10,
            seed_count: 3,
            branching: 3,
            exploration: 1.0,
            selection_policy: Policy::Uct,
            puct: PuctConfig::default(),
            seed_theme: SeedTheme::Role,
            bon_theme: SeedTheme::None,
            validation_test_count: 6,
            rng_seed: 0,
            scattering: true,
            scouting: true,
            insight_capacity: InsightMemory::DEFAULT_CAPACITY,
            early_stop: true,
            seed_temperature: 0.8,
            refine_temperature: 0.2,
            max_tokens: 1024,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        let bad = |m: &str| Err(CoreError::InvalidConfig(m.to_string()));
        if self.budget == 0 {
            return bad("budget must be at least 1");
        }
        if self.seed_count == 0 {
            return bad("seed_count must be at least 1");
        }
        if self.seed_count > self.budget {
            return bad("seed_count exceeds budget");
        }
        if self.branching == 0 {
            return bad("branching must be at least 1");
        }
        if !self.exploration.is_finite() || self.exploration < 0.0 {
            return bad("exploration must be finite and non-negative");
        }
        if !(self.puct.c_base.is_finite() && self.puct.c_base > 0.0) {
            return bad("puct c_base must be positive");
        }
        if !(self.puct.c.is_finite() && self.puct.c >= 0.0) {
            return bad("puct c must be finite and non-negative");
        }
        for t in [self.seed_temperature, self.refine_temperature] {
            if !t.is_finite() || t < 0.0 {
                return bad("temperatures must be finite and non-negative");
            }
        }
        Ok(())
    }
}

/// Everything recorded about one strategy run on one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: String,
    pub task_id: String,
    pub method: Method,
    pub budget: u32,
    pub solutions: Vec<CandidateSolution>,
    pub submitted: SolutionId,
    /// Hidden-test verdict per solution, aligned with `solutions`. Filled by
    /// the harness once the search has finished.
    #[serde(default)]
    pub hidden_pass: Option<Vec<bool>>,
    pub generator_call_count: u32,
}

impl RunRecord {
    pub fn from_json(text: &str) -> Result<Self, CoreError> {
        let record: RunRecord = serde_json::from_str(text).map_err(|e| CoreError::InvalidRecord(e.to_string()))?;
        if record.schema != RUN_RECORD_SCHEMA {
            return Err(CoreError::InvalidRecord(format!(
                "unsupported schema {:?}",
                record.schema
            )));
        }
        record.validate()?;
        Ok(record)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("run record serializes");
        s.push('\n');
        s
    }

    pub fn submitted_solution(&self) -> Option<&CandidateSolution> {
        self.solutions.iter().find(|s| s.solution_id == self.submitted)
    }

    /// Checks the structural invariants every record must satisfy.
    pub fn validate(&self) -> Result<(), CoreError> {
        let bad = |m: String| Err(CoreError::InvalidRecord(m));
        if self.solutions.is_empty() {
            return bad("record has no solutions".into());
        }
        if self.solutions.len() > self.budget as usize {
            return bad(format!(
                "{} solutions exceed budget {}",
                self.solutions.len(),
                self.budget
            ));
        }
        for (i, s) in self.solutions.iter().enumerate() {
            if s.solution_id as usize != i {
                return bad(format!("solution ids not consecutive at position {i}"));
            }
            if s.iteration_index as usize != i {
                return bad(format!("iteration index out of order at position {i}"));
            }
            if s.parent_id.is_some() != s.direction_id.is_some() {
                return bad(format!("solution {i} has partial lineage"));
            }
            if let Some(p) = s.parent_id {
                if p >= s.solution_id {
                    return bad(format!("solution {i} has a parent generated after it"));
                }
            }
            if s.feedback.is_some() != s.reward.is_some() {
                return bad(format!("solution {i}: reward present without feedback or vice versa"));
            }
            if let Some(r) = s.reward {
                if !(0.0..=1.0).contains(&r) {
                    return bad(format!("solution {i}: reward {r} outside [0,1]"));
                }
            }
        }
        if self.submitted as usize >= self.solutions.len() {
            return bad(format!("submitted id {} does not exist", self.submitted));
        }
        if let Some(h) = &self.hidden_pass {
            if h.len() != self.solutions.len() {
                return bad("hidden verdicts misaligned with solutions".into());
            }
        }
        Ok(())
    }
}

/// Picks the candidate with the highest reward; ties go to the earliest
/// generated one.
pub fn select_final(candidates: &[CandidateSolution]) -> Result<&CandidateSolution, CoreError> {
    let mut best: Option<(&CandidateSolution, f64)> = None;
    for c in candidates {
        let r = c.reward.ok_or(CoreError::MissingReward(c.solution_id))?;
        best = match best {
            None => Some((c, r)),
            Some((b, br)) if r > br || (r == br && c.iteration_index < b.iteration_index) => Some((c, r)),
            keep => keep,
        };
    }
    best.map(|(c, _)| c).ok_or(CoreError::NoCandidates)
}
