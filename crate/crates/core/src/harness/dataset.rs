//! Dataset loaders: HumanEval-style JSONL and synthetic landscape configs.

use std::collections::HashSet;
use std::path::Path;
use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::HarnessError;
use crate::generators::prompts::parse_assert_lines;
use crate::generators::SyntheticLandscape;
use crate::types::{Task, ValidationTest};
use crate::verifier::synthetic::point_test;

static CANDIDATE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bcandidate\b").unwrap());

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    HumanevalJsonl,
    Synthetic,
}

impl std::str::FromStr for DatasetFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "humaneval-jsonl" => Ok(Self::HumanevalJsonl),
            "synthetic" => Ok(Self::Synthetic),
            other => Err(format!("unknown dataset format {other:?}")),
        }
    }
}

/// How many hidden assertions are handed to the solver as validation tests.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GivenTests {
    /// None; the solver writes its own.
    #[default]
    None,
    First(usize),
    All,
}

impl std::str::FromStr for GivenTests {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "0" | "none" => Ok(Self::None),
            "all" => Ok(Self::All),
            n => n
                .parse::<usize>()
                .map(Self::First)
                .map_err(|_| format!("--given-tests expects 0, a count or all, got {n:?}")),
        }
    }
}

/// A task plus the landscape backing it when it is synthetic.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchTask {
    pub task: Task,
    pub landscape: Option<SyntheticLandscape>,
}

/// Plain assert lines found in a hidden test program, with the dataset's
/// `candidate` parameter renamed to the entry point.
pub fn hidden_asserts(test_program: &str, entry_point: &str) -> Vec<ValidationTest> {
    parse_assert_lines(test_program)
        .into_iter()
        .filter_map(|l| ValidationTest::new(&CANDIDATE.replace_all(&l, entry_point)).ok())
        .collect()
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, name: &str, line: usize) -> Result<&'a str, HarnessError> {
    match obj.get(name) {
        None => Err(HarnessError::Dataset {
            line,
            message: format!("missing field \"{name}\""),
        }),
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(HarnessError::Dataset {
            line,
            message: format!("field \"{name}\" must be a string"),
        }),
    }
}

/// Parses one JSONL record (1-based `line` for error messages). The hidden
/// test program becomes a single composite test that calls `check` on the
/// entry point.
pub fn parse_dataset_line(text: &str, line: usize) -> Result<Task, HarnessError> {
    let value: Value = serde_json::from_str(text).map_err(|e| HarnessError::Dataset {
        line,
        message: e.to_string(),
    })?;
    let Value::Object(obj) = value else {
        return Err(HarnessError::Dataset {
            line,
            message: "expected a JSON object".into(),
        });
    };
    let id = field(&obj, "task_id", line)?;
    let prompt = field(&obj, "prompt", line)?;
    let entry_point = field(&obj, "entry_point", line)?;
    let test = field(&obj, "test", line)?;
    let bad = |m: &str| HarnessError::Dataset {
        line,
        message: m.to_string(),
    };
    if id.trim().is_empty() {
        return Err(bad("task_id is empty"));
    }
    if entry_point.trim().is_empty() {
        return Err(bad("entry_point is empty"));
    }
    if test.trim().is_empty() {
        return Err(bad("test is empty"));
    }
    let program = if test.contains("def check") {
        format!("{}\ncheck({})\n", test.trim_end(), entry_point.trim())
    } else {
        test.to_string()
    };
    Ok(Task {
        id: id.to_string(),
        prompt: prompt.to_string(),
        entry_point: entry_point.trim().to_string(),
        hidden_tests: vec![ValidationTest::composite(program)],
        validation_tests: Vec::new(),
    })
}

pub fn parse_jsonl(text: &str) -> Result<Vec<Task>, HarnessError> {
    let mut seen = HashSet::new();
    let mut tasks = Vec::new();
    for (i, l) in text.lines().enumerate() {
        if l.trim().is_empty() {
            continue;
        }
        let t = parse_dataset_line(l, i + 1)?;
        if !seen.insert(t.id.clone()) {
            return Err(HarnessError::Dataset {
                line: i + 1,
                message: format!("duplicate task_id {:?}", t.id),
            });
        }
        tasks.push(t);
    }
    Ok(tasks)
}

/// Parameters for a generated synthetic benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub tasks: usize,
    pub clusters: usize,
    pub points_per_cluster: usize,
    pub p_stay: f64,
    pub q_jump: f64,
    pub grade_scale: u32,
    pub seed: u64,
    /// Explicit grade table; generated from `seed` when absent and the shape
    /// differs from the bundled landscape.
    pub grades: Option<Vec<Vec<u32>>>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let l = SyntheticLandscape::default();
        Self {
            tasks: 200,
            clusters: l.clusters,
            points_per_cluster: l.points_per_cluster,
            p_stay: l.p_stay,
            q_jump: l.q_jump,
            grade_scale: l.grade_scale,
            seed: 0,
            grades: None,
        }
    }
}

impl SyntheticConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("synthetic config: {e}")))
    }

    /// The template landscape every task is a relabelling of.
    pub fn base_landscape(&self) -> Result<SyntheticLandscape, HarnessError> {
        let bundled = SyntheticLandscape::default();
        let grades = match &self.grades {
            Some(g) => g.clone(),
            None if self.clusters == bundled.clusters
                && self.points_per_cluster == bundled.points_per_cluster
                && self.grade_scale == bundled.grade_scale =>
            {
                bundled.grades.clone()
            }
            None => layered_grades(self.clusters, self.points_per_cluster, self.grade_scale, self.seed),
        };
        let l = SyntheticLandscape {
            clusters: self.clusters,
            points_per_cluster: self.points_per_cluster,
            grades,
            grade_scale: self.grade_scale,
            p_stay: self.p_stay,
            q_jump: self.q_jump,
            home_cluster: 0,
        };
        l.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(l)
    }

    /// One task per instance, each a shuffled copy of the base landscape
    /// whose hidden test pins the optimum.
    pub fn materialize(&self) -> Result<Vec<BenchTask>, HarnessError> {
        if self.tasks == 0 {
            return Err(HarnessError::Config("synthetic config needs at least one task".into()));
        }
        let base = self.base_landscape()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok((0..self.tasks)
            .map(|i| {
                let landscape = base.shuffled(&mut rng);
                let opt = landscape.optimum().expect("validated landscape has an optimum");
                BenchTask {
                    task: Task {
                        id: format!("synth/{i}"),
                        prompt: "Emit `SYNTH <cluster> <member>` for the highest-graded point.".into(),
                        entry_point: "synth".into(),
                        hidden_tests: vec![point_test(opt)],
                        validation_tests: Vec::new(),
                    },
                    landscape: Some(landscape),
                }
            })
            .collect())
    }
}

/// Grades rising with the cluster index, with a single optimum placed in
/// the last cluster.
fn layered_grades(clusters: usize, points: usize, scale: u32, seed: u64) -> Vec<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = scale.saturating_sub(1);
    let mut grades: Vec<Vec<u32>> = (0..clusters)
        .map(|c| {
            let level = ((c as u32 + 1) * top) / clusters.max(1) as u32;
            (0..points)
                .map(|_| level.saturating_sub(rng.random_range(0..=1)))
                .collect()
        })
        .collect();
    if let Some(last) = grades.last_mut() {
        if !last.is_empty() {
            let m = rng.random_range(0..last.len());
            last[m] = scale;
        }
    }
    grades
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<BenchTask>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    match format {
        DatasetFormat::HumanevalJsonl => Ok(parse_jsonl(&text)?
            .into_iter()
            .map(|task| BenchTask { task, landscape: None })
            .collect()),
        DatasetFormat::Synthetic => SyntheticConfig::from_json(&text)?.materialize(),
    }
}

/// Copies the first `given` hidden assertions into the validation set.
pub fn apply_given_tests(task: &mut Task, given: GivenTests) {
    let asserts: Vec<ValidationTest> = task
        .hidden_tests
        .iter()
        .flat_map(|t| hidden_asserts(&t.assertion_source, &task.entry_point))
        .collect();
    task.validation_tests = match given {
        GivenTests::None => Vec::new(),
        GivenTests::First(n) => asserts.into_iter().take(n).collect(),
        GivenTests::All => asserts,
    };
}
