//! Search strategies. All of them share one budget/bookkeeping layer
//! ([`RunContext`]) and talk to the outside world only through a
//! [`Generator`] and a [`Verifier`].

pub mod baselines;
pub mod genetic;
pub mod mcts;
pub mod themes;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EngineError;
use crate::forest::Forest;
use crate::generators::{
    GenerationContext, GenerationKind, GenerationRequest, GenerationResponse, Generator, GeneratorError, ParentContext,
    Sampling,
};
use crate::types::{
    select_final, CandidateSolution, CoreError, DirectionId, Method, RunConfig, RunRecord, SolutionId, TaskView,
    ValidationTest, RUN_RECORD_SCHEMA,
};
use crate::verifier::{self, Verifier, VerifierError};

pub use baselines::{run_bon, run_line};
pub use genetic::run_genetic;
pub use mcts::{run_sfs, run_tree, scattering, scouting};

/// Attempts per generator request: the first try plus two retries.
pub const GENERATOR_ATTEMPTS: u32 = 3;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Config(#[from] CoreError),
    #[error("verifier failure: {0}")]
    Verifier(#[from] VerifierError),
    #[error("engine failure: {0}")]
    Engine(#[from] EngineError),
    #[error("no solution could be generated: {0}")]
    NoSolutions(String),
}

/// Generator calls made during one run, by purpose.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    /// Validation-test generation.
    pub setup: u32,
    /// Seed generation, including failed attempts.
    pub seeds: u32,
    /// Directions requested for seed nodes.
    pub seed_directions: u32,
    /// Non-seed solution generation.
    pub solutions: u32,
    /// Directions and insights requested for non-seed nodes.
    pub reflections: u32,
}

impl CallCounts {
    pub fn total(&self) -> u32 {
        self.setup + self.seeds + self.seed_directions + self.solutions + self.reflections
    }
}

#[derive(Clone, Debug)]
pub struct StrategyOutcome {
    pub run_record: RunRecord,
    /// The search forest, for tree-based strategies.
    pub forest_snapshot: Option<Forest>,
    pub calls: CallCounts,
    /// Validation tests the run was scored against.
    pub validation_tests: Vec<ValidationTest>,
}

/// Runs `method` on one task.
pub fn run_method(
    method: Method,
    task: &TaskView,
    cfg: &RunConfig,
    generator: &mut dyn Generator,
    verifier: &mut dyn Verifier,
) -> Result<StrategyOutcome, StrategyError> {
    match method {
        Method::Sfs => run_sfs(task, cfg, generator, verifier),
        Method::Line => run_line(task, cfg, generator, verifier),
        Method::Bon => run_bon(task, cfg, generator, verifier),
        Method::Tree => run_tree(task, cfg, generator, verifier),
        Method::Genetic => run_genetic(task, cfg, generator, verifier),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum CallPurpose {
    Seed,
    SeedDirections,
    Solution,
    Reflection,
}

/// Budget, bookkeeping and generator/verifier plumbing shared by every
/// strategy.
pub(crate) struct RunContext<'a> {
    pub task: &'a TaskView,
    pub cfg: &'a RunConfig,
    generator: &'a mut dyn Generator,
    verifier: &'a mut dyn Verifier,
    pub tests: Vec<ValidationTest>,
    pub solutions: Vec<CandidateSolution>,
    pub calls: CallCounts,
    failures: u32,
    solved: bool,
}

impl<'a> RunContext<'a> {
    /// Validates the config and makes sure validation tests exist, generating
    /// them when the task ships none.
    pub fn prepare(
        task: &'a TaskView,
        cfg: &'a RunConfig,
        generator: &'a mut dyn Generator,
        verifier: &'a mut dyn Verifier,
    ) -> Result<Self, StrategyError> {
        cfg.validate()?;
        let mut calls = CallCounts::default();
        let tests = if task.validation_tests.is_empty() {
            let sampling = Sampling {
                temperature: cfg.refine_temperature,
                max_tokens: cfg.max_tokens,
            };
            let generated = verifier::generate_validation_tests(
                task,
                cfg.validation_test_count.max(1),
                sampling,
                generator,
                verifier,
            )?;
            calls.setup = generated.generator_calls;
            generated.tests
        } else {
            task.validation_tests.clone()
        };
        Ok(Self {
            task,
            cfg,
            generator,
            verifier,
            tests,
            solutions: Vec::new(),
            calls,
            failures: 0,
            solved: false,
        })
    }

    /// True while another solution may be generated.
    pub fn has_budget(&self) -> bool {
        (self.solutions.len() as u32) < self.cfg.budget
            && !(self.cfg.early_stop && self.solved)
            && self.failures < self.cfg.budget
    }

    pub fn base_context(&self) -> GenerationContext {
        GenerationContext {
            prompt: self.task.prompt.clone(),
            entry_point: self.task.entry_point.clone(),
            ..GenerationContext::default()
        }
    }

    pub fn parent_context(&self, id: SolutionId) -> ParentContext {
        let s = &self.solutions[id as usize];
        ParentContext {
            code: s.code.clone(),
            feedback: self.feedback_text(id),
            reward: s.reward,
        }
    }

    pub fn feedback_text(&self, id: SolutionId) -> String {
        self.solutions[id as usize]
            .feedback
            .as_ref()
            .map(|f| verifier::render_feedback(&self.tests, f))
            .unwrap_or_default()
    }

    pub fn reward(&self, id: SolutionId) -> f64 {
        self.solutions[id as usize].reward.unwrap_or(0.0)
    }

    /// Sends one request, retrying failures twice. Every attempt is counted.
    pub fn call(
        &mut self,
        purpose: CallPurpose,
        kind: GenerationKind,
        context: GenerationContext,
        temperature: f64,
    ) -> Result<GenerationResponse, GeneratorError> {
        let req = GenerationRequest {
            kind,
            context,
            sampling: Sampling {
                temperature,
                max_tokens: self.cfg.max_tokens,
            },
        };
        let mut last = GeneratorError::Exhausted;
        for attempt in 0..GENERATOR_ATTEMPTS {
            match purpose {
                CallPurpose::Seed => self.calls.seeds += 1,
                CallPurpose::SeedDirections => self.calls.seed_directions += 1,
                CallPurpose::Solution => self.calls.solutions += 1,
                CallPurpose::Reflection => self.calls.reflections += 1,
            }
            match self.generator.generate(&req) {
                Ok(r) if !r.text.trim().is_empty() => return Ok(r),
                Ok(_) => last = GeneratorError::EmptyCompletion,
                Err(e) => {
                    let fatal = !e.is_retryable();
                    last = e;
                    if fatal {
                        break;
                    }
                }
            }
            tracing::debug!(task = %self.task.id, attempt, error = %last, "generator attempt failed");
        }
        tracing::warn!(task = %self.task.id, error = %last, "generator request skipped");
        Err(last)
    }

    /// Records a failed iteration. Runs stop after `budget` failures.
    pub fn note_failure(&mut self) {
        self.failures += 1;
    }

    /// Executes and scores `code`, appending it to the run.
    pub fn add_solution(
        &mut self,
        code: String,
        lineage: Option<(SolutionId, DirectionId)>,
    ) -> Result<SolutionId, StrategyError> {
        let result = self.verifier.execute(&code, &self.tests)?;
        let reward = verifier::reward(&result)?;
        let id = self.solutions.len() as SolutionId;
        if reward == 1.0 {
            self.solved = true;
        }
        self.solutions.push(CandidateSolution {
            solution_id: id,
            code,
            parent_id: lineage.map(|l| l.0),
            direction_id: lineage.map(|l| l.1),
            iteration_index: id,
            feedback: Some(result),
            reward: Some(reward),
        });
        Ok(id)
    }

    pub fn finish(self, method: Method, forest: Option<Forest>) -> Result<StrategyOutcome, StrategyError> {
        if self.solutions.is_empty() {
            return Err(StrategyError::NoSolutions(format!(
                "{} produced no candidates for {}",
                method, self.task.id
            )));
        }
        let submitted = select_final(&self.solutions)?.solution_id;
        let record = RunRecord {
            schema: RUN_RECORD_SCHEMA.to_string(),
            task_id: self.task.id.clone(),
            method,
            budget: self.cfg.budget,
            solutions: self.solutions,
            submitted,
            hidden_pass: None,
            generator_call_count: self.calls.total(),
        };
        record.validate()?;
        Ok(StrategyOutcome {
            run_record: record,
            forest_snapshot: forest,
            calls: self.calls,
            validation_tests: self.tests,
        })
    }
}
