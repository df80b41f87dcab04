//! The generation boundary. Every backend turns a [`GenerationRequest`] into
//! text; strategies never talk to a backend any other way.

pub mod openai;
pub mod prompts;
pub mod synthetic;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Outcome;

pub use openai::{OpenAiConfig, OpenAiGenerator};
pub use synthetic::{SyntheticGenerator, SyntheticLandscape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenerationKind {
    Seed,
    Directions,
    Solution,
    Insight,
    Tests,
}

impl GenerationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GenerationKind::Seed => "seed",
            GenerationKind::Directions => "directions",
            GenerationKind::Solution => "solution",
            GenerationKind::Insight => "insight",
            GenerationKind::Tests => "tests",
        }
    }
}

/// A prior attempt shown to the generator.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParentContext {
    pub code: String,
    pub feedback: String,
    pub reward: Option<f64>,
}

/// What happened when a direction was applied; the generator distills it
/// into an insight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reflection {
    pub direction: String,
    pub parent_reward: f64,
    pub child_reward: f64,
    pub outcome: Outcome,
    pub child_feedback: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationContext {
    pub prompt: String,
    pub entry_point: String,
    pub parents: Vec<ParentContext>,
    pub direction: Option<String>,
    pub insights: Vec<String>,
    pub theme: Option<String>,
    pub reflection: Option<Reflection>,
    /// Number of directions or tests requested.
    pub count: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            temperature: 0.8,
            max_tokens: 1024,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub kind: GenerationKind,
    pub context: GenerationContext,
    pub sampling: Sampling,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |m: &str| Err(GeneratorError::InvalidRequest(m.to_string()));
        let c = &self.context;
        if c.prompt.trim().is_empty() {
            return bad("prompt is empty");
        }
        if !(self.sampling.temperature.is_finite() && self.sampling.temperature >= 0.0) {
            return bad("temperature must be finite and non-negative");
        }
        if self.sampling.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        match self.kind {
            GenerationKind::Seed => {}
            GenerationKind::Solution => {
                if c.parents.is_empty() {
                    return bad("solution requests need at least one parent");
                }
                if c.direction.as_deref().is_some_and(|d| d.trim().is_empty()) {
                    return bad("direction text is empty");
                }
            }
            GenerationKind::Directions => {
                if c.parents.len() != 1 {
                    return bad("direction requests need exactly one parent");
                }
                if c.count.unwrap_or(0) == 0 {
                    return bad("direction requests need a positive count");
                }
            }
            GenerationKind::Insight => {
                if c.reflection.is_none() {
                    return bad("insight requests need a reflection");
                }
            }
            GenerationKind::Tests => {
                if c.count.unwrap_or(0) == 0 {
                    return bad("test requests need a positive count");
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    /// Cumulative log-probability of the whole completion.
    pub log_prob: Option<f64>,
    /// Per-token log-probabilities, when the backend reports them.
    pub token_log_probs: Option<Vec<(String, f64)>>,
    pub latency_s: f64,
}

impl GenerationResponse {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            log_prob: None,
            token_log_probs: None,
            latency_s: 0.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("empty completion")]
    EmptyCompletion,
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("missing configuration: {0}")]
    Config(String),
    #[error("script exhausted")]
    Exhausted,
}

impl GeneratorError {
    /// Whether repeating the same request may succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            GeneratorError::Transport(_) | GeneratorError::Timeout | GeneratorError::EmptyCompletion => true,
            GeneratorError::Status { status, .. } => *status == 429 || *status >= 500,
            GeneratorError::Malformed(_)
            | GeneratorError::InvalidRequest(_)
            | GeneratorError::Config(_)
            | GeneratorError::Exhausted => false,
        }
    }
}

pub trait Generator: Send {
    fn generate(&mut self, request: &GenerationRequest) -> Result<GenerationResponse, GeneratorError>;
}

impl<G: Generator + ?Sized> Generator for Box<G> {
    fn generate(&mut self, request: &GenerationRequest) -> Result<GenerationResponse, GeneratorError> {
        (**self).generate(request)
    }
}

/// Replays canned responses in order and records every request. Useful for
/// exercising strategies without a model.
#[derive(Debug, Default)]
pub struct ScriptedGenerator {
    script: VecDeque<Result<GenerationResponse, GeneratorError>>,
    requests: Vec<GenerationRequest>,
}

impl ScriptedGenerator {
    pub fn new(script: Vec<Result<GenerationResponse, GeneratorError>>) -> Self {
        Self {
            script: script.into(),
            requests: Vec::new(),
        }
    }

    pub fn push(&mut self, r: Result<GenerationResponse, GeneratorError>) {
        self.script.push_back(r);
    }

    pub fn requests(&self) -> &[GenerationRequest] {
        &self.requests
    }
}

impl Generator for ScriptedGenerator {
    fn generate(&mut self, request: &GenerationRequest) -> Result<GenerationResponse, GeneratorError> {
        self.requests.push(request.clone());
        self.script.pop_front().unwrap_or(Err(GeneratorError::Exhausted))
    }
}
