//! OpenAI-compatible chat-completions backend.

use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{prompts, GenerationRequest, GenerationResponse, Generator, GeneratorError};

pub const API_KEY_ENV: &str = "SFS_API_KEY";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpenAiConfig {
    pub base_url: String,
    pub model: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// Ask the endpoint for token log-probabilities.
    pub logprobs: bool,
    pub max_in_flight: usize,
}

impl Default for OpenAiConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-3.5-turbo".into(),
            timeout_s: 60.0,
            max_retries: 2,
            logprobs: false,
            max_in_flight: 8,
        }
    }
}

/// Counting semaphore shared by every generator talking to one endpoint.
#[derive(Debug)]
pub struct InFlightLimit {
    max: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

impl InFlightLimit {
    pub fn new(max: usize) -> Arc<Self> {
        Arc::new(Self {
            max: max.max(1),
            used: Mutex::new(0),
            freed: Condvar::new(),
        })
    }

    fn acquire(self: &Arc<Self>) -> Permit {
        let mut used = self.used.lock().expect("limiter poisoned");
        while *used >= self.max {
            used = self.freed.wait(used).expect("limiter poisoned");
        }
        *used += 1;
        Permit(Arc::clone(self))
    }

    pub fn in_use(&self) -> usize {
        *self.used.lock().expect("limiter poisoned")
    }
}

struct Permit(Arc<InFlightLimit>);

impl Drop for Permit {
    fn drop(&mut self) {
        let mut used = self.0.used.lock().expect("limiter poisoned");
        *used -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    logprobs: bool,
}

/// Completion text and optional token log-probabilities of a chat response.
#[derive(Clone, Debug, PartialEq)]
pub struct ChatCompletion {
    pub text: String,
    pub tokens: Option<Vec<(String, f64)>>,
}

pub fn parse_chat_response(body: &str) -> Result<ChatCompletion, GeneratorError> {
    let v: Value = serde_json::from_str(body).map_err(|e| GeneratorError::Malformed(e.to_string()))?;
    let choice = v
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .ok_or_else(|| GeneratorError::Malformed("response has no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    if text.trim().is_empty() {
        return Err(GeneratorError::EmptyCompletion);
    }
    let tokens = choice
        .pointer("/logprobs/content")
        .and_then(Value::as_array)
        .map(|items| {
            items
                .iter()
                .filter_map(|t| Some((t.get("token")?.as_str()?.to_string(), t.get("logprob")?.as_f64()?)))
                .collect::<Vec<_>>()
        });
    Ok(ChatCompletion { text, tokens })
}

pub struct OpenAiGenerator {
    cfg: OpenAiConfig,
    api_key: String,
    agent: ureq::Agent,
    limit: Arc<InFlightLimit>,
}

impl OpenAiGenerator {
    pub fn new(cfg: OpenAiConfig, api_key: impl Into<String>, limit: Arc<InFlightLimit>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s.max(0.001))))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            cfg,
            api_key: api_key.into(),
            agent,
            limit,
        }
    }

    /// Reads the bearer token from `SFS_API_KEY`.
    pub fn from_env(cfg: OpenAiConfig, limit: Arc<InFlightLimit>) -> Result<Self, GeneratorError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| GeneratorError::Config(format!("{API_KEY_ENV} is not set")))?;
        Ok(Self::new(cfg, key, limit))
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'))
    }

    fn send_once(&self, body: &str) -> Result<String, GeneratorError> {
        let _permit = self.limit.acquire();
        let resp = self
            .agent
            .post(&self.endpoint())
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body);
        let mut resp = match resp {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(GeneratorError::Timeout),
            Err(e) => return Err(GeneratorError::Transport(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| GeneratorError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(GeneratorError::Status {
                status,
                body: text.chars().take(500).collect(),
            });
        }
        Ok(text)
    }
}

impl Generator for OpenAiGenerator {
    fn generate(&mut self, request: &GenerationRequest) -> Result<GenerationResponse, GeneratorError> {
        request.validate()?;
        let prompt = prompts::render(request.kind, &request.context)?;
        let body = ChatBody {
            model: &self.cfg.model,
            messages: vec![
                ChatMessage {
                    role: "system",
                    content: &prompt.system,
                },
                ChatMessage {
                    role: "user",
                    content: &prompt.user,
                },
            ],
            temperature: request.sampling.temperature,
            max_tokens: request.sampling.max_tokens,
            logprobs: self.cfg.logprobs,
        };
        let body = serde_json::to_string(&body).expect("chat body serializes");
        let started = Instant::now();
        let mut attempt = 0;
        loop {
            let outcome = self.send_once(&body).and_then(|b| parse_chat_response(&b));
            match outcome {
                Ok(c) => {
                    let log_prob = c.tokens.as_ref().map(|t| t.iter().map(|(_, lp)| lp).sum());
                    return Ok(GenerationResponse {
                        text: c.text,
                        log_prob,
                        token_log_probs: c.tokens,
                        latency_s: started.elapsed().as_secs_f64(),
                    });
                }
                Err(e) if e.is_retryable() && attempt < self.cfg.max_retries => {
                    tracing::warn!(error = %e, attempt, "chat request failed, retrying");
                    std::thread::sleep(Duration::from_millis(200 << attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}
