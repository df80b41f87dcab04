//! Text embedding providers for the embedding-cosine similarity column.

use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use serde::Deserialize;
use thiserror::Error;

static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\w+").unwrap());

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding transport failure: {0}")]
    Transport(String),
    #[error("embedding endpoint returned {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed embedding response: {0}")]
    Malformed(String),
}

/// Maps text to a fixed-length real vector.
pub trait EmbeddingProvider: Send {
    /// Identifier recorded in reports (model and pooling, where relevant).
    fn name(&self) -> String;
    fn embed(&mut self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError>;
}

/// Signed feature hashing of `\w+` tokens. Deterministic, offline, and only
/// meant for tests and dry runs.
#[derive(Clone, Debug)]
pub struct HashingEmbedder {
    pub dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dim: 256 }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x100_0000_01b3)
    })
}

impl EmbeddingProvider for HashingEmbedder {
    fn name(&self) -> String {
        format!("hashing-{}", self.dim)
    }

    fn embed(&mut self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let dim = self.dim.max(1);
        Ok(texts
            .iter()
            .map(|t| {
                let mut v = vec![0.0; dim];
                for w in WORD.find_iter(t) {
                    let h = fnv1a(w.as_str().as_bytes());
                    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
                    v[(h % dim as u64) as usize] += sign;
                }
                v
            })
            .collect())
    }
}

/// Client for an OpenAI-style `/embeddings` endpoint.
pub struct HttpEmbedder {
    base_url: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct EmbeddingBody {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    index: usize,
    embedding: Vec<f64>,
}

/// Parses an `/embeddings` reply into vectors ordered by `index`.
pub fn parse_embedding_response(body: &str, expected: usize) -> Result<Vec<Vec<f64>>, EmbeddingError> {
    let parsed: EmbeddingBody = serde_json::from_str(body).map_err(|e| EmbeddingError::Malformed(e.to_string()))?;
    if parsed.data.len() != expected {
        return Err(EmbeddingError::Malformed(format!(
            "expected {expected} embeddings, got {}",
            parsed.data.len()
        )));
    }
    if expected == 0 {
        return Ok(Vec::new());
    }
    let mut out = vec![Vec::new(); expected];
    for item in parsed.data {
        let slot = out
            .get_mut(item.index)
            .ok_or_else(|| EmbeddingError::Malformed(format!("index {} out of range", item.index)))?;
        if !slot.is_empty() {
            return Err(EmbeddingError::Malformed(format!("duplicate index {}", item.index)));
        }
        if item.embedding.is_empty() || item.embedding.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::Malformed("empty or non-finite embedding".into()));
        }
        *slot = item.embedding;
    }
    let dim = out[0].len();
    if out.iter().any(|v| v.len() != dim) {
        return Err(EmbeddingError::Malformed("embeddings differ in length".into()));
    }
    Ok(out)
}

impl HttpEmbedder {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>, timeout_s: f64) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(timeout_s.max(0.001))))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key,
            agent,
        }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn name(&self) -> String {
        format!("http:{}", self.model)
    }

    fn embed(&mut self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = serde_json::json!({ "model": self.model, "input": texts }).to_string();
        let mut req = self
            .agent
            .post(format!("{}/embeddings", self.base_url))
            .header("Content-Type", "application/json");
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {k}"));
        }
        let mut resp = req.send(body).map_err(|e| EmbeddingError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| EmbeddingError::Transport(e.to_string()))?;
        if status != 200 {
            return Err(EmbeddingError::Status { status, body: text });
        }
        parse_embedding_response(&text, texts.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashing_is_deterministic() {
        let mut e = HashingEmbedder::default();
        let a = e.embed(&["def f(x): return x"]).unwrap();
        let b = e.embed(&["def f(x): return x"]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].len(), 256);
        assert!(a[0].iter().any(|x| *x != 0.0));
    }

    #[test]
    fn embedding_response_is_reordered() {
        let body = r#"{"data":[{"index":1,"embedding":[0.0,1.0]},{"index":0,"embedding":[1.0,0.0]}]}"#;
        let v = parse_embedding_response(body, 2).unwrap();
        assert_eq!(v[0], vec![1.0, 0.0]);
        assert_eq!(v[1], vec![0.0, 1.0]);
    }

    #[test]
    fn embedding_response_errors() {
        assert!(parse_embedding_response("{}", 1).is_err());
        assert!(parse_embedding_response(r#"{"data":[]}"#, 1).is_err());
        let dup = r#"{"data":[{"index":0,"embedding":[1.0]},{"index":0,"embedding":[1.0]}]}"#;
        assert!(parse_embedding_response(dup, 2).is_err());
        let ragged = r#"{"data":[{"index":0,"embedding":[1.0]},{"index":1,"embedding":[1.0,2.0]}]}"#;
        assert!(parse_embedding_response(ragged, 2).is_err());
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let mut e = HttpEmbedder::new("http://127.0.0.1:9", "m", None, 2.0);
        assert!(matches!(e.embed(&["x"]), Err(EmbeddingError::Transport(_))));
    }
}
