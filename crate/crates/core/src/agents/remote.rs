//! Client for OpenAI-style `/chat/completions` endpoints.

use std::path::Path;
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::EvidenceRecord;
use crate::error::{Error, Result};
use crate::ids::{AgentId, RoleId};
use crate::query::QueryItem;
use crate::similarity::parse_answer;

pub const HEAD_MAX_TOKENS: u32 = 64;
pub const SPECIALIST_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff_ms: 1000,
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let ms = self.initial_backoff_ms as f64 * self.multiplier.powi(retry as i32);
        Duration::from_millis(ms.min(u64::MAX as f64) as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteEndpoint {
    /// e.g. `http://localhost:8000/v1`; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_temperature() -> f64 {
    0.7
}
fn default_top_p() -> f64 {
    0.9
}
fn default_max_tokens() -> u32 {
    SPECIALIST_MAX_TOKENS
}
fn default_timeout() -> f64 {
    60.0
}

impl RemoteEndpoint {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: None,
            temperature: default_temperature(),
            top_p: default_top_p(),
            max_tokens: default_max_tokens(),
            timeout_secs: default_timeout(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_url.is_empty() || self.model.is_empty() {
            return Err(Error::Config("remote endpoint needs base_url and model".into()));
        }
        if self.retry.attempts == 0 {
            return Err(Error::Config("retry.attempts must be >= 1".into()));
        }
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(Error::Config("timeout_secs must be > 0".into()));
        }
        Ok(())
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Image reference as a chat content URL: remote URLs and data URIs pass
/// through, local files are inlined as base64.
pub fn image_url(image_ref: &str) -> Result<String> {
    if image_ref.starts_with("http://")
        || image_ref.starts_with("https://")
        || image_ref.starts_with("data:")
    {
        return Ok(image_ref.to_string());
    }
    let path = Path::new(image_ref);
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mime = match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        _ => "application/octet-stream",
    };
    let data = base64::engine::general_purpose::STANDARD.encode(bytes);
    Ok(format!("data:{mime};base64,{data}"))
}

pub fn request_body(
    endpoint: &RemoteEndpoint,
    system: &str,
    user: &str,
    image: Option<&str>,
    max_tokens: u32,
) -> Value {
    let user_content = match image {
        Some(url) => json!([
            {"type": "text", "text": user},
            {"type": "image_url", "image_url": {"url": url}},
        ]),
        None => json!(user),
    };
    json!({
        "model": endpoint.model,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": user_content},
        ],
        "temperature": endpoint.temperature,
        "top_p": endpoint.top_p,
        "max_tokens": max_tokens,
    })
}

fn reply_text(body: &Value) -> Option<String> {
    let content = body.pointer("/choices/0/message/content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        // Some servers return content parts.
        Value::Array(parts) => Some(
            parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect::<Vec<_>>()
                .join(""),
        ),
        _ => None,
    }
}

pub struct ChatClient {
    endpoint: RemoteEndpoint,
    http: reqwest::blocking::Client,
}

impl std::fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatClient")
            .field("endpoint", &self.endpoint)
            .finish_non_exhaustive()
    }
}

impl ChatClient {
    pub fn new(endpoint: RemoteEndpoint) -> Result<Self> {
        endpoint.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(endpoint.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(Self { endpoint, http })
    }

    pub fn endpoint(&self) -> &RemoteEndpoint {
        &self.endpoint
    }

    fn api_key(&self) -> Result<Option<String>> {
        match &self.endpoint.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| Error::Config(format!("environment variable {var} is not set"))),
        }
    }

    fn attempt(&self, body: &Value, key: Option<&str>) -> Result<String> {
        let mut req = self.http.post(self.endpoint.url()).json(body);
        if let Some(k) = key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(|e| Error::Transient(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Error::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(Error::Permanent(format!("HTTP {status}: {text}")));
        }
        let value: Value = resp
            .json()
            .map_err(|e| Error::Transient(format!("unreadable response body: {e}")))?;
        reply_text(&value)
            .ok_or_else(|| Error::Permanent(format!("response has no message content: {value}")))
    }

    /// One chat completion with retries on transient failures.
    pub fn complete(
        &self,
        system: &str,
        user: &str,
        image: Option<&str>,
        max_tokens: u32,
    ) -> Result<String> {
        let key = self.api_key()?;
        let body = request_body(&self.endpoint, system, user, image, max_tokens);
        let attempts = self.endpoint.retry.attempts.max(1);
        let mut last = None;
        for i in 0..attempts {
            if i > 0 {
                std::thread::sleep(self.endpoint.retry.backoff(i - 1));
            }
            match self.attempt(&body, key.as_deref()) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_transient() => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

/// Runs one specialist turn against a remote model.
///
/// Transport failures are returned as errors; an unparseable reply is a
/// record without an answer that keeps the raw text as its trace.
pub fn execute_remote(
    client: &ChatClient,
    agent: &AgentId,
    role: &RoleId,
    prompt: &str,
    query: &QueryItem,
) -> Result<EvidenceRecord> {
    let started = Instant::now();
    let image = query.image_ref.as_deref().map(image_url).transpose()?;
    let user = format!("Question : {}", query.display_text());
    let raw = client.complete(prompt, &user, image.as_deref(), client.endpoint.max_tokens)?;
    let parsed = parse_answer(&raw, query.answer_kind, query.options.as_deref());
    let error = parsed.as_ref().err().map(|e| e.to_string());
    Ok(EvidenceRecord {
        agent: agent.clone(),
        role: role.clone(),
        answer: parsed.ok(),
        trace: raw,
        latency_secs: started.elapsed().as_secs_f64(),
        error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoding_defaults() {
        let e = RemoteEndpoint::new("http://x/v1", "m");
        assert_eq!(e.temperature, 0.7);
        assert_eq!(e.top_p, 0.9);
        assert_eq!(e.max_tokens, 1024);
        assert_eq!(e.retry.attempts, 3);
        assert_eq!(e.retry.backoff(0), Duration::from_secs(1));
        assert_eq!(e.retry.backoff(2), Duration::from_secs(4));
    }

    #[test]
    fn body_shape_with_image() {
        let e = RemoteEndpoint::new("http://x/v1/", "m");
        assert_eq!(e.url(), "http://x/v1/chat/completions");
        let b = request_body(&e, "sys", "user", Some("https://img/a.png"), 64);
        assert_eq!(b["messages"][0]["role"], "system");
        assert_eq!(b["messages"][1]["content"][1]["image_url"]["url"], "https://img/a.png");
        assert_eq!(b["max_tokens"], 64);
        let b = request_body(&e, "sys", "user", None, 64);
        assert_eq!(b["messages"][1]["content"], "user");
    }

    #[test]
    fn local_images_are_inlined() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.PNG");
        std::fs::write(&p, [1u8, 2, 3]).unwrap();
        let url = image_url(p.to_str().unwrap()).unwrap();
        assert_eq!(url, "data:image/png;base64,AQID");
        assert!(image_url("/definitely/not/here.png").is_err());
    }

    #[test]
    fn reply_content_forms() {
        let v = json!({"choices":[{"message":{"content":"Answer: (C)"}}]});
        assert_eq!(reply_text(&v).unwrap(), "Answer: (C)");
        let v = json!({"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]});
        assert_eq!(reply_text(&v).unwrap(), "ab");
        assert!(reply_text(&json!({})).is_none());
    }

    #[test]
    fn missing_key_variable_is_config_error() {
        let mut e = RemoteEndpoint::new("http://127.0.0.1:9/v1", "m");
        e.api_key_env = Some("TRUSTROUTE_TEST_UNSET_KEY_VARIABLE".into());
        let c = ChatClient::new(e).unwrap();
        assert!(matches!(c.complete("s", "u", None, 8), Err(Error::Config(_))));
    }
}
