//! Chat-completions client with inline PNG attachments.

use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, Policy, Turn};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteModelConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_in_flight: usize,
    /// First retry delay; doubles on every attempt.
    pub backoff_base_ms: u64,
}

impl Default for RemoteModelConfig {
    fn default() -> Self {
        RemoteModelConfig {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "default".into(),
            api_key_env: "BIMANUAL_API_KEY".into(),
            timeout_secs: 120.0,
            max_retries: 3,
            temperature: 0.0,
            max_tokens: 4096,
            max_in_flight: 4,
            backoff_base_ms: 500,
        }
    }
}

/// Counting semaphore shared by every client of one run.
#[derive(Debug)]
pub struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(n: usize) -> Self {
        Semaphore { free: Mutex::new(n), cv: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }

    pub fn available(&self) -> usize {
        *self.free.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemotePolicy {
    cfg: RemoteModelConfig,
    key: String,
    agent: ureq::Agent,
    limiter: Arc<Semaphore>,
}

impl fmt::Debug for RemotePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemotePolicy").field("cfg", &self.cfg).field("key", &"<redacted>").finish()
    }
}

enum Attempt {
    Done(String),
    Retry(BackendError),
    Fatal(BackendError),
}

impl RemotePolicy {
    /// Reads the key from the configured environment variable.
    pub fn new(cfg: RemoteModelConfig, limiter: Arc<Semaphore>) -> Result<Self, BackendError> {
        let key = std::env::var(&cfg.api_key_env).map_err(|_| BackendError::MissingCredential(cfg.api_key_env.clone()))?;
        Ok(Self::with_key(cfg, key, limiter))
    }

    pub fn with_key(cfg: RemoteModelConfig, key: String, limiter: Arc<Semaphore>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs.max(0.001))))
            .http_status_as_error(false)
            .build()
            .into();
        RemotePolicy { cfg, key, agent, limiter }
    }

    pub fn request_body(&self, text: &str, images: &[(String, Vec<u8>)]) -> Value {
        let mut content = vec![json!({"type": "text", "text": text})];
        for (_, png) in images {
            let b64 = base64::engine::general_purpose::STANDARD.encode(png);
            content.push(json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{b64}")}}));
        }
        json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
            "messages": [{"role": "user", "content": content}],
        })
    }

    fn attempt(&self, body: &[u8]) -> Attempt {
        let _permit = self.limiter.acquire();
        let res = self
            .agent
            .post(&self.cfg.endpoint)
            .header("Authorization", &format!("Bearer {}", self.key))
            .header("Content-Type", "application/json")
            .send(body);
        let mut resp = match res {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(BackendError::Timeout),
            Err(e) => return Attempt::Retry(BackendError::Transport(e.to_string())),
        };
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Attempt::Fatal(BackendError::AuthFailure(status)),
            429 => return Attempt::Retry(BackendError::RateLimited),
            500..=599 => return Attempt::Retry(BackendError::Http(status)),
            _ => return Attempt::Fatal(BackendError::Http(status)),
        }
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(BackendError::Timeout),
            Err(e) => return Attempt::Retry(BackendError::Transport(e.to_string())),
        };
        match extract_content(&text) {
            Some(c) => Attempt::Done(c),
            None => Attempt::Fatal(BackendError::BadResponse(text.chars().take(200).collect())),
        }
    }

    /// Sends one request, retrying transient failures with exponential
    /// backoff.
    pub fn complete(&self, text: &str, images: &[(String, Vec<u8>)]) -> Result<String, BackendError> {
        let body = serde_json::to_vec(&self.request_body(text, images)).expect("request serializes");
        let mut last = BackendError::Timeout;
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                let ms = self.cfg.backoff_base_ms.saturating_mul(1u64 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(ms));
            }
            match self.attempt(&body) {
                Attempt::Done(c) => return Ok(c),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) => last = e,
            }
        }
        Err(last)
    }
}

/// The assistant message text of a chat-completions response.
pub fn extract_content(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    let content = v.get("choices")?.get(0)?.get("message")?.get("content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => {
            let texts: Vec<&str> = parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect();
            Some(texts.concat())
        }
        _ => None,
    }
}

impl Policy for RemotePolicy {
    fn name(&self) -> String {
        format!("remote:{}", self.cfg.model)
    }

    fn needs_observations(&self) -> bool {
        true
    }

    fn propose(&mut self, turn: &Turn<'_>) -> Result<String, BackendError> {
        let images: Vec<(String, Vec<u8>)> = turn.observations.iter().map(|o| (o.name.clone(), o.png.clone())).collect();
        self.complete(&turn.prompt.text, &images)
    }
}
