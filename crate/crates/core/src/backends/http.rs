//! Live chat-completion backend over HTTP.
//!
//! Both providers get the same single-user-message request; a small adapter
//! per provider maps it onto the wire shape and extracts the reply text.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{strip_marker, BackendError, CallCounter, TranslatorBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    /// `/v1/chat/completions` shape with a bearer token.
    #[default]
    OpenAi,
    /// `/v1/messages` shape with an `x-api-key` header.
    Anthropic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    pub provider: Provider,
    pub endpoint_url: String,
    pub model: String,
    pub temperature: f64,
    /// Name of the environment variable holding the credential. Empty means
    /// no credential is sent.
    pub api_key_env: String,
    pub rate_limit_seconds: f64,
    pub max_retries: u32,
    pub backoff_seconds: f64,
    pub request_timeout_seconds: f64,
    pub max_tokens: Option<u32>,
    pub stop: Option<Vec<String>>,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            provider: Provider::OpenAi,
            endpoint_url: String::new(),
            model: String::new(),
            temperature: 0.3,
            api_key_env: String::new(),
            rate_limit_seconds: 10.0,
            max_retries: 3,
            backoff_seconds: 1.0,
            request_timeout_seconds: 120.0,
            max_tokens: None,
            stop: None,
        }
    }
}

const ANTHROPIC_VERSION: &str = "2023-06-01";
const ANTHROPIC_DEFAULT_MAX_TOKENS: u32 = 4096;

/// Enforces a minimum delay between consecutive calls of every backend that
/// shares it. Waiting callers queue on the lock, so calls are serialized.
#[derive(Debug, Clone)]
pub struct RateLimiter {
    delay: Duration,
    last: Arc<Mutex<Option<Instant>>>,
}

impl RateLimiter {
    pub fn new(delay_seconds: f64) -> Self {
        RateLimiter {
            delay: Duration::from_secs_f64(delay_seconds.max(0.0)),
            last: Arc::new(Mutex::new(None)),
        }
    }

    pub fn delay(&self) -> Duration {
        self.delay
    }

    pub fn wait(&self) {
        let mut last = self.last.lock().unwrap();
        if let Some(prev) = *last {
            let ready = prev + self.delay;
            let now = Instant::now();
            if ready > now {
                std::thread::sleep(ready - now);
            }
        }
        *last = Some(Instant::now());
    }
}

pub struct HttpBackend {
    name: String,
    config: HttpConfig,
    agent: ureq::Agent,
    limiter: RateLimiter,
    calls: CallCounter,
}

enum Attempt {
    Done(String),
    Fatal(BackendError),
    Retry(String),
}

impl HttpBackend {
    pub fn new(name: impl Into<String>, config: HttpConfig, limiter: RateLimiter) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs_f64(config.request_timeout_seconds.max(0.001))))
            .build()
            .into();
        HttpBackend {
            name: name.into(),
            config,
            agent,
            limiter,
            calls: CallCounter::default(),
        }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn request_body(&self, prompt: &str) -> Value {
        let c = &self.config;
        let messages = json!([{ "role": "user", "content": prompt }]);
        match c.provider {
            Provider::OpenAi => {
                let mut body = json!({
                    "model": c.model,
                    "temperature": c.temperature,
                    "messages": messages,
                });
                if let Some(m) = c.max_tokens {
                    body["max_tokens"] = json!(m);
                }
                if let Some(s) = &c.stop {
                    body["stop"] = json!(s);
                }
                body
            }
            Provider::Anthropic => {
                let mut body = json!({
                    "model": c.model,
                    "temperature": c.temperature,
                    "max_tokens": c.max_tokens.unwrap_or(ANTHROPIC_DEFAULT_MAX_TOKENS),
                    "messages": messages,
                });
                if let Some(s) = &c.stop {
                    body["stop_sequences"] = json!(s);
                }
                body
            }
        }
    }

    fn extract(&self, body: &str) -> Result<String, BackendError> {
        let v: Value = serde_json::from_str(body)
            .map_err(|e| BackendError::MalformedResponse(format!("invalid JSON: {e}")))?;
        let text = match self.config.provider {
            Provider::OpenAi => v["choices"][0]["message"]["content"].as_str(),
            Provider::Anthropic => v["content"]
                .as_array()
                .and_then(|parts| parts.iter().find(|p| p["type"] == "text"))
                .and_then(|p| p["text"].as_str()),
        };
        text.map(str::to_string)
            .ok_or_else(|| BackendError::MalformedResponse("reply text not found in response".into()))
    }

    fn attempt(&self, body: &Value, key: Option<&str>) -> Attempt {
        let mut req = self
            .agent
            .post(&self.config.endpoint_url)
            .header("content-type", "application/json");
        if let Some(key) = key {
            req = match self.config.provider {
                Provider::OpenAi => req.header("authorization", &format!("Bearer {key}")),
                Provider::Anthropic => req
                    .header("x-api-key", key)
                    .header("anthropic-version", ANTHROPIC_VERSION),
            };
        } else if self.config.provider == Provider::Anthropic {
            req = req.header("anthropic-version", ANTHROPIC_VERSION);
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(format!("reading body: {e}")),
        };
        match status {
            200..=299 => match self.extract(&text) {
                Ok(t) => Attempt::Done(t),
                Err(e) => Attempt::Fatal(e),
            },
            401 | 403 => Attempt::Fatal(BackendError::AuthFailure(format!("HTTP {status}"))),
            408 | 429 | 500..=599 => Attempt::Retry(format!("HTTP {status}")),
            _ => Attempt::Fatal(BackendError::Transport(format!("HTTP {status}: {}", truncate(&text, 200)))),
        }
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl TranslatorBackend for HttpBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        self.calls.bump();
        let key = if self.config.api_key_env.is_empty() {
            None
        } else {
            match std::env::var(&self.config.api_key_env) {
                Ok(k) if !k.is_empty() => Some(k),
                _ => {
                    return Err(BackendError::AuthFailure(format!(
                        "environment variable {} is not set",
                        self.config.api_key_env
                    )))
                }
            }
        };
        let body = self.request_body(strip_marker(prompt));
        let mut last_error = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let backoff = self.config.backoff_seconds * f64::from(1u32 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_secs_f64(backoff.max(0.0)));
            }
            self.limiter.wait();
            match self.attempt(&body, key.as_deref()) {
                Attempt::Done(t) => return Ok(t),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(msg) => {
                    log::warn!("{}: transient failure ({msg}), attempt {}", self.name, attempt + 1);
                    last_error = msg;
                }
            }
        }
        Err(BackendError::Transport(format!(
            "{} attempts failed; last error: {last_error}",
            self.config.max_retries + 1
        )))
    }

    fn call_count(&self) -> u64 {
        self.calls.get()
    }
}
