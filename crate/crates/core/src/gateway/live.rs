use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Completion, CompletionProvider, CompletionRequest, FinishReason, GatewayError};

/// Endpoint settings. The API key is read from the environment variable named
/// by `api_key_env`, never stored in config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    pub url: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            url: "https://api.openai.com/v1/completions".into(),
            model: "gpt-3.5-turbo-instruct".into(),
            api_key_env: "UALA_API_KEY".into(),
            timeout_secs: 60,
            max_in_flight: 4,
            max_attempts: 3,
            backoff_ms: 500,
        }
    }
}

impl LiveConfig {
    /// Overlay `UALA_LLM_URL` and `UALA_LLM_MODEL` when set.
    pub fn from_env(mut self) -> Self {
        if let Ok(url) = std::env::var("UALA_LLM_URL") {
            self.url = url;
        }
        if let Ok(model) = std::env::var("UALA_LLM_MODEL") {
            self.model = model;
        }
        self
    }
}

struct Permits {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Permits {
    fn acquire(&self) -> PermitGuard<'_> {
        let mut n = self.available.lock().unwrap();
        while *n == 0 {
            n = self.freed.wait(n).unwrap();
        }
        *n -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap() += 1;
        self.0.freed.notify_one();
    }
}

/// OpenAI-style `/v1/completions` client.
pub struct LiveProvider {
    config: LiveConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    permits: Permits,
}

enum Attempt {
    Retry(String),
    Fail(GatewayError),
}

impl LiveProvider {
    pub fn new(config: LiveConfig) -> Result<Self, GatewayError> {
        let api_key = std::env::var(&config.api_key_env).ok();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Transport { message: e.to_string(), attempts: 0 })?;
        let permits = Permits { available: Mutex::new(config.max_in_flight.max(1)), freed: Condvar::new() };
        Ok(Self { config, api_key, client, permits })
    }

    fn body(&self, req: &CompletionRequest) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "prompt": req.prompt,
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
            "n": 1,
        });
        if !req.stop.is_empty() {
            body["stop"] = json!(req.stop);
        }
        if req.want_logprobs {
            body["logprobs"] = json!(1);
        }
        body
    }

    fn attempt(&self, body: &Value, want_logprobs: bool) -> Result<Completion, Attempt> {
        let mut http = self.client.post(&self.config.url).json(body);
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(key);
        }
        let resp = http.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retry(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Attempt::Retry(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fail(GatewayError::Http { status: status.as_u16(), body: text }));
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Attempt::Fail(GatewayError::Format(format!("response is not JSON: {e}"))))?;
        parse_response(&value, want_logprobs).map_err(Attempt::Fail)
    }
}

/// Decode one `choices[0]` entry of a completions response.
pub(crate) fn parse_response(value: &Value, want_logprobs: bool) -> Result<Completion, GatewayError> {
    let choice = value
        .pointer("/choices/0")
        .ok_or_else(|| GatewayError::Format("response has no choices".into()))?;
    let text = choice.get("text").and_then(Value::as_str).unwrap_or_default().to_string();
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("stop") => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        _ => FinishReason::Other,
    };
    let logprobs = choice.get("logprobs").filter(|v| !v.is_null());
    let (tokens, token_logprobs) = match logprobs {
        Some(lp) => {
            let tokens: Option<Vec<String>> = lp
                .get("tokens")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(|t| t.as_str().map(str::to_string)).collect());
            let lps: Option<Vec<f64>> = lp
                .get("token_logprobs")
                .and_then(Value::as_array)
                .and_then(|a| a.iter().map(Value::as_f64).collect());
            match (tokens, lps) {
                (Some(t), Some(l)) if t.len() == l.len() => (t, l),
                _ if want_logprobs => {
                    return Err(GatewayError::Capability("endpoint returned malformed logprobs".into()))
                }
                _ => (Vec::new(), Vec::new()),
            }
        }
        None if want_logprobs => {
            return Err(GatewayError::Capability("endpoint did not return token logprobs".into()))
        }
        None => (Vec::new(), Vec::new()),
    };
    let output_token_count = if tokens.is_empty() {
        value.pointer("/usage/completion_tokens").and_then(Value::as_u64).unwrap_or(0)
    } else {
        tokens.len() as u64
    };
    Ok(Completion { text, tokens, token_logprobs, finish_reason, output_token_count })
}

impl CompletionProvider for LiveProvider {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        let body = self.body(req);
        let _permit = self.permits.acquire();
        let attempts = self.config.max_attempts.max(1);
        let mut last = String::new();
        for i in 0..attempts {
            if i > 0 {
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms << (i - 1)));
            }
            match self.attempt(&body, req.want_logprobs) {
                Ok(c) => return Ok(c),
                Err(Attempt::Fail(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    tracing::warn!(attempt = i + 1, error = %msg, "completion request failed");
                    last = msg;
                }
            }
        }
        Err(GatewayError::Transport { message: last, attempts })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_logprobs() {
        let v = json!({"choices":[{"text":" Paris","finish_reason":"stop",
            "logprobs":{"tokens":[" Paris"],"token_logprobs":[-0.01]}}]});
        let c = parse_response(&v, true).unwrap();
        assert_eq!(c.tokens, vec![" Paris"]);
        assert_eq!(c.output_token_count, 1);
    }

    #[test]
    fn missing_logprobs_is_capability_error() {
        let v = json!({"choices":[{"text":" Paris","finish_reason":"stop","logprobs":null}],
            "usage":{"completion_tokens":1}});
        assert!(matches!(parse_response(&v, true), Err(GatewayError::Capability(_))));
        assert_eq!(parse_response(&v, false).unwrap().output_token_count, 1);
    }
}
