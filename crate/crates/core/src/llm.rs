//! HTTP clients for hosted chat-completion and embedding services.

use std::env;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value as Json};
use thiserror::Error;

pub const LLM_ENDPOINT_VAR: &str = "FLEX_LLM_ENDPOINT";
pub const LLM_KEY_VAR: &str = "FLEX_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("provider returned status {status} after {attempts} attempt(s)")]
    Status { status: u16, attempts: u32 },
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("malformed provider response: {0}")]
    Decode(String),
    #[error("provider not configured: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubled for each further attempt.
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, backoff: Duration::from_millis(500) }
    }
}

/// Something that turns a prompt into a completion.
pub trait Completion: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError>;
}

/// POSTs `body` as JSON, retrying on 429, 5xx and connection failures.
pub(crate) fn post_json(
    client: &reqwest::blocking::Client,
    url: &str,
    api_key: Option<&str>,
    body: &Json,
    retry: RetryPolicy,
) -> Result<Json, ProviderError> {
    let attempts = retry.max_attempts.max(1);
    let mut last = ProviderError::Transport { message: "no attempt made".into(), attempts: 0 };
    for attempt in 1..=attempts {
        if attempt > 1 {
            thread::sleep(retry.backoff * 2u32.saturating_pow(attempt - 2));
        }
        let mut req = client.post(url).json(body);
        if let Some(k) = api_key {
            req = req.bearer_auth(k);
        }
        match req.send() {
            Ok(resp) => {
                let status = resp.status();
                if status.is_success() {
                    return resp.json::<Json>().map_err(|e| ProviderError::Decode(e.to_string()));
                }
                last = ProviderError::Status { status: status.as_u16(), attempts: attempt };
                if !(status.is_server_error() || status.as_u16() == 429) {
                    return Err(last);
                }
                tracing::warn!(url, status = status.as_u16(), attempt, "provider request failed");
            }
            Err(e) => {
                tracing::warn!(url, error = %e, attempt, "provider request failed");
                last = ProviderError::Transport { message: e.to_string(), attempts: attempt };
            }
        }
    }
    Err(last)
}

pub(crate) fn http_client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder().timeout(Duration::from_secs(120)).build().expect("http client")
}

/// Chat-completions client: one user message per request.
pub struct ChatClient {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    temperature: f64,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl ChatClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>, retry: RetryPolicy) -> Self {
        ChatClient {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            temperature: 0.0,
            retry,
            client: http_client(),
        }
    }

    /// Reads the endpoint and key from `FLEX_LLM_ENDPOINT` / `FLEX_LLM_API_KEY`.
    pub fn from_env(model: impl Into<String>, retry: RetryPolicy) -> Result<Self, ProviderError> {
        let endpoint = env::var(LLM_ENDPOINT_VAR).map_err(|_| ProviderError::Config(format!("{LLM_ENDPOINT_VAR} is not set")))?;
        Ok(ChatClient::new(endpoint, model, env::var(LLM_KEY_VAR).ok(), retry))
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }
}

impl Completion for ChatClient {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        });
        let resp = post_json(&self.client, &self.endpoint, self.api_key.as_deref(), &body, self.retry)?;
        let choice = &resp["choices"][0];
        choice["message"]["content"]
            .as_str()
            .or_else(|| choice["text"].as_str())
            .map(str::to_owned)
            .ok_or_else(|| ProviderError::Decode("missing choices[0].message.content".into()))
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    fn fast() -> RetryPolicy {
        RetryPolicy { max_attempts: 3, backoff: Duration::from_millis(1) }
    }

    #[test]
    fn retries_then_succeeds() {
        let ok = r##"{"choices":[{"message":{"role":"assistant","content":"# question:foo"}}]}"##;
        let server = mock::serve(vec![(503, "{}".into()), (200, ok.into())]);
        let c = ChatClient::new(&server.url, "m", Some("k".into()), fast());
        assert_eq!(c.complete("p").unwrap(), "# question:foo");
        let reqs = server.requests.lock().unwrap();
        assert_eq!(reqs.len(), 2);
        assert!(reqs[1].contains("Bearer k"));
        assert!(reqs[1].contains("\"temperature\":0.0"));
        assert!(reqs[1].contains("\"role\":\"user\""));
    }

    #[test]
    fn gives_up_after_max_attempts() {
        let server = mock::serve(vec![(500, "{}".into()), (502, "{}".into()), (503, "{}".into())]);
        let c = ChatClient::new(&server.url, "m", None, fast());
        assert_eq!(c.complete("p").unwrap_err(), ProviderError::Status { status: 503, attempts: 3 });
    }

    #[test]
    fn client_errors_not_retried() {
        let server = mock::serve(vec![(401, "{}".into())]);
        let c = ChatClient::new(&server.url, "m", None, fast());
        assert_eq!(c.complete("p").unwrap_err(), ProviderError::Status { status: 401, attempts: 1 });
    }
}
