//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use citss_core::client::TextGenerator;
use citss_core::config::ServiceConfig;
use citss_core::Error;
use serde_json::{json, Value};

pub struct ServiceClient {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    temperature: f64,
    max_tokens: usize,
}

impl ServiceClient {
    /// The API key is read from the environment variable the config names;
    /// an unset variable sends no `Authorization` header.
    pub fn from_config(cfg: &ServiceConfig) -> Self {
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::info!("{} is unset; requests carry no API key", cfg.api_key_env);
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        ServiceClient {
            agent,
            endpoint: cfg.endpoint.clone(),
            model: cfg.model.clone(),
            api_key,
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
        }
    }

    fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        })
    }
}

/// The reply text of a chat-completions (or plain completions) response.
pub fn reply_text(body: &Value) -> Option<&str> {
    let choice = body.get("choices")?.get(0)?;
    choice
        .get("message")
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .or_else(|| choice.get("text").and_then(Value::as_str))
}

impl TextGenerator for ServiceClient {
    fn generate(&self, prompt: &str) -> citss_core::Result<String> {
        let mut req = self.agent.post(&self.endpoint).content_type("application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send(self.request_body(prompt).to_string())
            .map_err(|e| Error::Service(format!("{}: {e}", self.endpoint)))?;
        let status = resp.status();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Service(format!("{}: reading body: {e}", self.endpoint)))?;
        if !status.is_success() {
            let snippet: String = text.chars().take(200).collect();
            return Err(Error::Service(format!("{}: HTTP {status}: {snippet}", self.endpoint)));
        }
        let body: Value = serde_json::from_str(&text)?;
        reply_text(&body)
            .map(str::to_string)
            .ok_or_else(|| Error::Service(format!("{}: response has no choices[0] text", self.endpoint)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chat_and_completion_shapes() {
        let chat = json!({"choices": [{"message": {"role": "assistant", "content": "[USES]"}}]});
        assert_eq!(reply_text(&chat), Some("[USES]"));
        let plain = json!({"choices": [{"text": "{}"}]});
        assert_eq!(reply_text(&plain), Some("{}"));
        assert_eq!(reply_text(&json!({"error": "x"})), None);
    }
}
