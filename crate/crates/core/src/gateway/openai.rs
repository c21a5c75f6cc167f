//! OpenAI-compatible `chat/completions` client.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{ChatMessage, GatewayError, ModelConfig, Usage};

#[derive(Debug, Clone)]
pub struct OpenAiCompatible {
    base_url: String,
    api_key: Option<String>,
    client: reqwest::Client,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

enum Attempt {
    Retryable(String),
    Fatal(GatewayError),
}

impl OpenAiCompatible {
    pub fn new(
        base_url: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, GatewayError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::ConfigInvalid(e.to_string()))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            api_key,
            client,
        })
    }

    fn request_body(
        config: &ModelConfig,
        system: &str,
        messages: &[ChatMessage],
    ) -> serde_json::Value {
        let mut wire = vec![json!({"role": "system", "content": system})];
        wire.extend(
            messages
                .iter()
                .map(|m| json!({"role": m.role.as_str(), "content": m.text})),
        );
        let mut body = json!({
            "model": config.model_id,
            "messages": wire,
            "max_completion_tokens": config.max_output_tokens,
        });
        // fixed-temperature models reject the parameter outright
        if !config.temperature_fixed {
            body["temperature"] = json!(config.temperature);
        }
        body
    }

    /// One request, retried once on connection failure or 5xx.
    pub async fn complete(
        &self,
        config: &ModelConfig,
        system: &str,
        messages: &[ChatMessage],
    ) -> Result<(String, Usage), GatewayError> {
        let body = Self::request_body(config, system, messages).to_string();
        let mut last = String::new();
        for _ in 0..2 {
            match self.attempt(&body).await {
                Ok(out) => return Ok(out),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable(reason)) => last = reason,
            }
        }
        Err(GatewayError::ProviderUnreachable(last))
    }

    async fn attempt(&self, body: &str) -> Result<(String, Usage), Attempt> {
        let mut request = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_owned());
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .await
            .map_err(|e| Attempt::Retryable(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .await
            .map_err(|e| Attempt::Retryable(e.to_string()))?;
        if status.is_server_error() {
            return Err(Attempt::Retryable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(GatewayError::ProviderRejected {
                status: status.as_u16(),
                body: text,
            }));
        }
        let parsed: CompletionResponse = serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(GatewayError::MalformedResponse(e.to_string())))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Attempt::Fatal(GatewayError::MalformedResponse("no choices".into())))?;
        let usage = parsed.usage.map_or_else(Usage::default, |u| Usage {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
        });
        Ok((content, usage))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_models_omit_temperature() {
        let mut c = ModelConfig::new("o4-mini", 1.0);
        c.temperature_fixed = true;
        let body = OpenAiCompatible::request_body(&c, "sys", &[ChatMessage::user("hi")]);
        assert!(body.get("temperature").is_none());
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "hi");

        let body = OpenAiCompatible::request_body(
            &ModelConfig::new("gpt-4o", 0.1),
            "sys",
            &[ChatMessage::user("hi")],
        );
        assert_eq!(body["temperature"], 0.1);
        assert_eq!(body["max_completion_tokens"], 4096);
    }
}
