//! Chat-completion gateway with per-agent model configuration.
//!
//! A [`Gateway`] is shared process-wide. Each investigation takes a fresh
//! [`GatewaySession`] from it, which owns the scripted-reply cursors and the
//! log of exchanges made during that session.

mod config;
mod openai;
mod scripted;

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    load_scenario, ConfigError, ModelConfig, Provider, Scenario, ScenarioSet,
    DEFAULT_MAX_OUTPUT_TOKENS, FIXED_TEMPERATURE,
};
pub use openai::OpenAiCompatible;
pub use scripted::{Script, ScriptedProvider};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    User,
    Assistant,
}

impl ChatRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ChatRole::User => "user",
            ChatRole::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub text: String,
}

impl ChatMessage {
    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: ChatRole::User,
            text: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: ChatRole::Assistant,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// One completed model call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub role_tag: String,
    pub model_id: String,
    pub system: String,
    pub messages: Vec<ChatMessage>,
    pub response: String,
    pub usage: Usage,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("provider rejected request with HTTP {status}: {body}")]
    ProviderRejected { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("script exhausted for role {role_tag} at call {index}")]
    ScriptExhausted { role_tag: String, index: usize },
    #[error("invalid model config: {0}")]
    ConfigInvalid(String),
}

#[derive(Debug, Clone, Default)]
pub struct Gateway {
    live: Option<OpenAiCompatible>,
    script: Option<Arc<Script>>,
}

impl Gateway {
    pub fn scripted(script: Script) -> Self {
        Self {
            live: None,
            script: Some(Arc::new(script)),
        }
    }

    pub fn live(client: OpenAiCompatible) -> Self {
        Self {
            live: Some(client),
            script: None,
        }
    }

    pub fn session(&self) -> GatewaySession {
        GatewaySession {
            live: self.live.clone(),
            scripted: self.script.clone().map(ScriptedProvider::new),
            log: Mutex::new(Vec::new()),
        }
    }
}

/// Gateway state scoped to one investigation.
#[derive(Debug)]
pub struct GatewaySession {
    live: Option<OpenAiCompatible>,
    scripted: Option<ScriptedProvider>,
    log: Mutex<Vec<ChatExchange>>,
}

fn rough_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

impl GatewaySession {
    /// Sends `system` + `messages` to the provider named by `config`.
    ///
    /// `role_tag` identifies the calling agent; the scripted provider keys its
    /// replies on it.
    pub async fn complete(
        &self,
        role_tag: &str,
        config: &ModelConfig,
        system: &str,
        messages: &[ChatMessage],
    ) -> Result<ChatExchange, GatewayError> {
        config
            .validate()
            .map_err(|e| GatewayError::ConfigInvalid(e.to_string()))?;
        if messages.is_empty() {
            return Err(GatewayError::ConfigInvalid("no messages to send".into()));
        }
        let (response, usage) = match config.provider {
            Provider::Scripted => {
                let provider = self
                    .scripted
                    .as_ref()
                    .ok_or_else(|| GatewayError::ConfigInvalid("no script loaded".into()))?;
                let response = provider.next_reply(role_tag)?;
                let prompt = rough_tokens(system)
                    + messages.iter().map(|m| rough_tokens(&m.text)).sum::<u64>();
                let usage = Usage {
                    prompt_tokens: prompt,
                    completion_tokens: rough_tokens(&response),
                };
                (response, usage)
            }
            Provider::OpenAICompatible => {
                let client = self.live.as_ref().ok_or_else(|| {
                    GatewayError::ConfigInvalid("no live provider configured".into())
                })?;
                client.complete(config, system, messages).await?
            }
        };
        let exchange = ChatExchange {
            role_tag: role_tag.to_owned(),
            model_id: config.model_id.clone(),
            system: system.to_owned(),
            messages: messages.to_vec(),
            response,
            usage,
        };
        self.log
            .lock()
            .expect("exchange log poisoned")
            .push(exchange.clone());
        Ok(exchange)
    }

    pub fn exchanges(&self) -> Vec<ChatExchange> {
        self.log.lock().expect("exchange log poisoned").clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scripted_config() -> ModelConfig {
        ModelConfig {
            provider: Provider::Scripted,
            ..ModelConfig::new("gpt-4o", 0.1)
        }
    }

    #[tokio::test]
    async fn scripted_reply_is_exact_and_repeatable() {
        let gateway = Gateway::scripted(Script::from_pairs([("manager", vec!["plan text"])]));
        let mut seen = Vec::new();
        for _ in 0..2 {
            let session = gateway.session();
            let ex = session
                .complete(
                    "manager",
                    &scripted_config(),
                    "sys",
                    &[ChatMessage::user("q")],
                )
                .await
                .unwrap();
            assert_eq!(ex.response, "plan text");
            seen.push(ex);
        }
        assert_eq!(seen[0], seen[1]);
    }

    #[tokio::test]
    async fn exhausted_script_fails_loudly() {
        let session = Gateway::scripted(Script::default()).session();
        let err = session
            .complete(
                "manager",
                &scripted_config(),
                "sys",
                &[ChatMessage::user("q")],
            )
            .await
            .unwrap_err();
        assert_eq!(
            err,
            GatewayError::ScriptExhausted {
                role_tag: "manager".into(),
                index: 0
            }
        );
        assert!(session.exchanges().is_empty());
    }

    #[tokio::test]
    async fn invalid_config_and_empty_messages() {
        let session = Gateway::scripted(Script::from_pairs([("m", vec!["x"])])).session();
        let mut bad = scripted_config();
        bad.temperature_fixed = true;
        bad.temperature = 0.3;
        assert!(matches!(
            session
                .complete("m", &bad, "s", &[ChatMessage::user("q")])
                .await,
            Err(GatewayError::ConfigInvalid(_))
        ));
        assert!(matches!(
            session.complete("m", &scripted_config(), "s", &[]).await,
            Err(GatewayError::ConfigInvalid(_))
        ));
    }

    #[tokio::test]
    async fn live_config_without_client_is_invalid() {
        let session = Gateway::scripted(Script::default()).session();
        assert!(matches!(
            session
                .complete(
                    "m",
                    &ModelConfig::new("gpt-4o", 0.1),
                    "s",
                    &[ChatMessage::user("q")]
                )
                .await,
            Err(GatewayError::ConfigInvalid(_))
        ));
    }
}
