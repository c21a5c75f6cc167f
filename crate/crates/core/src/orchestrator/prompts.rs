use serde::{Deserialize, Serialize};

use crate::gateway::ConfigError;

/// A `{{name}}`-placeholder template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptTemplate(String);

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Self {
        Self(text.into())
    }

    pub fn placeholders(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let mut rest = self.0.as_str();
        while let Some(open) = rest.find("{{") {
            let Some(close) = rest[open..].find("}}") else {
                break;
            };
            out.push(rest[open + 2..open + close].trim());
            rest = &rest[open + close + 2..];
        }
        out
    }

    /// Substitutes every placeholder; a placeholder without a value is an error.
    pub fn render(&self, vars: &[(&str, &str)]) -> Result<String, ConfigError> {
        let mut out = String::with_capacity(self.0.len());
        let mut rest = self.0.as_str();
        while let Some(open) = rest.find("{{") {
            let Some(close) = rest[open..].find("}}") else {
                break;
            };
            out.push_str(&rest[..open]);
            let name = rest[open + 2..open + close].trim();
            let value = vars
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| {
                    ConfigError::Invalid(format!("prompt placeholder {{{{{name}}}}} has no value"))
                })?;
            out.push_str(value);
            rest = &rest[open + close + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    pub system: PromptTemplate,
    pub user: PromptTemplate,
}

/// Versioned prompt templates for the three kinds of model call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub version: String,
    pub decompose: PromptPair,
    pub agent: PromptPair,
    pub synthesis: PromptPair,
}

pub(crate) const DECOMPOSE_VARS: &[&str] = &[
    "manager_role",
    "manager_goal",
    "manager_backstory",
    "agents",
    "query",
];
pub(crate) const AGENT_VARS: &[&str] = &["role", "goal", "backstory", "tools", "instruction"];
pub(crate) const SYNTHESIS_VARS: &[&str] = &[
    "manager_role",
    "manager_goal",
    "manager_backstory",
    "query",
    "findings",
    "flags",
];

impl PromptSet {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let set: PromptSet = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            origin: "prompts".into(),
            reason: e.to_string(),
        })?;
        set.validate()?;
        Ok(set)
    }

    /// Rejects templates that use variables their call site never supplies.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let checks = [
            ("decompose", &self.decompose, DECOMPOSE_VARS),
            ("agent", &self.agent, AGENT_VARS),
            ("synthesis", &self.synthesis, SYNTHESIS_VARS),
        ];
        for (name, pair, allowed) in checks {
            for template in [&pair.system, &pair.user] {
                if let Some(bad) = template
                    .placeholders()
                    .into_iter()
                    .find(|p| !allowed.contains(p))
                {
                    return Err(ConfigError::Invalid(format!(
                        "{name} prompt uses unknown placeholder {bad}"
                    )));
                }
            }
        }
        if self.version.trim().is_empty() {
            return Err(ConfigError::Invalid("prompt set has no version".into()));
        }
        Ok(())
    }
}
