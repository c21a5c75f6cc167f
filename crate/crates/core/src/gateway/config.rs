use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Temperature of models that ignore or forbid sampling overrides.
pub const FIXED_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Provider {
    #[default]
    OpenAICompatible,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model_id: String,
    pub temperature: f64,
    #[serde(default)]
    pub temperature_fixed: bool,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    #[serde(default)]
    pub provider: Provider,
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_OUTPUT_TOKENS
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {origin}: {reason}")]
    Parse { origin: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ModelConfig {
    pub fn new(model_id: impl Into<String>, temperature: f64) -> Self {
        Self {
            model_id: model_id.into(),
            temperature,
            temperature_fixed: false,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            provider: Provider::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.model_id.trim().is_empty() {
            return Err(ConfigError::Invalid("model_id is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ConfigError::Invalid(format!(
                "{}: temperature {} outside [0, 2]",
                self.model_id, self.temperature
            )));
        }
        if self.temperature_fixed && self.temperature != FIXED_TEMPERATURE {
            return Err(ConfigError::Invalid(format!(
                "{}: temperature is fixed at {FIXED_TEMPERATURE}, got {}",
                self.model_id, self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(ConfigError::Invalid(format!(
                "{}: max_output_tokens must be positive",
                self.model_id
            )));
        }
        Ok(())
    }

    /// Returns a copy with a new temperature, rejected for fixed-temperature models.
    pub fn with_temperature(&self, temperature: f64) -> Result<Self, ConfigError> {
        let next = Self {
            temperature,
            ..self.clone()
        };
        next.validate()?;
        Ok(next)
    }
}

/// A named manager + per-agent model configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub id: String,
    pub name: String,
    pub manager: ModelConfig,
    pub agents: BTreeMap<String, ModelConfig>,
}

impl Scenario {
    pub fn from_json(id: &str, text: &str) -> Result<Self, ConfigError> {
        let mut scenario: Scenario =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse {
                origin: format!("scenario {id}"),
                reason: e.to_string(),
            })?;
        if scenario.id.is_empty() {
            scenario.id = id.to_owned();
        }
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() {
            return Err(ConfigError::Invalid(format!(
                "scenario {} has no name",
                self.id
            )));
        }
        self.manager.validate()?;
        for config in self.agents.values() {
            config.validate()?;
        }
        Ok(())
    }

    /// Same scenario with every model's temperature replaced.
    pub fn with_temperature(&self, temperature: f64) -> Result<Self, ConfigError> {
        let mut next = self.clone();
        next.manager = self.manager.with_temperature(temperature)?;
        for config in next.agents.values_mut() {
            *config = config.with_temperature(temperature)?;
        }
        Ok(next)
    }

    /// Same scenario routed to the scripted provider.
    pub fn scripted(&self) -> Self {
        let mut next = self.clone();
        next.manager.provider = Provider::Scripted;
        for config in next.agents.values_mut() {
            config.provider = Provider::Scripted;
        }
        next
    }
}

/// Loads one scenario file; the id is the file stem unless the file sets one.
pub fn load_scenario(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default();
    Scenario::from_json(stem, &text)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioSet {
    scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    pub fn new(mut scenarios: Vec<Scenario>) -> Self {
        scenarios.sort_by(|a, b| a.id.cmp(&b.id));
        Self { scenarios }
    }

    /// Every `*.json` file in `dir`, ordered by id.
    pub fn load_dir(dir: &Path) -> Result<Self, ConfigError> {
        let entries = std::fs::read_dir(dir).map_err(|source| ConfigError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let mut scenarios = Vec::new();
        for entry in entries {
            let path = entry
                .map_err(|source| ConfigError::Io {
                    path: dir.display().to_string(),
                    source,
                })?
                .path();
            if path.extension().and_then(|e| e.to_str()) == Some("json") {
                scenarios.push(load_scenario(&path)?);
            }
        }
        Ok(Self::new(scenarios))
    }

    pub fn get(&self, id: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Scenario> {
        self.scenarios.iter()
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn temperature_range() {
        assert!(ModelConfig::new("m", 0.0).validate().is_ok());
        assert!(ModelConfig::new("m", 2.0).validate().is_ok());
        assert!(matches!(
            ModelConfig::new("m", 3.5).validate(),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            ModelConfig::new("m", -0.1).validate(),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn fixed_temperature_rejects_override() {
        let mut c = ModelConfig::new("o4-mini", 1.0);
        c.temperature_fixed = true;
        assert!(c.validate().is_ok());
        assert!(matches!(
            c.with_temperature(0.3),
            Err(ConfigError::Invalid(_))
        ));
        let json = r#"{"name":"x","manager":{"model_id":"m","temperature":0.3,"temperature_fixed":true},"agents":{}}"#;
        assert!(matches!(
            Scenario::from_json("x", json),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn defaults_fill_optional_fields() {
        let json = r#"{"name":"x","manager":{"model_id":"m","temperature":0.1},"agents":{"a":{"model_id":"n","temperature":0.2}}}"#;
        let s = Scenario::from_json("x", json).unwrap();
        assert_eq!(s.id, "x");
        assert_eq!(s.manager.max_output_tokens, DEFAULT_MAX_OUTPUT_TOKENS);
        assert!(!s.manager.temperature_fixed);
        assert_eq!(s.agents["a"].provider, Provider::OpenAICompatible);
        assert_eq!(s.scripted().agents["a"].provider, Provider::Scripted);
    }

    #[test]
    fn malformed_file_is_parse_error() {
        assert!(matches!(
            Scenario::from_json("x", "{"),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn directory_loading() {
        let dir = std::env::temp_dir().join(format!("aries-scen-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        assert!(ScenarioSet::load_dir(&dir).unwrap().is_empty());
        std::fs::write(
            dir.join("only.json"),
            r#"{"name":"Only","manager":{"model_id":"m","temperature":0.1},"agents":{}}"#,
        )
        .unwrap();
        std::fs::write(dir.join("notes.txt"), "ignored").unwrap();
        let set = ScenarioSet::load_dir(&dir).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.get("only").unwrap().name, "Only");
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
