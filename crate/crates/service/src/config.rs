use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use aries_core::builtin;
use aries_core::cdc_wonder::WonderConfig;
use aries_core::gateway::{ConfigError, Gateway, OpenAiCompatible, ScenarioSet};
use aries_core::mock;
use aries_core::orchestrator::{Orchestrator, PromptSet, Roster, Settings};
use aries_core::pubmed::PubMedConfig;
use aries_core::tools::standard_registry;
use aries_core::transport::ReqwestTransport;
use aries_core::who_dons::DonsConfig;

use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    /// OpenAI-compatible API root, without the `/chat/completions` suffix.
    pub base_url: String,
    /// Environment variable holding the API key. Keys never live in the file.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolsConfig {
    pub who_dons: DonsConfig,
    pub cdc_wonder: WonderConfig,
    pub pubmed: PubMedConfig,
    pub http_timeout_secs: u64,
}

impl Default for ToolsConfig {
    fn default() -> Self {
        Self {
            who_dons: DonsConfig::default(),
            cdc_wonder: WonderConfig::default(),
            pubmed: PubMedConfig::default(),
            http_timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub data_dir: PathBuf,
    /// Directory of scenario `*.json` files; the bundled s1-s4 when unset.
    pub scenario_dir: Option<PathBuf>,
    pub roster_path: Option<PathBuf>,
    pub prompts_path: Option<PathBuf>,
    pub provider: ProviderConfig,
    pub tools: ToolsConfig,
    /// Scripted gateway and recorded fixtures instead of live services.
    pub mock: bool,
    /// Delay added to every fixture reply in mock mode.
    pub mock_latency_ms: u64,
    pub subtask_timeout_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("aries-data"),
            scenario_dir: None,
            roster_path: None,
            prompts_path: None,
            provider: ProviderConfig::default(),
            tools: ToolsConfig::default(),
            mock: false,
            mock_latency_ms: 0,
            subtask_timeout_secs: 60,
        }
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn env_key(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.trim().is_empty())
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = read(path)?;
        serde_json::from_str(&text).map_err(|e| {
            ServiceError::Config(ConfigError::Parse {
                origin: path.display().to_string(),
                reason: e.to_string(),
            })
        })
    }

    pub fn scenarios(&self) -> Result<ScenarioSet, ConfigError> {
        let set = match &self.scenario_dir {
            Some(dir) => ScenarioSet::load_dir(dir)?,
            None => builtin::scenarios(),
        };
        Ok(if self.mock {
            ScenarioSet::new(set.iter().map(|s| s.scripted()).collect())
        } else {
            set
        })
    }

    /// Wires roster, prompts, scenarios, tools and gateway as configured.
    pub fn build_orchestrator(&self) -> Result<Orchestrator, ServiceError> {
        let roster = match &self.roster_path {
            Some(p) => Roster::from_json(&read(p)?)?,
            None => builtin::roster(),
        };
        let prompts = match &self.prompts_path {
            Some(p) => PromptSet::from_json(&read(p)?)?,
            None => builtin::prompts(),
        };
        let scenarios = self.scenarios()?;
        let (tools, gateway) = if self.mock {
            let transport =
                mock::transport().with_latency(Duration::from_millis(self.mock_latency_ms));
            (
                mock::tools_over(Arc::new(transport)),
                Gateway::scripted(mock::script()),
            )
        } else {
            let transport =
                ReqwestTransport::new(Duration::from_secs(self.tools.http_timeout_secs))
                    .map_err(|e| ServiceError::Startup(e.to_string()))?;
            let t = &self.tools;
            let tools = standard_registry(
                Arc::new(transport),
                t.who_dons.clone(),
                t.cdc_wonder.clone(),
                t.pubmed.clone(),
                env_key(&t.pubmed.api_key_env),
            );
            let client = OpenAiCompatible::new(
                &self.provider.base_url,
                env_key(&self.provider.api_key_env),
                Duration::from_secs(self.provider.timeout_secs),
            )
            .map_err(|e| ServiceError::Startup(e.to_string()))?;
            (tools, Gateway::live(client))
        };
        let settings = Settings {
            subtask_timeout: Duration::from_secs(self.subtask_timeout_secs.max(1)),
            ..Settings::default()
        };
        Ok(Orchestrator::new(roster, scenarios, prompts, tools, gateway)?.with_settings(settings))
    }
}
