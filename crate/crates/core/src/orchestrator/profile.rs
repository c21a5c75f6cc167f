use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::gateway::{ConfigError, ModelConfig, Scenario};
use crate::tools::ToolRegistry;

/// Kind of evidence a subtask asks for, fixed by the agent's tool family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Clinical,
    Statistical,
    Regulatory,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Clinical => "Clinical",
            Category::Statistical => "Statistical",
            Category::Regulatory => "Regulatory",
        })
    }
}

fn default_model() -> ModelConfig {
    ModelConfig::new("gpt-4o", 0.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub agent_id: String,
    pub role: String,
    pub goal: String,
    pub backstory: String,
    /// Replaced by the scenario's entry when an investigation starts.
    #[serde(default = "default_model")]
    pub model: ModelConfig,
    #[serde(default)]
    pub tools: Vec<String>,
}

/// The manager plus its specialist sub-agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roster {
    pub manager: AgentProfile,
    pub agents: Vec<AgentProfile>,
}

impl Roster {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            origin: "roster".into(),
            reason: e.to_string(),
        })
    }

    /// Checks ids, persona text and that every tool is registered.
    pub fn validate(&self, tools: &ToolRegistry) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.agents.is_empty() {
            return invalid("roster has no agents".into());
        }
        let mut ids = HashSet::new();
        for p in std::iter::once(&self.manager).chain(&self.agents) {
            if p.agent_id.trim().is_empty() {
                return invalid("agent with empty agent_id".into());
            }
            if !ids.insert(p.agent_id.as_str()) {
                return invalid(format!("duplicate agent_id {}", p.agent_id));
            }
            if p.role.trim().is_empty() || p.goal.trim().is_empty() {
                return invalid(format!("agent {} needs a role and a goal", p.agent_id));
            }
            if let Some(t) = p.tools.iter().find(|t| !tools.contains(t)) {
                return invalid(format!("agent {} uses unregistered tool {t}", p.agent_id));
            }
        }
        if let Some(p) = self.agents.iter().find(|p| p.tools.is_empty()) {
            return invalid(format!("agent {} has no tools", p.agent_id));
        }
        Ok(())
    }

    pub fn agent(&self, agent_id: &str) -> Option<&AgentProfile> {
        self.agents.iter().find(|a| a.agent_id == agent_id)
    }

    pub fn position(&self, agent_id: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.agent_id == agent_id)
    }

    /// Copy with model configs taken from `scenario`; every agent must have one.
    pub fn bind(&self, scenario: &Scenario) -> Result<Self, ConfigError> {
        let mut bound = self.clone();
        bound.manager.model = scenario.manager.clone();
        for agent in &mut bound.agents {
            agent.model = scenario
                .agents
                .get(&agent.agent_id)
                .cloned()
                .ok_or_else(|| {
                    ConfigError::Invalid(format!(
                        "scenario {} has no model for agent {}",
                        scenario.id, agent.agent_id
                    ))
                })?;
        }
        Ok(bound)
    }

    /// Category of an agent's subtasks: that of its first tool.
    pub fn category_of(&self, agent: &AgentProfile, tools: &ToolRegistry) -> Option<Category> {
        agent
            .tools
            .first()
            .and_then(|t| tools.get(t))
            .map(|t| t.category())
    }
}

#[cfg(test)]
mod tests {
    use crate::builtin;

    #[test]
    fn builtin_roster_is_valid() {
        let tools = crate::mock::tools();
        let roster = builtin::roster();
        roster.validate(&tools).unwrap();
        let roles: Vec<_> = roster.agents.iter().map(|a| a.role.as_str()).collect();
        assert_eq!(
            roles,
            [
                "Senior Medical Scientist",
                "CDC Data Analyst",
                "WHO Intelligence Officer"
            ]
        );
    }

    #[test]
    fn rejects_bad_rosters() {
        let tools = crate::mock::tools();
        let mut r = builtin::roster();
        r.agents[1].agent_id = r.agents[0].agent_id.clone();
        assert!(r.validate(&tools).is_err());

        let mut r = builtin::roster();
        r.agents[0].tools = vec!["nope".into()];
        assert!(r.validate(&tools).is_err());

        let mut r = builtin::roster();
        r.agents[0].goal = " ".into();
        assert!(r.validate(&tools).is_err());

        let mut r = builtin::roster();
        r.agents.clear();
        assert!(r.validate(&tools).is_err());
    }

    #[test]
    fn binding_requires_every_agent() {
        let roster = builtin::roster();
        let mut scenario = builtin::scenarios().get("s2").unwrap().clone();
        let bound = roster.bind(&scenario).unwrap();
        assert_eq!(bound.manager.model.model_id, "gpt-5.1");
        assert!(bound.agents.iter().all(|a| a.model.model_id == "o3"));
        scenario.agents.remove("cdc_analyst");
        assert!(roster.bind(&scenario).is_err());
    }
}
