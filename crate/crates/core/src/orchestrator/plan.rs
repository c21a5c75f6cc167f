use std::collections::HashSet;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::profile::{Category, Roster};
use crate::tools::ToolRegistry;

/// One delegated piece of an investigation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubTask {
    pub agent_id: String,
    pub instruction: String,
    pub category: Category,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvestigationPlan {
    pub query_id: String,
    pub original_query: String,
    /// Always in roster order.
    pub subtasks: Vec<SubTask>,
    pub created_at: DateTime<Utc>,
}

/// What the manager's decomposition reply contained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub thought: String,
    pub intent: String,
    pub instructions: Vec<(String, String)>,
}

#[derive(Deserialize)]
struct RawDecomposition {
    #[serde(default)]
    thought: String,
    #[serde(default)]
    intent: String,
    subtasks: Vec<RawSubtask>,
}

#[derive(Deserialize)]
struct RawSubtask {
    agent_id: String,
    instruction: String,
}

/// Extracts the JSON object from a reply that may wrap it in a code fence or prose.
pub fn json_body(reply: &str) -> Option<&str> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    (end > start).then(|| &reply[start..=end])
}

/// Parses the manager's reply against the roster.
///
/// Unknown or repeated agents, blank instructions and an empty task list are
/// all treated as unparseable so the caller falls back as a whole.
pub fn parse_decomposition(reply: &str, roster: &Roster) -> Result<Decomposition, String> {
    let body = json_body(reply).ok_or("reply contains no JSON object")?;
    let raw: RawDecomposition = serde_json::from_str(body).map_err(|e| e.to_string())?;
    if raw.subtasks.is_empty() {
        return Err("no subtasks".into());
    }
    let mut seen = HashSet::new();
    let mut instructions = Vec::with_capacity(raw.subtasks.len());
    for st in raw.subtasks {
        if roster.agent(&st.agent_id).is_none() {
            return Err(format!("unknown agent {}", st.agent_id));
        }
        if !seen.insert(st.agent_id.clone()) {
            return Err(format!("agent {} tasked twice", st.agent_id));
        }
        if st.instruction.trim().is_empty() {
            return Err(format!("blank instruction for {}", st.agent_id));
        }
        instructions.push((st.agent_id, st.instruction.trim().to_owned()));
    }
    instructions.sort_by_key(|(id, _)| roster.position(id));
    Ok(Decomposition {
        thought: raw.thought.trim().to_owned(),
        intent: raw.intent.trim().to_owned(),
        instructions,
    })
}

/// Every agent gets the query verbatim.
pub fn fallback_instructions(query: &str, roster: &Roster) -> Vec<(String, String)> {
    roster
        .agents
        .iter()
        .map(|a| (a.agent_id.clone(), query.to_owned()))
        .collect()
}

pub fn build_plan(
    query_id: &str,
    query: &str,
    instructions: &[(String, String)],
    roster: &Roster,
    tools: &ToolRegistry,
    timeout: Duration,
    created_at: DateTime<Utc>,
) -> InvestigationPlan {
    let subtasks = instructions
        .iter()
        .filter_map(|(id, instruction)| {
            let agent = roster.agent(id)?;
            Some(SubTask {
                agent_id: id.clone(),
                instruction: instruction.clone(),
                // validated rosters always resolve
                category: roster.category_of(agent, tools)?,
                timeout,
            })
        })
        .collect();
    InvestigationPlan {
        query_id: query_id.to_owned(),
        original_query: query.to_owned(),
        subtasks,
        created_at,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    #[test]
    fn fenced_reply_in_roster_order() {
        let roster = builtin::roster();
        let reply = "```json\n{\"thought\":\"t\",\"intent\":\"i\",\"subtasks\":[\
            {\"agent_id\":\"who_officer\",\"instruction\":\"a\"},\
            {\"agent_id\":\"medical_scientist\",\"instruction\":\" b \"}]}\n```";
        let d = parse_decomposition(reply, &roster).unwrap();
        assert_eq!(
            d.instructions,
            [
                ("medical_scientist".to_owned(), "b".to_owned()),
                ("who_officer".to_owned(), "a".to_owned())
            ]
        );
    }

    #[test]
    fn rejects() {
        let roster = builtin::roster();
        for reply in [
            "no json here",
            "{\"subtasks\": []}",
            "{\"subtasks\": [{\"agent_id\": \"ghost\", \"instruction\": \"x\"}]}",
            "{\"subtasks\": [{\"agent_id\": \"cdc_analyst\", \"instruction\": \"\"}]}",
            "{\"subtasks\": [{\"agent_id\": \"cdc_analyst\", \"instruction\": \"x\"}, {\"agent_id\": \"cdc_analyst\", \"instruction\": \"y\"}]}",
        ] {
            assert!(parse_decomposition(reply, &roster).is_err(), "{reply}");
        }
    }

    #[test]
    fn plan_categories() {
        let roster = builtin::roster();
        let tools = crate::mock::tools();
        let plan = build_plan(
            "q",
            "mpox",
            &fallback_instructions("mpox", &roster),
            &roster,
            &tools,
            Duration::from_secs(60),
            chrono::DateTime::UNIX_EPOCH,
        );
        let cats: Vec<_> = plan.subtasks.iter().map(|s| s.category).collect();
        assert_eq!(
            cats,
            [
                Category::Clinical,
                Category::Statistical,
                Category::Regulatory
            ]
        );
        assert!(plan.subtasks.iter().all(|s| s.instruction == "mpox"));
    }
}
