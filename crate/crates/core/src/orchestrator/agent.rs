//! The sub-agent tool-calling loop.

use std::fmt::Write as _;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde_json::Value;
use tokio::sync::mpsc::UnboundedSender;

use super::findings::{extract_risk_signal, AgentFinding};
use super::plan::{json_body, SubTask};
use super::profile::AgentProfile;
use super::prompts::PromptSet;
use crate::events::{EventPayload, FindingPayload, ToolCompletedPayload, ToolInvokedPayload};
use crate::gateway::{ChatMessage, GatewaySession};
use crate::report::dedupe_sources;
use crate::tools::{ToolError, ToolRegistry};

/// A tool request decoded from a model reply.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolCall {
    pub tool: String,
    pub arguments: Value,
}

/// A reply is a tool call when its JSON body is an object with a string `tool`.
pub fn parse_tool_call(reply: &str) -> Option<ToolCall> {
    let value: Value = serde_json::from_str(json_body(reply)?).ok()?;
    let tool = value.get("tool")?.as_str()?.to_owned();
    let arguments = match value.get("arguments") {
        None | Some(Value::Null) => Value::Object(Default::default()),
        Some(v) => v.clone(),
    };
    Some(ToolCall { tool, arguments })
}

pub(crate) type Draft = EventPayload;

/// Shared with the timeout wrapper so a cancelled run can close its open tool call.
#[derive(Default)]
pub(crate) struct RunState {
    pub open_tool: Mutex<Option<String>>,
    pub tool_calls: Mutex<u32>,
}

pub(crate) struct AgentRun<'a> {
    pub profile: &'a AgentProfile,
    pub subtask: &'a SubTask,
    pub tools: &'a ToolRegistry,
    pub gateway: &'a GatewaySession,
    pub prompts: &'a PromptSet,
    pub max_rounds: u32,
    pub tx: UnboundedSender<Draft>,
    pub state: Arc<RunState>,
}

impl AgentRun<'_> {
    fn send(&self, payload: Draft) {
        // the drain loop outlives every run, so a closed channel is a bug upstream
        let _ = self.tx.send(payload);
    }

    fn tool_listing(&self) -> String {
        let mut out = String::new();
        for id in &self.profile.tools {
            if let Some(tool) = self.tools.get(id) {
                let _ = writeln!(out, "- {id}: {}", tool.description());
            }
        }
        out
    }

    fn degraded(&self, reason: &str, started: Instant) -> AgentFinding {
        AgentFinding::degraded(
            &self.profile.agent_id,
            &self.profile.role,
            reason,
            *self.state.tool_calls.lock().unwrap(),
            started.elapsed(),
        )
    }

    pub async fn run(self) -> AgentFinding {
        let started = Instant::now();
        let p = self.profile;
        let listing = self.tool_listing();
        let vars = [
            ("role", p.role.as_str()),
            ("goal", p.goal.as_str()),
            ("backstory", p.backstory.as_str()),
            ("tools", listing.as_str()),
            ("instruction", self.subtask.instruction.as_str()),
        ];
        let (system, first) = match (
            self.prompts.agent.system.render(&vars),
            self.prompts.agent.user.render(&vars),
        ) {
            (Ok(s), Ok(u)) => (s, u),
            (Err(e), _) | (_, Err(e)) => return self.degraded(&e.to_string(), started),
        };
        let mut messages = vec![ChatMessage::user(first)];
        let mut citations = Vec::new();
        let mut round = 0;
        loop {
            let reply = match self
                .gateway
                .complete(&p.agent_id, &p.model, &system, &messages)
                .await
            {
                Ok(x) => x.response,
                Err(e) => return self.degraded(&format!("model call failed: {e}"), started),
            };
            let Some(call) = parse_tool_call(&reply) else {
                let summary = reply.trim().to_owned();
                return AgentFinding {
                    agent_id: p.agent_id.clone(),
                    role: p.role.clone(),
                    risk_signal: extract_risk_signal(&summary),
                    summary,
                    citations: dedupe_sources(citations),
                    tool_calls_made: *self.state.tool_calls.lock().unwrap(),
                    failure: None,
                    elapsed: started.elapsed(),
                };
            };
            if round >= self.max_rounds {
                return self.degraded(
                    &format!("tool-call budget of {} rounds exhausted", self.max_rounds),
                    started,
                );
            }
            round += 1;
            messages.push(ChatMessage::assistant(reply));
            let tool = match self.tools.get(&call.tool) {
                Some(t) if p.tools.contains(&call.tool) => t,
                _ => {
                    messages.push(ChatMessage::user(format!(
                        "Tool {} is not available to you. Available tools:\n{listing}",
                        call.tool
                    )));
                    continue;
                }
            };
            self.send(EventPayload::ToolInvoked(ToolInvokedPayload {
                tool: call.tool.clone(),
                arguments: call.arguments.clone(),
            }));
            *self.state.open_tool.lock().unwrap() = Some(call.tool.clone());
            *self.state.tool_calls.lock().unwrap() += 1;

            let mut result = tool.invoke(&call.arguments).await;
            if matches!(&result, Err(e) if e.is_transport()) {
                tracing::warn!(agent = %p.agent_id, tool = %call.tool, "retrying after transport error");
                result = tool.invoke(&call.arguments).await;
            }
            self.state.open_tool.lock().unwrap().take();
            match result {
                Ok(out) => {
                    self.send(EventPayload::ToolCompleted(ToolCompletedPayload {
                        tool: call.tool.clone(),
                        ok: true,
                        citations: out.citations.len(),
                        detail: format!("{} citation(s)", out.citations.len()),
                    }));
                    citations.extend(out.citations);
                    messages.push(ChatMessage::user(format!(
                        "Result from {}:\n{}",
                        call.tool, out.text
                    )));
                }
                Err(ToolError::InvalidArguments(m)) => {
                    self.send(EventPayload::ToolCompleted(ToolCompletedPayload {
                        tool: call.tool.clone(),
                        ok: false,
                        citations: 0,
                        detail: format!("invalid arguments: {m}"),
                    }));
                    messages.push(ChatMessage::user(format!(
                        "{} rejected the arguments: {m}",
                        call.tool
                    )));
                }
                Err(e) => {
                    self.send(EventPayload::ToolCompleted(ToolCompletedPayload {
                        tool: call.tool.clone(),
                        ok: false,
                        citations: 0,
                        detail: e.to_string(),
                    }));
                    return self.degraded(&format!("{} failed: {e}", call.tool), started);
                }
            }
        }
    }
}

pub(crate) fn finding_payload(f: &AgentFinding) -> EventPayload {
    EventPayload::FindingReceived(FindingPayload {
        role: f.role.clone(),
        summary: f.summary.clone(),
        risk_level: f.risk_signal.level,
        risk_basis: f.risk_signal.basis.clone(),
        citations: f.citations.clone(),
        tool_calls_made: f.tool_calls_made,
        degraded: f.is_degraded(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn tool_call_detection() {
        let c = parse_tool_call(
            "```json\n{\"tool\": \"who_dons\", \"arguments\": {\"keyword\": \"mpox\"}}\n```",
        )
        .unwrap();
        assert_eq!(c.tool, "who_dons");
        assert_eq!(c.arguments, json!({"keyword": "mpox"}));
        assert_eq!(
            parse_tool_call("{\"tool\": \"x\"}").unwrap().arguments,
            json!({})
        );
        assert!(parse_tool_call("Risk is low. No tool needed.").is_none());
        assert!(parse_tool_call("{\"answer\": 1}").is_none());
    }
}
