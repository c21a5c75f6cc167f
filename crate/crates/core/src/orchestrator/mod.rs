//! Manager agent: decomposition, delegation, verification and synthesis.

mod agent;
mod findings;
mod plan;
mod profile;
mod prompts;
mod verify;

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Duration;

use futures::future::join_all;
use thiserror::Error;
use tokio::sync::mpsc;

pub use agent::{parse_tool_call, ToolCall};
pub use findings::{extract_risk_signal, AgentFinding, RiskLevel, RiskSignal};
pub use plan::{
    build_plan, fallback_instructions, json_body, parse_decomposition, Decomposition,
    InvestigationPlan, SubTask,
};
pub use profile::{AgentProfile, Category, Roster};
pub use prompts::{PromptPair, PromptSet, PromptTemplate};
pub use verify::{verify, ConflictRelation, ContradictionFlag};

use crate::events::{
    BriefingPayload, Clock, DelegationPayload, Emitter, EventError, EventPayload, EventSink,
    IntentPayload, SourcesPayload, SystemClock, ThoughtPayload, ToolCompletedPayload,
    VerificationPayload,
};
use crate::gateway::{
    ChatExchange, ChatMessage, ConfigError, Gateway, GatewaySession, Scenario, ScenarioSet,
};
use crate::report::{render_briefing, Briefing, Synthesis};
use crate::tools::ToolRegistry;
use agent::{finding_payload, AgentRun, RunState};

pub const DEFAULT_SUBTASK_TIMEOUT: Duration = Duration::from_secs(60);
pub const DEFAULT_MAX_TOOL_ROUNDS: u32 = 4;
pub const MANAGER_TAG: &str = "manager";

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("unknown scenario {0}")]
    UnknownScenario(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("event rejected: {0}")]
    Event(#[from] EventError),
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub subtask_timeout: Duration,
    pub max_tool_rounds: u32,
    pub conflicts: ConflictRelation,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            subtask_timeout: DEFAULT_SUBTASK_TIMEOUT,
            max_tool_rounds: DEFAULT_MAX_TOOL_ROUNDS,
            conflicts: ConflictRelation::default(),
        }
    }
}

/// Everything an investigation produced.
#[derive(Debug, Clone)]
pub struct Investigation {
    pub session_id: String,
    pub scenario_id: String,
    pub plan: InvestigationPlan,
    pub findings: Vec<AgentFinding>,
    pub flags: Vec<ContradictionFlag>,
    pub briefing: Briefing,
    pub exchanges: Vec<ChatExchange>,
}

/// Result of the decomposition stage.
#[derive(Debug, Clone)]
pub struct DecomposeOutcome {
    pub plan: InvestigationPlan,
    pub thought: String,
    pub intent: String,
    /// Why the fallback plan was used, if it was.
    pub fallback: Option<String>,
    /// Set when the manager model could not be reached at all.
    pub gateway_failure: Option<String>,
}

pub struct Orchestrator {
    roster: Roster,
    scenarios: ScenarioSet,
    prompts: PromptSet,
    tools: ToolRegistry,
    gateway: Gateway,
    settings: Settings,
    clock: Arc<dyn Clock>,
}

impl Orchestrator {
    pub fn new(
        roster: Roster,
        scenarios: ScenarioSet,
        prompts: PromptSet,
        tools: ToolRegistry,
        gateway: Gateway,
    ) -> Result<Self, OrchestratorError> {
        roster.validate(&tools)?;
        prompts.validate()?;
        for scenario in scenarios.iter() {
            scenario.validate()?;
            roster.bind(scenario)?;
        }
        Ok(Self {
            roster,
            scenarios,
            prompts,
            tools,
            gateway,
            settings: Settings::default(),
            clock: Arc::new(SystemClock),
        })
    }

    pub fn with_settings(mut self, settings: Settings) -> Self {
        self.settings = settings;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn scenarios(&self) -> &ScenarioSet {
        &self.scenarios
    }

    pub fn roster(&self) -> &Roster {
        &self.roster
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    /// Binds a scenario and opens a fresh gateway session and event stream.
    pub fn session(
        &self,
        session_id: &str,
        scenario_id: &str,
        sinks: Vec<Arc<dyn EventSink>>,
    ) -> Result<InvestigationSession<'_>, OrchestratorError> {
        let scenario = self
            .scenarios
            .get(scenario_id)
            .ok_or_else(|| OrchestratorError::UnknownScenario(scenario_id.to_owned()))?;
        Ok(InvestigationSession {
            orchestrator: self,
            scenario,
            roster: self.roster.bind(scenario)?,
            gateway: self.gateway.session(),
            emitter: Emitter::new(session_id, sinks, self.clock.clone()),
        })
    }

    /// Runs the whole pipeline, streaming events to `sinks`.
    pub async fn run_investigation(
        &self,
        session_id: &str,
        query: &str,
        scenario_id: &str,
        sinks: Vec<Arc<dyn EventSink>>,
    ) -> Result<Investigation, OrchestratorError> {
        let query = query.trim();
        if query.is_empty() {
            return Err(OrchestratorError::EmptyQuery);
        }
        let session = self.session(session_id, scenario_id, sinks)?;
        session.run(query).await
    }
}

/// One investigation in progress.
pub struct InvestigationSession<'a> {
    orchestrator: &'a Orchestrator,
    scenario: &'a Scenario,
    roster: Roster,
    gateway: GatewaySession,
    emitter: Emitter,
}

impl InvestigationSession<'_> {
    pub fn gateway(&self) -> &GatewaySession {
        &self.gateway
    }

    pub fn roster(&self) -> &Roster {
        &self.roster
    }

    fn manager_vars<'b>(&'b self, extra: &[(&'b str, &'b str)]) -> Vec<(&'b str, &'b str)> {
        let m = &self.roster.manager;
        let mut vars = vec![
            ("manager_role", m.role.as_str()),
            ("manager_goal", m.goal.as_str()),
            ("manager_backstory", m.backstory.as_str()),
        ];
        vars.extend_from_slice(extra);
        vars
    }

    /// Asks the manager model for per-agent instructions, falling back to the
    /// query verbatim for every agent when the reply is unusable.
    pub async fn decompose(&self, query: &str) -> Result<DecomposeOutcome, OrchestratorError> {
        let o = self.orchestrator;
        let mut agents = String::new();
        for a in &self.roster.agents {
            let _ = writeln!(
                agents,
                "- {} ({}): {} Tools: {}",
                a.agent_id,
                a.role,
                a.goal,
                a.tools.join(", ")
            );
        }
        let vars = self.manager_vars(&[("agents", agents.as_str()), ("query", query)]);
        let system = o.prompts.decompose.system.render(&vars)?;
        let user = o.prompts.decompose.user.render(&vars)?;
        let reply = self
            .gateway
            .complete(
                MANAGER_TAG,
                &self.roster.manager.model,
                &system,
                &[ChatMessage::user(user)],
            )
            .await;

        let (decomposition, fallback, gateway_failure) = match reply {
            Ok(x) => match parse_decomposition(&x.response, &self.roster) {
                Ok(d) => (Some(d), None, None),
                Err(reason) => (
                    None,
                    Some(format!("the decomposition could not be parsed ({reason})")),
                    None,
                ),
            },
            Err(e) => (
                None,
                Some(format!("the manager model was unavailable ({e})")),
                Some(e.to_string()),
            ),
        };
        let (thought, intent, instructions) = match decomposition {
            Some(d) => {
                let thought = if d.thought.is_empty() {
                    format!(
                        "Decomposing the query into {} subtask(s).",
                        d.instructions.len()
                    )
                } else {
                    d.thought
                };
                let intent = if d.intent.is_empty() {
                    "Surveillance assessment".to_owned()
                } else {
                    d.intent
                };
                (thought, intent, d.instructions)
            }
            None => (
                format!(
                    "Fallback plan: {}. Every agent receives the original query.",
                    fallback.as_deref().unwrap_or_default()
                ),
                "Surveillance assessment".to_owned(),
                fallback_instructions(query, &self.roster),
            ),
        };
        let plan = build_plan(
            self.emitter.session_id(),
            query,
            &instructions,
            &self.roster,
            &o.tools,
            o.settings.subtask_timeout,
            self.emitter.now(),
        );
        Ok(DecomposeOutcome {
            plan,
            thought,
            intent,
            fallback,
            gateway_failure,
        })
    }

    /// Runs every subtask concurrently and emits their events in subtask order.
    pub async fn delegate(
        &self,
        plan: &InvestigationPlan,
    ) -> Result<Vec<AgentFinding>, OrchestratorError> {
        let o = self.orchestrator;
        for st in &plan.subtasks {
            let profile = self
                .roster
                .agent(&st.agent_id)
                .expect("plan built from roster");
            self.emitter.emit(
                Some(&st.agent_id),
                EventPayload::DelegationIssued(DelegationPayload {
                    role: profile.role.clone(),
                    category: st.category,
                    instruction: st.instruction.clone(),
                    timeout_secs: st.timeout.as_secs().max(1),
                }),
            )?;
        }

        let mut receivers = Vec::with_capacity(plan.subtasks.len());
        let mut runs = Vec::with_capacity(plan.subtasks.len());
        for st in &plan.subtasks {
            let (tx, rx) = mpsc::unbounded_channel();
            receivers.push((st.agent_id.clone(), rx));
            let profile = self
                .roster
                .agent(&st.agent_id)
                .expect("plan built from roster");
            let state = Arc::new(RunState::default());
            let run = AgentRun {
                profile,
                subtask: st,
                tools: &o.tools,
                gateway: &self.gateway,
                prompts: &o.prompts,
                max_rounds: o.settings.max_tool_rounds,
                tx: tx.clone(),
                state: state.clone(),
            };
            runs.push(async move {
                let started = std::time::Instant::now();
                let finding = match tokio::time::timeout(st.timeout, run.run()).await {
                    Ok(f) => f,
                    Err(_) => {
                        if let Some(tool) = state.open_tool.lock().unwrap().take() {
                            let _ = tx.send(EventPayload::ToolCompleted(ToolCompletedPayload {
                                tool,
                                ok: false,
                                citations: 0,
                                detail: "cancelled by subtask timeout".into(),
                            }));
                        }
                        AgentFinding::degraded(
                            &profile.agent_id,
                            &profile.role,
                            &format!("timed out after {}s", st.timeout.as_secs_f64()),
                            *state.tool_calls.lock().unwrap(),
                            started.elapsed(),
                        )
                    }
                };
                let _ = tx.send(finding_payload(&finding));
                finding
            });
        }

        let drain = async {
            for (agent_id, mut rx) in receivers {
                while let Some(payload) = rx.recv().await {
                    self.emitter.emit(Some(&agent_id), payload)?;
                }
            }
            Ok::<_, EventError>(())
        };
        let (findings, drained) = tokio::join!(join_all(runs), drain);
        drained?;
        Ok(findings)
    }

    /// Manager-written summary; degraded on model failure.
    pub async fn synthesize(
        &self,
        query: &str,
        findings: &[AgentFinding],
        flags: &[ContradictionFlag],
    ) -> Result<Briefing, OrchestratorError> {
        let o = self.orchestrator;
        let mut listed = String::new();
        for f in findings {
            let _ = writeln!(
                listed,
                "### {} (risk: {})\n{}\n",
                f.role, f.risk_signal.level, f.summary
            );
        }
        let mut noted = String::new();
        for f in flags {
            let _ = writeln!(noted, "- {}", f.note);
        }
        if flags.is_empty() {
            noted.push_str("None.");
        }
        let vars = self.manager_vars(&[
            ("query", query),
            ("findings", listed.as_str()),
            ("flags", noted.as_str()),
        ]);
        let system = o.prompts.synthesis.system.render(&vars)?;
        let user = o.prompts.synthesis.user.render(&vars)?;
        let synthesis = match self
            .gateway
            .complete(
                MANAGER_TAG,
                &self.roster.manager.model,
                &system,
                &[ChatMessage::user(user)],
            )
            .await
        {
            Ok(x) if !x.response.trim().is_empty() => Synthesis::Model(x.response),
            Ok(_) => Synthesis::Degraded {
                reason: "the manager model returned an empty synthesis".into(),
            },
            Err(e) => Synthesis::Degraded {
                reason: format!("the manager model was unavailable ({e})"),
            },
        };
        Ok(render_briefing(query, findings, flags, &synthesis))
    }

    pub async fn run(self, query: &str) -> Result<Investigation, OrchestratorError> {
        let o = self.orchestrator;
        let outcome = self.decompose(query).await?;
        self.emitter.emit(
            None,
            EventPayload::Thought(ThoughtPayload {
                text: outcome.thought.clone(),
            }),
        )?;
        self.emitter.emit(
            None,
            EventPayload::IntentIdentified(IntentPayload {
                intent: outcome.intent.clone(),
                agents: outcome
                    .plan
                    .subtasks
                    .iter()
                    .map(|s| s.agent_id.clone())
                    .collect(),
            }),
        )?;

        let findings = self.delegate(&outcome.plan).await?;
        let flags = verify(&findings, &o.settings.conflicts);

        if let Some(reason) = &outcome.gateway_failure {
            self.note(
                format!(
                    "Manager decomposition unavailable ({reason}); the fallback plan was used."
                ),
                None,
            )?;
        }
        for flag in &flags {
            self.note(flag.note.clone(), Some(flag.clone()))?;
        }
        if flags.is_empty() {
            self.note(
                format!(
                    "No contradictions detected across {} finding(s).",
                    findings.len()
                ),
                None,
            )?;
        }

        let briefing = self.synthesize(query, &findings, &flags).await?;
        self.emitter.emit(
            None,
            EventPayload::FinalBriefing(BriefingPayload {
                markdown: briefing.to_markdown(),
                degraded: briefing.degraded,
                metrics: briefing.metrics,
            }),
        )?;
        self.emitter.emit(
            None,
            EventPayload::SourcesListed(SourcesPayload {
                sources: briefing.sources.clone(),
            }),
        )?;

        Ok(Investigation {
            session_id: self.emitter.session_id().to_owned(),
            scenario_id: self.scenario.id.clone(),
            plan: outcome.plan,
            findings,
            flags,
            briefing,
            exchanges: self.gateway.exchanges(),
        })
    }

    fn note(&self, text: String, flag: Option<ContradictionFlag>) -> Result<(), OrchestratorError> {
        self.emitter.emit(
            None,
            EventPayload::VerificationNote(VerificationPayload { text, flag }),
        )?;
        Ok(())
    }
}
