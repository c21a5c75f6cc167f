//! Typed session event stream, its grammar, and its SSE wire form.
//!
//! Every event serializes to one canonical JSON envelope with keys in the
//! order `session_id, seq, kind, agent_id, at, payload`. The same line is
//! used in SSE `data:` fields and in session log files.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::orchestrator::{Category, ContradictionFlag, RiskLevel};
use crate::report::{is_absolute_url, ReportMetrics, SourceCitation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Thought,
    IntentIdentified,
    DelegationIssued,
    ToolInvoked,
    ToolCompleted,
    FindingReceived,
    VerificationNote,
    FinalBriefing,
    SourcesListed,
    Error,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Thought => "Thought",
            EventKind::IntentIdentified => "IntentIdentified",
            EventKind::DelegationIssued => "DelegationIssued",
            EventKind::ToolInvoked => "ToolInvoked",
            EventKind::ToolCompleted => "ToolCompleted",
            EventKind::FindingReceived => "FindingReceived",
            EventKind::VerificationNote => "VerificationNote",
            EventKind::FinalBriefing => "FinalBriefing",
            EventKind::SourcesListed => "SourcesListed",
            EventKind::Error => "Error",
        }
    }

    fn is_per_agent(self) -> bool {
        matches!(
            self,
            EventKind::DelegationIssued
                | EventKind::ToolInvoked
                | EventKind::ToolCompleted
                | EventKind::FindingReceived
        )
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThoughtPayload {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentPayload {
    pub intent: String,
    /// Agents that will be tasked, in delegation order.
    pub agents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelegationPayload {
    pub role: String,
    pub category: Category,
    pub instruction: String,
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInvokedPayload {
    pub tool: String,
    pub arguments: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCompletedPayload {
    pub tool: String,
    pub ok: bool,
    pub citations: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingPayload {
    pub role: String,
    pub summary: String,
    pub risk_level: RiskLevel,
    pub risk_basis: String,
    pub citations: Vec<SourceCitation>,
    pub tool_calls_made: u32,
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationPayload {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<ContradictionFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BriefingPayload {
    pub markdown: String,
    pub degraded: bool,
    pub metrics: ReportMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcesPayload {
    pub sources: Vec<SourceCitation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub message: String,
}

/// Kind-specific event body. The variant determines the event kind.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum EventPayload {
    Thought(ThoughtPayload),
    IntentIdentified(IntentPayload),
    DelegationIssued(DelegationPayload),
    ToolInvoked(ToolInvokedPayload),
    ToolCompleted(ToolCompletedPayload),
    FindingReceived(FindingPayload),
    VerificationNote(VerificationPayload),
    FinalBriefing(BriefingPayload),
    SourcesListed(SourcesPayload),
    Error(ErrorPayload),
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            EventPayload::Thought(_) => EventKind::Thought,
            EventPayload::IntentIdentified(_) => EventKind::IntentIdentified,
            EventPayload::DelegationIssued(_) => EventKind::DelegationIssued,
            EventPayload::ToolInvoked(_) => EventKind::ToolInvoked,
            EventPayload::ToolCompleted(_) => EventKind::ToolCompleted,
            EventPayload::FindingReceived(_) => EventKind::FindingReceived,
            EventPayload::VerificationNote(_) => EventKind::VerificationNote,
            EventPayload::FinalBriefing(_) => EventKind::FinalBriefing,
            EventPayload::SourcesListed(_) => EventKind::SourcesListed,
            EventPayload::Error(_) => EventKind::Error,
        }
    }

    fn from_value(kind: EventKind, value: Value) -> Result<Self, serde_json::Error> {
        use serde_json::from_value as v;
        Ok(match kind {
            EventKind::Thought => EventPayload::Thought(v(value)?),
            EventKind::IntentIdentified => EventPayload::IntentIdentified(v(value)?),
            EventKind::DelegationIssued => EventPayload::DelegationIssued(v(value)?),
            EventKind::ToolInvoked => EventPayload::ToolInvoked(v(value)?),
            EventKind::ToolCompleted => EventPayload::ToolCompleted(v(value)?),
            EventKind::FindingReceived => EventPayload::FindingReceived(v(value)?),
            EventKind::VerificationNote => EventPayload::VerificationNote(v(value)?),
            EventKind::FinalBriefing => EventPayload::FinalBriefing(v(value)?),
            EventKind::SourcesListed => EventPayload::SourcesListed(v(value)?),
            EventKind::Error => EventPayload::Error(v(value)?),
        })
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EventError {
    #[error("{kind} event requires an agent_id")]
    MissingAgent { kind: EventKind },
    #[error("{kind} event must not carry an agent_id")]
    UnexpectedAgent { kind: EventKind },
    #[error("{kind} payload invalid: {reason}")]
    InvalidPayload { kind: EventKind, reason: String },
    #[error("malformed event line: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamEvent {
    session_id: String,
    seq: u64,
    agent_id: Option<String>,
    payload: EventPayload,
    at: DateTime<Utc>,
}

#[derive(Serialize)]
struct EnvelopeRef<'a> {
    session_id: &'a str,
    seq: u64,
    kind: EventKind,
    agent_id: Option<&'a str>,
    at: String,
    payload: &'a EventPayload,
}

#[derive(Deserialize)]
struct EnvelopeOwned {
    session_id: String,
    seq: u64,
    kind: EventKind,
    agent_id: Option<String>,
    at: DateTime<Utc>,
    payload: Value,
}

impl StreamEvent {
    /// Builds an event after checking the kind-specific payload rules.
    pub fn new(
        session_id: impl Into<String>,
        seq: u64,
        agent_id: Option<String>,
        payload: EventPayload,
        at: DateTime<Utc>,
    ) -> Result<Self, EventError> {
        let kind = payload.kind();
        match (&agent_id, kind.is_per_agent()) {
            (None, true) => return Err(EventError::MissingAgent { kind }),
            (Some(id), true) if id.trim().is_empty() => {
                return Err(EventError::MissingAgent { kind })
            }
            (Some(_), false) => return Err(EventError::UnexpectedAgent { kind }),
            _ => {}
        }
        let invalid = |reason: &str| EventError::InvalidPayload {
            kind,
            reason: reason.to_owned(),
        };
        match &payload {
            EventPayload::Thought(p) if p.text.trim().is_empty() => {
                return Err(invalid("empty text"))
            }
            EventPayload::IntentIdentified(p) if p.agents.is_empty() => {
                return Err(invalid("no agents"))
            }
            EventPayload::DelegationIssued(p) => {
                if p.instruction.trim().is_empty() {
                    return Err(invalid("empty instruction"));
                }
                if p.timeout_secs == 0 {
                    return Err(invalid("timeout must be positive"));
                }
            }
            EventPayload::ToolInvoked(_) | EventPayload::ToolCompleted(_)
                if p_tool(&payload).is_empty() =>
            {
                return Err(invalid("empty tool id"))
            }
            EventPayload::FindingReceived(p) => {
                check_citations(&p.citations).map_err(|r| invalid(&r))?
            }
            EventPayload::SourcesListed(p) => {
                check_citations(&p.sources).map_err(|r| invalid(&r))?
            }
            EventPayload::FinalBriefing(p) if p.markdown.trim().is_empty() => {
                return Err(invalid("empty briefing"))
            }
            _ => {}
        }
        Ok(Self {
            session_id: session_id.into(),
            seq,
            agent_id,
            payload,
            at,
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }

    pub fn agent_id(&self) -> Option<&str> {
        self.agent_id.as_deref()
    }

    pub fn payload(&self) -> &EventPayload {
        &self.payload
    }

    pub fn at(&self) -> DateTime<Utc> {
        self.at
    }

    /// Same event with the timestamp pinned to the Unix epoch.
    pub fn normalized(&self) -> Self {
        Self {
            at: epoch(),
            ..self.clone()
        }
    }

    /// Canonical single-line JSON envelope.
    pub fn to_json_line(&self) -> String {
        let envelope = EnvelopeRef {
            session_id: &self.session_id,
            seq: self.seq,
            kind: self.kind(),
            agent_id: self.agent_id.as_deref(),
            at: self.at.to_rfc3339_opts(SecondsFormat::Millis, true),
            payload: &self.payload,
        };
        serde_json::to_string(&envelope).expect("event envelope serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self, EventError> {
        let env: EnvelopeOwned =
            serde_json::from_str(line).map_err(|e| EventError::Malformed(e.to_string()))?;
        let payload = EventPayload::from_value(env.kind, env.payload)
            .map_err(|e| EventError::Malformed(format!("{} payload: {e}", env.kind)))?;
        Self::new(env.session_id, env.seq, env.agent_id, payload, env.at)
    }
}

fn p_tool(payload: &EventPayload) -> &str {
    match payload {
        EventPayload::ToolInvoked(p) => &p.tool,
        EventPayload::ToolCompleted(p) => &p.tool,
        _ => "",
    }
}

fn check_citations(citations: &[SourceCitation]) -> Result<(), String> {
    match citations.iter().find(|c| !is_absolute_url(&c.url)) {
        Some(c) => Err(format!("citation url not absolute: {}", c.url)),
        None => Ok(()),
    }
}

fn epoch() -> DateTime<Utc> {
    Utc.timestamp_opt(0, 0).single().expect("epoch is valid")
}

/// Server-sent event framing: `event`, `id`, one `data` line, blank line.
pub fn serialize_sse(event: &StreamEvent) -> String {
    format!(
        "event: {}\nid: {}\ndata: {}\n\n",
        event.kind(),
        event.seq(),
        event.to_json_line()
    )
}

/// Concatenated SSE frames with timestamps normalized.
pub fn normalized_transcript(events: &[StreamEvent]) -> String {
    events
        .iter()
        .map(|e| serialize_sse(&e.normalized()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("event {index}: {message}")]
pub struct SequenceViolation {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AgentPhase {
    Delegated,
    InTool,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Stage {
    Start,
    Thought,
    Intent,
    Verification,
    Briefing,
    Sources,
}

/// Checks one session's trace against the event grammar.
///
/// Accepted traces are: `Thought`, `IntentIdentified`, then for every agent
/// named by the intent a `DelegationIssued`, any number of
/// `ToolInvoked`/`ToolCompleted` pairs and one `FindingReceived` (agents may
/// interleave), then any `VerificationNote`s, `FinalBriefing`, and
/// `SourcesListed`. Sequence numbers must run 0, 1, 2, ... without gaps.
pub fn validate_sequence(events: &[StreamEvent]) -> Result<(), SequenceViolation> {
    let fail = |index: usize, message: String| Err(SequenceViolation { index, message });
    if events.is_empty() {
        return fail(0, "missing Thought".to_owned());
    }
    let session = events[0].session_id();
    let mut stage = Stage::Start;
    let mut expected: Vec<String> = Vec::new();
    let mut agents: HashMap<String, AgentPhase> = HashMap::new();
    let mut open_tool: HashMap<String, String> = HashMap::new();
    let mut delegated = 0usize;

    for (index, event) in events.iter().enumerate() {
        if event.seq() != index as u64 {
            return fail(
                index,
                format!("expected seq {index}, found {}", event.seq()),
            );
        }
        if event.session_id() != session {
            return fail(
                index,
                format!("session id changed to {}", event.session_id()),
            );
        }
        let kind = event.kind();
        match (stage, kind) {
            (Stage::Start, EventKind::Thought) => stage = Stage::Thought,
            (Stage::Start, _) => return fail(index, format!("missing Thought, found {kind}")),
            (Stage::Thought, EventKind::IntentIdentified) => {
                if let EventPayload::IntentIdentified(p) = event.payload() {
                    expected = p.agents.clone();
                }
                stage = Stage::Intent;
            }
            (Stage::Thought, _) => {
                return fail(index, format!("missing IntentIdentified, found {kind}"))
            }
            (Stage::Intent, EventKind::DelegationIssued) => {
                let agent = event.agent_id().unwrap_or_default().to_owned();
                if agents.contains_key(&agent) {
                    return fail(index, format!("agent {agent} delegated twice"));
                }
                if expected.get(delegated) != Some(&agent) {
                    return fail(index, format!("delegation to {agent} not announced in this position by IntentIdentified"));
                }
                delegated += 1;
                agents.insert(agent, AgentPhase::Delegated);
            }
            (
                Stage::Intent,
                EventKind::ToolInvoked | EventKind::ToolCompleted | EventKind::FindingReceived,
            ) => {
                let agent = event.agent_id().unwrap_or_default().to_owned();
                let Some(phase) = agents.get_mut(&agent) else {
                    return fail(index, format!("{kind} for undelegated agent {agent}"));
                };
                match (*phase, kind) {
                    (AgentPhase::Delegated, EventKind::ToolInvoked) => {
                        open_tool.insert(agent.clone(), p_tool(event.payload()).to_owned());
                        *phase = AgentPhase::InTool;
                    }
                    (AgentPhase::InTool, EventKind::ToolCompleted) => {
                        let opened = open_tool.remove(&agent).unwrap_or_default();
                        if opened != p_tool(event.payload()) {
                            return fail(
                                index,
                                format!(
                                    "ToolCompleted for {} but {opened} is open",
                                    p_tool(event.payload())
                                ),
                            );
                        }
                        *phase = AgentPhase::Delegated;
                    }
                    (AgentPhase::Delegated, EventKind::FindingReceived) => {
                        *phase = AgentPhase::Done
                    }
                    (AgentPhase::Done, _) => {
                        return fail(
                            index,
                            format!("{kind} for agent {agent} after its FindingReceived"),
                        )
                    }
                    (p, k) => {
                        return fail(
                            index,
                            format!("{k} not allowed for agent {agent} in phase {p:?}"),
                        )
                    }
                }
            }
            (
                Stage::Intent | Stage::Verification,
                EventKind::VerificationNote | EventKind::FinalBriefing,
            ) => {
                if stage == Stage::Intent {
                    if delegated == 0 {
                        return fail(index, format!("{kind} before any DelegationIssued"));
                    }
                    if delegated < expected.len() {
                        return fail(
                            index,
                            format!("{kind} before delegation to {}", expected[delegated]),
                        );
                    }
                    if let Some((agent, _)) = agents.iter().find(|(_, p)| **p != AgentPhase::Done) {
                        return fail(index, format!("{kind} before FindingReceived from {agent}"));
                    }
                }
                stage = if kind == EventKind::FinalBriefing {
                    Stage::Briefing
                } else {
                    Stage::Verification
                };
            }
            (Stage::Briefing, EventKind::SourcesListed) => stage = Stage::Sources,
            (Stage::Sources, _) => return fail(index, format!("{kind} after SourcesListed")),
            (s, k) => return fail(index, format!("{k} not allowed after {s:?} stage")),
        }
    }
    if stage != Stage::Sources {
        let missing = match stage {
            Stage::Thought => "IntentIdentified",
            Stage::Intent if delegated == 0 => "DelegationIssued",
            Stage::Intent | Stage::Verification => "FinalBriefing",
            _ => "SourcesListed",
        };
        return fail(events.len(), format!("trace ends early: missing {missing}"));
    }
    Ok(())
}

/// Receives every event of a session in sequence order.
pub trait EventSink: Send + Sync {
    fn accept(&self, event: &StreamEvent);
}

/// Keeps events in memory; the test and CLI sink.
#[derive(Debug, Default, Clone)]
pub struct CaptureSink {
    events: Arc<Mutex<Vec<StreamEvent>>>,
}

impl CaptureSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> Vec<StreamEvent> {
        self.events.lock().expect("capture sink poisoned").clone()
    }
}

impl EventSink for CaptureSink {
    fn accept(&self, event: &StreamEvent) {
        self.events
            .lock()
            .expect("capture sink poisoned")
            .push(event.clone());
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Assigns session sequence numbers and fans events out to sinks.
///
/// The sequence counter and the sink calls share one lock, so every sink
/// observes the same order and seq values have no gaps.
pub struct Emitter {
    session_id: String,
    next_seq: Mutex<u64>,
    sinks: Vec<Arc<dyn EventSink>>,
    clock: Arc<dyn Clock>,
}

impl Emitter {
    pub fn new(
        session_id: impl Into<String>,
        sinks: Vec<Arc<dyn EventSink>>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Self {
            session_id: session_id.into(),
            next_seq: Mutex::new(0),
            sinks,
            clock,
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub fn emit(
        &self,
        agent_id: Option<&str>,
        payload: EventPayload,
    ) -> Result<StreamEvent, EventError> {
        let mut next = self.next_seq.lock().expect("emitter poisoned");
        let event = StreamEvent::new(
            self.session_id.clone(),
            *next,
            agent_id.map(str::to_owned),
            payload,
            self.clock.now(),
        )?;
        *next += 1;
        for sink in &self.sinks {
            sink.accept(&event);
        }
        Ok(event)
    }

    pub fn emitted(&self) -> u64 {
        *self.next_seq.lock().expect("emitter poisoned")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn thought(seq: u64, text: &str) -> StreamEvent {
        StreamEvent::new(
            "s",
            seq,
            None,
            EventPayload::Thought(ThoughtPayload { text: text.into() }),
            epoch(),
        )
        .unwrap()
    }

    #[test]
    fn framing() {
        let sse = serialize_sse(&thought(0, "hello"));
        assert!(sse.starts_with("event: Thought\nid: 0\ndata: {"));
        assert!(sse.ends_with("}\n\n"));
        assert_eq!(sse.matches("\n\n").count(), 1);
    }

    #[test]
    fn newline_in_payload_stays_on_one_data_line() {
        let sse = serialize_sse(&thought(3, "line one\nline two\r\n"));
        assert_eq!(sse.lines().filter(|l| l.starts_with("data: ")).count(), 1);
        assert_eq!(sse.lines().count(), 4);
        assert!(sse.contains("line one\\nline two\\r\\n"));
    }

    #[test]
    fn envelope_key_order() {
        let line = thought(0, "x").to_json_line();
        assert_eq!(
            line,
            r#"{"session_id":"s","seq":0,"kind":"Thought","agent_id":null,"at":"1970-01-01T00:00:00.000Z","payload":{"text":"x"}}"#
        );
        assert_eq!(StreamEvent::from_json_line(&line).unwrap(), thought(0, "x"));
    }

    #[test]
    fn construction_rules() {
        let delegation = EventPayload::DelegationIssued(DelegationPayload {
            role: "r".into(),
            category: Category::Clinical,
            instruction: "do it".into(),
            timeout_secs: 60,
        });
        assert_eq!(
            StreamEvent::new("s", 0, None, delegation.clone(), epoch()),
            Err(EventError::MissingAgent {
                kind: EventKind::DelegationIssued
            })
        );
        assert!(StreamEvent::new("s", 0, Some("a".into()), delegation, epoch()).is_ok());
        let sources = EventPayload::SourcesListed(SourcesPayload {
            sources: vec![SourceCitation::new(
                "/relative",
                "t",
                crate::report::Origin::Who,
            )],
        });
        assert!(matches!(
            StreamEvent::new("s", 0, None, sources, epoch()),
            Err(EventError::InvalidPayload { .. })
        ));
        assert_eq!(
            StreamEvent::new(
                "s",
                0,
                Some("a".into()),
                EventPayload::Thought(ThoughtPayload { text: "t".into() }),
                epoch()
            ),
            Err(EventError::UnexpectedAgent {
                kind: EventKind::Thought
            })
        );
    }

    #[test]
    fn empty_trace_is_missing_thought() {
        let err = validate_sequence(&[]).unwrap_err();
        assert_eq!(err.index, 0);
        assert!(err.message.contains("missing Thought"));
    }

    #[test]
    fn seq_gap_is_rejected() {
        let err = validate_sequence(&[thought(1, "x")]).unwrap_err();
        assert_eq!(err.index, 0);
    }

    #[test]
    fn emitter_numbers_events_for_every_sink() {
        let a = CaptureSink::new();
        let b = CaptureSink::new();
        let emitter = Emitter::new(
            "s",
            vec![Arc::new(a.clone()), Arc::new(b.clone())],
            Arc::new(SystemClock),
        );
        for i in 0..3 {
            emitter
                .emit(
                    None,
                    EventPayload::Thought(ThoughtPayload {
                        text: format!("t{i}"),
                    }),
                )
                .unwrap();
        }
        let seqs: Vec<_> = a.events().iter().map(StreamEvent::seq).collect();
        assert_eq!(seqs, [0, 1, 2]);
        assert_eq!(a.events(), b.events());
        // a rejected payload does not consume a sequence number
        assert!(emitter
            .emit(
                None,
                EventPayload::Thought(ThoughtPayload { text: " ".into() })
            )
            .is_err());
        assert_eq!(emitter.emitted(), 3);
    }
}
