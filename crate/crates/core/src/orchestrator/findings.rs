use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::report::SourceCitation;

/// Coarse severity label extracted from a finding's summary.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum RiskLevel {
    #[default]
    Unknown,
    Low,
    Moderate,
    High,
    Spike,
}

impl RiskLevel {
    pub const ALL: [RiskLevel; 5] = [
        RiskLevel::Unknown,
        RiskLevel::Low,
        RiskLevel::Moderate,
        RiskLevel::High,
        RiskLevel::Spike,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RiskLevel::Unknown => "Unknown",
            RiskLevel::Low => "Low",
            RiskLevel::Moderate => "Moderate",
            RiskLevel::High => "High",
            RiskLevel::Spike => "Spike",
        }
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskSignal {
    pub level: RiskLevel,
    /// The sentence the level was read from; empty for `Unknown`.
    pub basis: String,
}

const SIGNAL_PHRASES: [(&str, RiskLevel); 5] = [
    ("low risk", RiskLevel::Low),
    ("moderate", RiskLevel::Moderate),
    ("high risk", RiskLevel::High),
    ("spike", RiskLevel::Spike),
    ("surge in mortality", RiskLevel::Spike),
];

/// Reads a risk signal out of free text.
///
/// Matching is ASCII case-insensitive. The phrase occurring earliest in the
/// text wins; phrases starting at the same offset are resolved in table order.
pub fn extract_risk_signal(text: &str) -> RiskSignal {
    // ASCII lowercasing keeps byte offsets aligned with `text`.
    let lowered = text.to_ascii_lowercase();
    let hit = SIGNAL_PHRASES
        .iter()
        .filter_map(|(phrase, level)| lowered.find(phrase).map(|at| (at, *level)))
        .min_by_key(|(at, _)| *at);
    match hit {
        Some((at, level)) => RiskSignal {
            level,
            basis: sentence_around(text, at),
        },
        None => RiskSignal::default(),
    }
}

/// Byte offsets just past each sentence end: a newline, or `.!?` followed by
/// whitespace or the end of text (so "869.7" does not split).
fn sentence_ends(text: &str) -> impl Iterator<Item = usize> + '_ {
    let bytes = text.as_bytes();
    bytes.iter().enumerate().filter_map(move |(i, &b)| {
        let next_is_space = bytes.get(i + 1).is_none_or(|n| n.is_ascii_whitespace());
        (b == b'\n' || (matches!(b, b'.' | b'!' | b'?') && next_is_space)).then_some(i + 1)
    })
}

fn sentence_around(text: &str, at: usize) -> String {
    let start = sentence_ends(text)
        .take_while(|&e| e <= at)
        .last()
        .unwrap_or(0);
    let end = sentence_ends(text).find(|&e| e > at).unwrap_or(text.len());
    let sentence = text[start..end].trim();
    let sentence = sentence.trim_start_matches(['-', '*', ' ']);
    sentence.trim().to_owned()
}

/// A sub-agent's answer to its subtask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentFinding {
    pub agent_id: String,
    /// Display role of the agent, used for section headings.
    pub role: String,
    pub summary: String,
    pub citations: Vec<SourceCitation>,
    pub risk_signal: RiskSignal,
    pub tool_calls_made: u32,
    /// Set when the agent failed or timed out.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl AgentFinding {
    pub fn is_degraded(&self) -> bool {
        self.failure.is_some()
    }

    pub fn degraded(
        agent_id: &str,
        role: &str,
        reason: &str,
        tool_calls_made: u32,
        elapsed: Duration,
    ) -> Self {
        Self {
            agent_id: agent_id.to_owned(),
            role: role.to_owned(),
            summary: format!("**Degraded:** {role} could not complete its task: {reason}."),
            citations: Vec::new(),
            risk_signal: RiskSignal::default(),
            tool_calls_made,
            failure: Some(reason.to_owned()),
            elapsed,
        }
    }
}
