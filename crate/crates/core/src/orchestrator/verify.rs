//! Rule-driven logic verification over sub-agent findings.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::findings::{AgentFinding, RiskLevel};

/// Two findings whose risk levels cannot both be right.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContradictionFlag {
    pub agent_a: String,
    pub agent_b: String,
    pub level_a: RiskLevel,
    pub level_b: RiskLevel,
    pub note: String,
}

/// Symmetric set of risk-level pairs treated as contradictory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictRelation {
    pairs: BTreeSet<(RiskLevel, RiskLevel)>,
}

impl ConflictRelation {
    pub fn new(pairs: impl IntoIterator<Item = (RiskLevel, RiskLevel)>) -> Self {
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            set.insert((a, b));
            set.insert((b, a));
        }
        Self { pairs: set }
    }

    pub fn conflicts(&self, a: RiskLevel, b: RiskLevel) -> bool {
        self.pairs.contains(&(a, b))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (RiskLevel, RiskLevel)> + '_ {
        self.pairs.iter().copied()
    }
}

impl Default for ConflictRelation {
    /// Low against High, and Low against Spike.
    ///
    /// `Unknown` is what a failed or silent agent reports, so it never
    /// contradicts anything by default.
    fn default() -> Self {
        Self::new([
            (RiskLevel::Low, RiskLevel::High),
            (RiskLevel::Low, RiskLevel::Spike),
        ])
    }
}

/// Flags every unordered pair of findings whose levels conflict.
///
/// Pairs are visited as `(i, j)` with `i < j` in finding order, so the output
/// is deterministic and follows the input order.
pub fn verify(findings: &[AgentFinding], relation: &ConflictRelation) -> Vec<ContradictionFlag> {
    let mut flags = Vec::new();
    for (i, a) in findings.iter().enumerate() {
        for b in &findings[i + 1..] {
            if a.agent_id == b.agent_id {
                continue;
            }
            let (la, lb) = (a.risk_signal.level, b.risk_signal.level);
            if relation.conflicts(la, lb) {
                flags.push(ContradictionFlag {
                    agent_a: a.agent_id.clone(),
                    agent_b: b.agent_id.clone(),
                    level_a: la,
                    level_b: lb,
                    note: conflict_note(a, b),
                });
            }
        }
    }
    flags
}

fn conflict_note(a: &AgentFinding, b: &AgentFinding) -> String {
    let mut note = format!(
        "{} reports {} while {} reports {}.",
        a.role, a.risk_signal.level, b.role, b.risk_signal.level
    );
    for f in [a, b] {
        if !f.risk_signal.basis.is_empty() {
            note.push_str(&format!(" {}: \"{}\"", f.role, f.risk_signal.basis));
        }
    }
    note
}
