//! Roster, prompts and scenarios shipped with the crate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::gateway::{Scenario, ScenarioSet};
use crate::orchestrator::{PromptSet, Roster};

const ROSTER: &str = include_str!("../data/roster.json");
const PROMPTS: &str = include_str!("../data/prompts.json");
const REFERENCE: &str = include_str!("../data/reference_outputs.json");
const SCENARIOS: [(&str, &str); 4] = [
    ("s1", include_str!("../data/scenarios/s1.json")),
    ("s2", include_str!("../data/scenarios/s2.json")),
    ("s3", include_str!("../data/scenarios/s3.json")),
    ("s4", include_str!("../data/scenarios/s4.json")),
];

pub fn roster() -> Roster {
    Roster::from_json(ROSTER).expect("bundled roster parses")
}

pub fn prompts() -> PromptSet {
    PromptSet::from_json(PROMPTS).expect("bundled prompts parse")
}

pub fn scenarios() -> ScenarioSet {
    ScenarioSet::new(
        SCENARIOS
            .iter()
            .map(|(id, text)| Scenario::from_json(id, text).expect("bundled scenario parses"))
            .collect(),
    )
}

/// Word and source counts published for each bundled scenario's live run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceOutput {
    pub words: usize,
    pub sources: usize,
}

pub fn reference_outputs() -> BTreeMap<String, ReferenceOutput> {
    serde_json::from_str(REFERENCE).expect("bundled reference outputs parse")
}
