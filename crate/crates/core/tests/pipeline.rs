use std::sync::Arc;

use aries_core::builtin;
use aries_core::events::{
    normalized_transcript, validate_sequence, CaptureSink, EventKind, EventSink, StreamEvent,
};
use aries_core::gateway::{Gateway, Script};
use aries_core::mock;
use aries_core::orchestrator::{Investigation, Orchestrator, RiskLevel};
use aries_core::report::{dedupe_sources, Origin, SourceCitation};

async fn run(orch: &Orchestrator, query: &str) -> (Investigation, Vec<StreamEvent>) {
    let sink = Arc::new(CaptureSink::new());
    let inv = orch
        .run_investigation(
            "golden",
            query,
            "s1",
            vec![sink.clone() as Arc<dyn EventSink>],
        )
        .await
        .unwrap();
    (inv, sink.events())
}

#[tokio::test]
async fn mock_run_matches_goldens() {
    let (inv, events) = run(&mock::orchestrator().unwrap(), mock::query()).await;
    validate_sequence(&events).unwrap();
    assert_eq!(
        normalized_transcript(&events),
        include_str!("golden/transcript.txt")
    );
    assert_eq!(
        inv.briefing.to_markdown(),
        include_str!("golden/briefing.md")
    );

    let levels: Vec<_> = inv.findings.iter().map(|f| f.risk_signal.level).collect();
    assert_eq!(
        levels,
        [RiskLevel::Unknown, RiskLevel::Spike, RiskLevel::Low]
    );
    assert_eq!(inv.flags.len(), 1);
    assert_eq!(events.last().unwrap().kind(), EventKind::SourcesListed);

    let headings: Vec<_> = inv
        .briefing
        .sections
        .iter()
        .map(|s| s.heading.as_str())
        .collect();
    assert_eq!(
        headings,
        [
            "Summary",
            "Senior Medical Scientist Findings",
            "CDC Data Analyst Findings",
            "WHO Intelligence Officer Findings",
            "Risk Assessment",
            "Sources"
        ]
    );
}

#[tokio::test]
async fn one_exchange_per_model_call() {
    let (inv, _) = run(&mock::orchestrator().unwrap(), mock::query()).await;
    let per_agent: u32 = inv.findings.iter().map(|f| f.tool_calls_made + 1).sum();
    assert_eq!(inv.exchanges.len() as u32, 2 + per_agent);
    assert_eq!(inv.exchanges.first().unwrap().role_tag, "manager");
    assert_eq!(inv.exchanges.last().unwrap().role_tag, "manager");
}

#[tokio::test]
async fn unparseable_decomposition_falls_back() {
    let mut raw: serde_json::Value =
        serde_json::from_str(include_str!("../data/mock/script.json")).unwrap();
    raw["manager"][0] = "mpox clade comparison".into();
    let orch = Orchestrator::new(
        builtin::roster(),
        mock::scenarios(),
        builtin::prompts(),
        mock::tools(),
        Gateway::scripted(Script::from_json(&raw.to_string()).unwrap()),
    )
    .unwrap();
    let (inv, events) = run(&orch, "mpox clade comparison").await;
    validate_sequence(&events).unwrap();
    assert_eq!(inv.plan.subtasks.len(), 3);
    assert!(inv
        .plan
        .subtasks
        .iter()
        .all(|s| s.instruction == "mpox clade comparison"));
    let thought = serde_json::to_value(events[0].payload()).unwrap();
    assert!(
        thought["text"]
            .as_str()
            .unwrap()
            .starts_with("Fallback plan"),
        "{thought}"
    );
}

#[test]
fn dedupe_twenty_with_six_repeats() {
    let mut citations: Vec<SourceCitation> = (0..14)
        .map(|i| {
            SourceCitation::new(
                format!("https://pubmed.ncbi.nlm.nih.gov/{i}/"),
                format!("t{i}"),
                Origin::PubMed,
            )
        })
        .collect();
    for i in [0, 3, 3, 7, 11, 13] {
        // same article, spelled differently
        let url = format!("HTTPS://PubMed.ncbi.nlm.nih.gov/{i}#abstract");
        citations.insert(
            2 * i as usize % citations.len(),
            SourceCitation::new(url, "dup", Origin::PubMed),
        );
    }
    assert_eq!(citations.len(), 20);
    let unique = dedupe_sources(citations);
    assert_eq!(unique.len(), 14);
}
