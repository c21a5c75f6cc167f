//! Offline mode: a scripted gateway plus recorded source responses.

use std::sync::Arc;

use crate::builtin;
use crate::cdc_wonder::{WonderClient, WonderConfig};
use crate::gateway::{Gateway, ScenarioSet, Script};
use crate::orchestrator::{Orchestrator, OrchestratorError};
use crate::pubmed::{convert_bioc_xml_to_json, PubMedClient, PubMedConfig};
use crate::tools::{CdcWonderTool, PubMedTool, ToolRegistry, WhoDonsTool};
use crate::transport::{FixtureReply, FixtureTransport, HttpTransport, Method};
use crate::who_dons::{DonsClient, DonsConfig};

const QUERY: &str = include_str!("../data/mock/query.txt");
const SCRIPT: &str = include_str!("../data/mock/script.json");
pub const DONS_JSON: &str = include_str!("../data/mock/dons.json");
pub const WONDER_XML: &str = include_str!("../data/mock/wonder_d76.xml");
pub const ESEARCH_JSON: &str = include_str!("../data/mock/esearch.json");

/// BioC XML for every article the mock search returns.
pub const BIOC_XML: [(&str, &str); 5] = [
    ("39100101", include_str!("../data/mock/bioc/39100101.xml")),
    ("39100102", include_str!("../data/mock/bioc/39100102.xml")),
    ("39100103", include_str!("../data/mock/bioc/39100103.xml")),
    ("39100104", include_str!("../data/mock/bioc/39100104.xml")),
    ("39100105", include_str!("../data/mock/bioc/39100105.xml")),
];

/// This article is served as XML to exercise the client's conversion path.
pub const XML_ONLY_ARTICLE: &str = "39100105";

/// The surveillance question the bundled script answers.
pub fn query() -> &'static str {
    QUERY.trim()
}

pub fn script() -> Script {
    Script::from_json(SCRIPT).expect("bundled script parses")
}

/// Prefix routes for every source request the scripted run makes.
pub fn transport() -> FixtureTransport {
    let dons = DonsConfig::default();
    let wonder = WonderConfig::default();
    let pubmed = PubMedConfig::default();
    let mut t = FixtureTransport::new()
        .route(
            Method::Get,
            dons.endpoint,
            FixtureReply::ok("application/json", DONS_JSON),
        )
        .route(
            Method::Post,
            &wonder.endpoints["D76"],
            FixtureReply::ok("application/xml", WONDER_XML),
        )
        .route(
            Method::Get,
            pubmed.esearch_url,
            FixtureReply::ok("application/json", ESEARCH_JSON),
        );
    for (id, xml) in BIOC_XML {
        let url = format!("{}/{id}/unicode", pubmed.bioc_json_url);
        let reply = if id == XML_ONLY_ARTICLE {
            FixtureReply::ok("application/xml", xml)
        } else {
            FixtureReply::ok(
                "application/json",
                convert_bioc_xml_to_json(xml).expect("bundled BioC converts"),
            )
        };
        t = t.route(Method::Get, url, reply);
    }
    t
}

/// Fixtures are local, so the NCBI ceiling would only slow tests down.
pub const FIXTURE_PUBMED_RATE: f64 = 1000.0;

/// The three source tools over `transport`, with default endpoints and no NCBI key.
pub fn tools_over(transport: Arc<dyn HttpTransport>) -> ToolRegistry {
    let pubmed = PubMedClient::with_key(transport.clone(), PubMedConfig::default(), None)
        .with_rate_limit(FIXTURE_PUBMED_RATE);
    ToolRegistry::new()
        .with(Arc::new(WhoDonsTool::new(DonsClient::new(
            transport.clone(),
            DonsConfig::default(),
        ))))
        .with(Arc::new(CdcWonderTool::new(WonderClient::new(
            transport,
            WonderConfig::default(),
        ))))
        .with(Arc::new(PubMedTool::new(pubmed)))
}

pub fn tools() -> ToolRegistry {
    tools_over(Arc::new(transport()))
}

/// Bundled scenarios rerouted to the scripted provider.
pub fn scenarios() -> ScenarioSet {
    ScenarioSet::new(builtin::scenarios().iter().map(|s| s.scripted()).collect())
}

/// A fully offline orchestrator over `transport`.
pub fn orchestrator_over(
    transport: Arc<dyn HttpTransport>,
) -> Result<Orchestrator, OrchestratorError> {
    Orchestrator::new(
        builtin::roster(),
        scenarios(),
        builtin::prompts(),
        tools_over(transport),
        Gateway::scripted(script()),
    )
}

pub fn orchestrator() -> Result<Orchestrator, OrchestratorError> {
    orchestrator_over(Arc::new(transport()))
}
