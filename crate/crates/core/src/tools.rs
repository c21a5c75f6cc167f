//! Tools that sub-agents invoke: one per data source.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use async_trait::async_trait;
use chrono::NaiveDate;
use serde_json::Value;
use thiserror::Error;

use crate::cdc_wonder::WonderConfig;
use crate::cdc_wonder::{summarize_table, WonderClient, WonderError, WonderRequest};
use crate::orchestrator::Category;
use crate::pubmed::PubMedConfig;
use crate::pubmed::{article_url, summarize_hits, truncate_words, PubMedClient, PubMedError};
use crate::report::{Origin, SourceCitation};
use crate::transport::{HttpTransport, TransportError};
use crate::who_dons::{DonsClient, DonsConfig, DonsError, DonsQuery};

pub const WHO_DONS: &str = "who_dons";
pub const CDC_WONDER: &str = "cdc_wonder";
pub const PUBMED_BIOC: &str = "pubmed_bioc";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolOutput {
    pub text: String,
    pub citations: Vec<SourceCitation>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ToolError {
    /// Connection-level failure; worth one retry.
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid arguments: {0}")]
    InvalidArguments(String),
    #[error("{0}")]
    Failed(String),
}

impl ToolError {
    pub fn is_transport(&self) -> bool {
        matches!(self, ToolError::Transport(_))
    }
}

impl From<TransportError> for ToolError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Connect { .. } => ToolError::Transport(e.to_string()),
            other => ToolError::Failed(other.to_string()),
        }
    }
}

#[async_trait]
pub trait Tool: Send + Sync {
    fn id(&self) -> &str;
    fn category(&self) -> Category;
    /// One line shown to the model, including the argument shape.
    fn description(&self) -> &str;
    async fn invoke(&self, arguments: &Value) -> Result<ToolOutput, ToolError>;
}

#[derive(Clone, Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, Arc<dyn Tool>>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, tool: Arc<dyn Tool>) {
        self.tools.insert(tool.id().to_owned(), tool);
    }

    pub fn with(mut self, tool: Arc<dyn Tool>) -> Self {
        self.register(tool);
        self
    }

    pub fn get(&self, id: &str) -> Option<&Arc<dyn Tool>> {
        self.tools.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.tools.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.tools.keys().map(String::as_str)
    }
}

/// Registry with the three data-source tools sharing one transport.
pub fn standard_registry(
    transport: Arc<dyn HttpTransport>,
    dons: DonsConfig,
    wonder: WonderConfig,
    pubmed: PubMedConfig,
    ncbi_api_key: Option<String>,
) -> ToolRegistry {
    ToolRegistry::new()
        .with(Arc::new(WhoDonsTool::new(DonsClient::new(
            transport.clone(),
            dons,
        ))))
        .with(Arc::new(CdcWonderTool::new(WonderClient::new(
            transport.clone(),
            wonder,
        ))))
        .with(Arc::new(PubMedTool::new(PubMedClient::with_key(
            transport,
            pubmed,
            ncbi_api_key,
        ))))
}

fn arg_str<'a>(args: &'a Value, key: &str) -> Result<Option<&'a str>, ToolError> {
    match args.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.as_str())),
        Some(other) => Err(ToolError::InvalidArguments(format!(
            "{key} must be a string, got {other}"
        ))),
    }
}

fn arg_u32(args: &Value, key: &str) -> Result<Option<u32>, ToolError> {
    match args.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_u64()
            .and_then(|n| u32::try_from(n).ok())
            .map(Some)
            .ok_or_else(|| {
                ToolError::InvalidArguments(format!("{key} must be a positive integer, got {v}"))
            }),
    }
}

fn arg_date(args: &Value, key: &str) -> Result<Option<NaiveDate>, ToolError> {
    arg_str(args, key)?
        .map(|s| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| {
                ToolError::InvalidArguments(format!("{key} must be YYYY-MM-DD, got {s}"))
            })
        })
        .transpose()
}

pub struct WhoDonsTool {
    client: DonsClient,
    snippet_chars: usize,
}

impl WhoDonsTool {
    pub fn new(client: DonsClient) -> Self {
        Self {
            client,
            snippet_chars: 600,
        }
    }
}

impl From<DonsError> for ToolError {
    fn from(e: DonsError) -> Self {
        match e {
            DonsError::Transport(t) => t.into(),
            DonsError::InvalidQuery(m) => ToolError::InvalidArguments(m),
            other => ToolError::Failed(other.to_string()),
        }
    }
}

#[async_trait]
impl Tool for WhoDonsTool {
    fn id(&self) -> &str {
        WHO_DONS
    }

    fn category(&self) -> Category {
        Category::Regulatory
    }

    fn description(&self) -> &str {
        "WHO Disease Outbreak News search. Arguments: {\"keyword\": string?, \"date_from\": \"YYYY-MM-DD\"?, \"date_to\": \"YYYY-MM-DD\"?, \"top\": 1-100?}"
    }

    async fn invoke(&self, arguments: &Value) -> Result<ToolOutput, ToolError> {
        let query = DonsQuery {
            keyword: arg_str(arguments, "keyword")?.map(str::to_owned),
            date_from: arg_date(arguments, "date_from")?,
            date_to: arg_date(arguments, "date_to")?,
            top: arg_u32(arguments, "top")?.unwrap_or(10),
        };
        let parsed = self.client.fetch_dons(&query).await?;
        let mut text = format!(
            "WHO Disease Outbreak News: {} item(s)\n",
            parsed.items.len()
        );
        for item in &parsed.items {
            let _ = writeln!(
                text,
                "- {} | {} | {} ({})",
                item.publication_date.format("%Y-%m-%d"),
                item.title,
                truncate_words(&item.summary_plain, self.snippet_chars),
                item.url
            );
        }
        for w in &parsed.warnings {
            let _ = writeln!(text, "(skipped: {w})");
        }
        let citations = parsed
            .items
            .iter()
            .map(|i| SourceCitation::new(&i.url, &i.title, Origin::Who))
            .collect();
        Ok(ToolOutput { text, citations })
    }
}

pub struct CdcWonderTool {
    client: WonderClient,
    max_rows: usize,
}

impl CdcWonderTool {
    pub fn new(client: WonderClient) -> Self {
        Self {
            client,
            max_rows: 15,
        }
    }
}

impl From<WonderError> for ToolError {
    fn from(e: WonderError) -> Self {
        match e {
            WonderError::Transport(t) => t.into(),
            e @ (WonderError::EmptyParameterName
            | WonderError::ReservedParameter(_)
            | WonderError::EmptyDataset
            | WonderError::UnknownDataset(_)) => ToolError::InvalidArguments(e.to_string()),
            other => ToolError::Failed(other.to_string()),
        }
    }
}

fn wonder_request(arguments: &Value) -> Result<WonderRequest, ToolError> {
    let dataset = arg_str(arguments, "dataset_id")?.unwrap_or("D76");
    let mut request = if dataset == "D76" {
        WonderRequest::default_mortality()
    } else {
        WonderRequest::new(dataset)
    };
    match arguments.get("parameters") {
        None | Some(Value::Null) => {}
        Some(Value::Object(map)) => {
            for (name, value) in map {
                let values = match value {
                    Value::String(s) => vec![s.clone()],
                    Value::Array(items) => items
                        .iter()
                        .map(|v| v.as_str().map(str::to_owned))
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| {
                            ToolError::InvalidArguments(format!(
                                "parameter {name} values must be strings"
                            ))
                        })?,
                    other => {
                        return Err(ToolError::InvalidArguments(format!(
                            "parameter {name} must be a string or list, got {other}"
                        )))
                    }
                };
                request.parameters.insert(name.clone(), values);
            }
        }
        Some(other) => {
            return Err(ToolError::InvalidArguments(format!(
                "parameters must be an object, got {other}"
            )))
        }
    }
    Ok(request)
}

#[async_trait]
impl Tool for CdcWonderTool {
    fn id(&self) -> &str {
        CDC_WONDER
    }

    fn category(&self) -> Category {
        Category::Statistical
    }

    fn description(&self) -> &str {
        "CDC WONDER dataset query. Arguments: {\"dataset_id\": string? (default D76 mortality), \"parameters\": {name: value or [values]}?}"
    }

    async fn invoke(&self, arguments: &Value) -> Result<ToolOutput, ToolError> {
        let request = wonder_request(arguments)?;
        let table = self.client.query(&request).await?;
        let mut text = format!(
            "CDC WONDER {} results ({} rows):\n{}",
            request.dataset_id,
            table.rows.len(),
            summarize_table(&table, self.max_rows)
        );
        for note in &table.footnotes {
            let _ = writeln!(text, "Note: {note}");
        }
        let config = self.client.config();
        let page = config
            .dataset_pages
            .get(&request.dataset_id)
            .or_else(|| config.endpoints.get(&request.dataset_id))
            .cloned()
            .unwrap_or_default();
        let citations = vec![SourceCitation::new(
            page,
            format!("CDC WONDER dataset {}", request.dataset_id),
            Origin::Cdc,
        )];
        Ok(ToolOutput { text, citations })
    }
}

pub struct PubMedTool {
    client: PubMedClient,
    default_results: u32,
    snippet_chars: usize,
    passage_chars: usize,
}

impl PubMedTool {
    pub fn new(client: PubMedClient) -> Self {
        Self {
            client,
            default_results: 5,
            snippet_chars: 200,
            passage_chars: 1200,
        }
    }
}

impl From<PubMedError> for ToolError {
    fn from(e: PubMedError) -> Self {
        match e {
            PubMedError::Transport(t) => t.into(),
            PubMedError::InvalidArgument(m) => ToolError::InvalidArguments(m),
            other => ToolError::Failed(other.to_string()),
        }
    }
}

#[async_trait]
impl Tool for PubMedTool {
    fn id(&self) -> &str {
        PUBMED_BIOC
    }

    fn category(&self) -> Category {
        Category::Clinical
    }

    fn description(&self) -> &str {
        "PubMed literature search returning BioC article text. Arguments: {\"term\": string, \"max_results\": 1-50?}"
    }

    async fn invoke(&self, arguments: &Value) -> Result<ToolOutput, ToolError> {
        let term = arg_str(arguments, "term")?
            .ok_or_else(|| ToolError::InvalidArguments("term is required".into()))?;
        let max = arg_u32(arguments, "max_results")?.unwrap_or(self.default_results);
        let ids = self.client.search(term, max).await?;
        let mut docs = Vec::with_capacity(ids.len());
        let mut missing = Vec::new();
        for id in &ids {
            match self.client.fetch_bioc(id).await {
                Ok(doc) => docs.push(doc),
                Err(PubMedError::NotFound(id)) => missing.push(id),
                Err(e) => return Err(e.into()),
            }
        }
        let base = &self.client.config().article_base_url;
        let mut text = format!("PubMed: {} article(s) for \"{term}\"\n", docs.len());
        text.push_str(&summarize_hits(&docs, base, self.snippet_chars));
        for doc in &docs {
            let body: Vec<&str> = doc
                .passages
                .iter()
                .filter(|p| p.infons.get("type").is_none_or(|t| t != "title"))
                .map(|p| p.text.as_str())
                .collect();
            let _ = write!(
                text,
                "\n[{}] {}\n",
                doc.doc_id,
                truncate_words(&body.join(" "), self.passage_chars)
            );
        }
        if !missing.is_empty() {
            let _ = writeln!(text, "(not found: {})", missing.join(", "));
        }
        let citations = docs
            .iter()
            .map(|d| {
                let hit = crate::pubmed::LiteratureHit::from_document(d, base, self.snippet_chars);
                SourceCitation::new(article_url(base, &d.doc_id), hit.title, Origin::PubMed)
            })
            .collect();
        Ok(ToolOutput { text, citations })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn wonder_arguments_merge_over_defaults() {
        let r = wonder_request(&json!({"parameters": {"B_1": "D76.V9-level1", "F_X": ["a", "b"]}}))
            .unwrap();
        assert_eq!(r.dataset_id, "D76");
        assert_eq!(r.parameters["B_1"], ["D76.V9-level1"]);
        assert_eq!(r.parameters["F_X"], ["a", "b"]);
        assert_eq!(r.parameters["M_1"], ["D76.M1"]);
        assert!(matches!(
            wonder_request(&json!({"parameters": {"x": 3}})),
            Err(ToolError::InvalidArguments(_))
        ));
        assert!(wonder_request(&json!({"dataset_id": "D158"}))
            .unwrap()
            .parameters
            .is_empty());
    }

    #[test]
    fn argument_types() {
        assert!(matches!(
            arg_u32(&json!({"top": -1}), "top"),
            Err(ToolError::InvalidArguments(_))
        ));
        assert!(matches!(
            arg_date(&json!({"d": "2024/01/01"}), "d"),
            Err(ToolError::InvalidArguments(_))
        ));
        assert_eq!(arg_str(&json!({}), "k").unwrap(), None);
    }

    #[test]
    fn transport_errors_classify() {
        let connect = TransportError::Connect {
            url: "u".into(),
            reason: "r".into(),
        };
        assert!(ToolError::from(connect).is_transport());
        assert!(!ToolError::from(WonderError::Http { status: 500 }).is_transport());
    }
}
