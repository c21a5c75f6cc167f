//! NCBI literature client: E-utilities search plus BioC article text.

mod bioc;
mod ratelimit;

use std::fmt::Write as _;
use std::sync::Arc;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::transport::{HttpRequest, HttpTransport, TransportError};

pub use bioc::{
    convert_bioc_xml_to_json, parse_bioc_json, parse_bioc_xml, to_canonical_json, BioCAnnotation,
    BioCCollection, BioCDocument, BioCError, BioCLocation, BioCPassage, Infons,
};
pub use ratelimit::{RateLimiter, ANONYMOUS_RATE, KEYED_RATE};

const TERM: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'.')
    .remove(b'_')
    .remove(b'~');

pub const MAX_SEARCH_RESULTS: u32 = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PubMedConfig {
    pub esearch_url: String,
    pub bioc_json_url: String,
    pub article_base_url: String,
    /// Environment variable holding the optional NCBI API key.
    pub api_key_env: String,
}

impl Default for PubMedConfig {
    fn default() -> Self {
        Self {
            esearch_url: "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/esearch.fcgi".into(),
            bioc_json_url:
                "https://www.ncbi.nlm.nih.gov/research/bionlp/RESTful/pubmed.cgi/BioC_json".into(),
            article_base_url: "https://pubmed.ncbi.nlm.nih.gov".into(),
            api_key_env: "NCBI_API_KEY".into(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PubMedError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("NCBI answered HTTP {status}")]
    Http { status: u16 },
    #[error("malformed envelope: {0}")]
    MalformedEnvelope(String),
    #[error("article {0} not found")]
    NotFound(String),
    #[error(transparent)]
    BioC(#[from] BioCError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LiteratureHit {
    pub doc_id: String,
    pub title: String,
    pub snippet: String,
    pub url: String,
}

impl LiteratureHit {
    /// Title passage as title; the abstract (or the first non-title passage)
    /// as snippet source.
    pub fn from_document(doc: &BioCDocument, article_base_url: &str, max_chars: usize) -> Self {
        let title_passage = doc.passage_of_type("title").or(doc.passages.first());
        let title = title_passage
            .map(|p| p.text.trim().to_owned())
            .unwrap_or_default();
        let body = doc
            .passage_of_type("abstract")
            .or_else(|| doc.passages.iter().find(|p| Some(*p) != title_passage))
            .or(title_passage)
            .map(|p| p.text.as_str())
            .unwrap_or_default();
        Self {
            doc_id: doc.doc_id.clone(),
            title: if title.is_empty() {
                doc.doc_id.clone()
            } else {
                title
            },
            snippet: truncate_words(body, max_chars),
            url: article_url(article_base_url, &doc.doc_id),
        }
    }
}

pub fn article_url(base: &str, doc_id: &str) -> String {
    format!("{}/{}/", base.trim_end_matches('/'), doc_id)
}

/// Cuts `text` to at most `max_chars` characters at a word boundary and adds
/// an ellipsis when anything was dropped.
pub fn truncate_words(text: &str, max_chars: usize) -> String {
    let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if text.chars().count() <= max_chars {
        return text;
    }
    let cut: String = text.chars().take(max_chars).collect();
    let next_is_space = text.chars().nth(max_chars).is_some_and(char::is_whitespace);
    let kept = if next_is_space {
        cut.as_str()
    } else {
        cut.rfind(' ').map_or(cut.as_str(), |i| &cut[..i])
    };
    format!("{}…", kept.trim_end())
}

/// Markdown bullets `- title — snippet (url)`, one per document.
pub fn summarize_hits(docs: &[BioCDocument], article_base_url: &str, max_chars: usize) -> String {
    let mut out = String::new();
    for doc in docs {
        let hit = LiteratureHit::from_document(doc, article_base_url, max_chars);
        let _ = writeln!(out, "- {} — {} ({})", hit.title, hit.snippet, hit.url);
    }
    out
}

pub struct PubMedClient {
    transport: Arc<dyn HttpTransport>,
    config: PubMedConfig,
    api_key: Option<String>,
    limiter: RateLimiter,
}

impl PubMedClient {
    /// Reads the API key from the configured environment variable.
    pub fn new(transport: Arc<dyn HttpTransport>, config: PubMedConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty());
        Self::with_key(transport, config, api_key)
    }

    pub fn with_key(
        transport: Arc<dyn HttpTransport>,
        config: PubMedConfig,
        api_key: Option<String>,
    ) -> Self {
        let rate = if api_key.is_some() {
            KEYED_RATE
        } else {
            ANONYMOUS_RATE
        };
        Self {
            transport,
            config,
            api_key,
            limiter: RateLimiter::new(rate),
        }
    }

    /// Replaces the request ceiling, e.g. for fixture-backed runs.
    pub fn with_rate_limit(mut self, rate_per_sec: f64) -> Self {
        self.limiter = RateLimiter::new(rate_per_sec);
        self
    }

    pub fn config(&self) -> &PubMedConfig {
        &self.config
    }

    pub fn rate_limit(&self) -> f64 {
        self.limiter.rate()
    }

    pub fn search_url(&self, term: &str, max_results: u32) -> String {
        let mut url = format!(
            "{}?db=pubmed&retmode=json&sort=relevance&retmax={max_results}&term={}",
            self.config.esearch_url,
            utf8_percent_encode(term.trim(), TERM)
        );
        if let Some(key) = &self.api_key {
            let _ = write!(url, "&api_key={}", utf8_percent_encode(key, TERM));
        }
        url
    }

    async fn get(&self, url: String) -> Result<crate::transport::HttpResponse, PubMedError> {
        self.limiter.acquire().await;
        Ok(self.transport.send(HttpRequest::get(url)).await?)
    }

    /// PubMed ids for `term` in relevance order.
    pub async fn search(&self, term: &str, max_results: u32) -> Result<Vec<String>, PubMedError> {
        if term.trim().is_empty() {
            return Err(PubMedError::InvalidArgument("search term is blank".into()));
        }
        if !(1..=MAX_SEARCH_RESULTS).contains(&max_results) {
            return Err(PubMedError::InvalidArgument(format!(
                "max_results must be in 1..={MAX_SEARCH_RESULTS}, got {max_results}"
            )));
        }
        let response = self.get(self.search_url(term, max_results)).await?;
        if !response.is_success() {
            return Err(PubMedError::Http {
                status: response.status,
            });
        }
        let mut ids = parse_esearch(&response.body)?;
        ids.truncate(max_results as usize);
        Ok(ids)
    }

    /// One article as a BioC document.
    ///
    /// Asks for BioC JSON; if the service answers with XML instead, the body
    /// goes through the XML→JSON converter first.
    pub async fn fetch_bioc(&self, doc_id: &str) -> Result<BioCDocument, PubMedError> {
        let doc_id = doc_id.trim();
        if doc_id.is_empty() {
            return Err(PubMedError::InvalidArgument("document id is blank".into()));
        }
        let url = format!(
            "{}/{}/unicode",
            self.config.bioc_json_url.trim_end_matches('/'),
            utf8_percent_encode(doc_id, TERM)
        );
        let response = self.get(url).await?;
        if response.status == 404 {
            return Err(PubMedError::NotFound(doc_id.to_owned()));
        }
        if !response.is_success() {
            return Err(PubMedError::Http {
                status: response.status,
            });
        }
        let body = response.body.trim();
        if body.is_empty() {
            return Err(PubMedError::NotFound(doc_id.to_owned()));
        }
        let json = if body.starts_with('<') {
            convert_bioc_xml_to_json(body)?
        } else {
            body.to_owned()
        };
        let collection = parse_bioc_json(&json)?;
        let mut documents = collection.documents;
        let pos = documents
            .iter()
            .position(|d| d.doc_id == doc_id)
            .unwrap_or(0);
        if documents.is_empty() {
            return Err(PubMedError::NotFound(doc_id.to_owned()));
        }
        Ok(documents.swap_remove(pos))
    }
}

/// Id list out of an `esearch` JSON reply.
pub fn parse_esearch(body: &str) -> Result<Vec<String>, PubMedError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| PubMedError::MalformedEnvelope(e.to_string()))?;
    let result = value
        .get("esearchresult")
        .ok_or_else(|| PubMedError::MalformedEnvelope("no esearchresult".into()))?;
    if let Some(err) = result.get("ERROR").and_then(Value::as_str) {
        return Err(PubMedError::MalformedEnvelope(err.to_owned()));
    }
    let ids = result
        .get("idlist")
        .and_then(Value::as_array)
        .ok_or_else(|| PubMedError::MalformedEnvelope("no idlist".into()))?;
    ids.iter()
        .map(|id| {
            id.as_str()
                .map(str::to_owned)
                .ok_or_else(|| PubMedError::MalformedEnvelope(format!("non-string id {id}")))
        })
        .collect()
}
