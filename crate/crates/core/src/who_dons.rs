//! WHO Disease Outbreak News client over the OData news surface.

use std::sync::Arc;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, Utc};
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;
use tracing::warn;

use crate::report::is_absolute_url;
use crate::transport::{HttpRequest, HttpTransport, TransportError};

/// RFC 3986 unreserved characters pass through; everything else is encoded.
const QUERY_VALUE: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'.')
    .remove(b'_')
    .remove(b'~');

pub const DEFAULT_TOP: u32 = 20;
pub const MAX_TOP: u32 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DonsFields {
    pub publication_date: String,
    pub title: String,
    pub summary: String,
    pub url: String,
}

impl Default for DonsFields {
    fn default() -> Self {
        Self {
            publication_date: "PublicationDate".into(),
            title: "Title".into(),
            summary: "Summary".into(),
            url: "ItemDefaultUrl".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DonsConfig {
    pub endpoint: String,
    /// Base joined onto relative `ItemDefaultUrl` values.
    pub item_base_url: String,
    pub fields: DonsFields,
}

impl Default for DonsConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://www.who.int/api/news/diseaseoutbreaknews".into(),
            item_base_url: "https://www.who.int/emergencies/disease-outbreak-news/item".into(),
            fields: DonsFields::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DonsQuery {
    pub keyword: Option<String>,
    pub date_from: Option<NaiveDate>,
    pub date_to: Option<NaiveDate>,
    pub top: u32,
}

impl Default for DonsQuery {
    fn default() -> Self {
        Self {
            keyword: None,
            date_from: None,
            date_to: None,
            top: DEFAULT_TOP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DonsItem {
    pub title: String,
    pub publication_date: DateTime<Utc>,
    pub url: String,
    pub summary_html: String,
    pub summary_plain: String,
}

/// Parsed envelope plus one warning per skipped record.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedDons {
    pub items: Vec<DonsItem>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum DonsError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("DONs endpoint answered HTTP {status}")]
    Http { status: u16 },
    #[error("malformed envelope: {0}")]
    MalformedEnvelope(String),
}

impl DonsQuery {
    pub fn validate(&self) -> Result<(), DonsError> {
        if !(1..=MAX_TOP).contains(&self.top) {
            return Err(DonsError::InvalidQuery(format!(
                "top must be in 1..={MAX_TOP}, got {}",
                self.top
            )));
        }
        if let (Some(from), Some(to)) = (self.date_from, self.date_to) {
            if from > to {
                return Err(DonsError::InvalidQuery(format!(
                    "date_from {from} is after date_to {to}"
                )));
            }
        }
        if self.keyword.as_deref().is_some_and(|k| k.trim().is_empty()) {
            return Err(DonsError::InvalidQuery("keyword is blank".into()));
        }
        Ok(())
    }
}

fn odata_string(value: &str) -> String {
    format!("'{}'", value.replace('\'', "''"))
}

fn encode(value: &str) -> String {
    utf8_percent_encode(value, QUERY_VALUE).to_string()
}

/// Query string with the default WHO field names.
pub fn build_odata_query(q: &DonsQuery) -> Result<String, DonsError> {
    build_odata_query_with(q, &DonsFields::default())
}

/// Serializes `$filter` (when there are predicates), `$orderby`, `$top`, in
/// that order. Keyword matching uses OData v4 `contains`.
pub fn build_odata_query_with(q: &DonsQuery, fields: &DonsFields) -> Result<String, DonsError> {
    q.validate()?;
    let mut predicates = Vec::new();
    if let Some(keyword) = &q.keyword {
        let kw = odata_string(keyword);
        predicates.push(format!(
            "(contains({},{kw}) or contains({},{kw}))",
            fields.title, fields.summary
        ));
    }
    if let Some(from) = q.date_from {
        predicates.push(format!(
            "{} ge {}T00:00:00Z",
            fields.publication_date,
            from.format("%Y-%m-%d")
        ));
    }
    if let Some(to) = q.date_to {
        predicates.push(format!(
            "{} le {}T23:59:59Z",
            fields.publication_date,
            to.format("%Y-%m-%d")
        ));
    }
    let mut params = Vec::with_capacity(3);
    if !predicates.is_empty() {
        params.push(format!("$filter={}", encode(&predicates.join(" and "))));
    }
    params.push(format!(
        "$orderby={}",
        encode(&format!("{} desc", fields.publication_date))
    ));
    params.push(format!("$top={}", q.top));
    Ok(params.join("&"))
}

fn parse_date(raw: &str) -> Option<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.with_timezone(&Utc));
    }
    if let Ok(naive) = NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S%.f") {
        return Some(naive.and_utc());
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|d| d.and_utc())
}

fn absolutize(url: &str, base: &str) -> String {
    if is_absolute_url(url) {
        return url.to_owned();
    }
    format!(
        "{}/{}",
        base.trim_end_matches('/'),
        url.trim_start_matches('/')
    )
}

const BLOCK_TAGS: [&str; 14] = [
    "p", "br", "div", "li", "ul", "ol", "tr", "td", "th", "table", "h1", "h2", "h3", "h4",
];

/// Removes HTML tags, decodes common entities and collapses whitespace.
pub fn strip_html(html: &str) -> String {
    let mut text = String::with_capacity(html.len());
    let mut rest = html;
    while let Some(open) = rest.find('<') {
        text.push_str(&rest[..open]);
        match rest[open..].find('>') {
            Some(close) => {
                let tag = &rest[open + 1..open + close];
                let name: String = tag
                    .trim_start_matches('/')
                    .chars()
                    .take_while(|c| c.is_ascii_alphanumeric())
                    .collect::<String>()
                    .to_ascii_lowercase();
                if BLOCK_TAGS.contains(&name.as_str()) {
                    text.push(' ');
                }
                rest = &rest[open + close + 1..];
            }
            None => {
                rest = &rest[open..];
                break;
            }
        }
    }
    text.push_str(rest);
    decode_entities(&text)
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn decode_entities(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let tail = &rest[amp..];
        let decoded = tail.find(';').filter(|&end| end <= 10).and_then(|end| {
            let entity = &tail[1..end];
            let ch = match entity {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" | "#39" => Some('\''),
                "nbsp" => Some(' '),
                _ if entity.starts_with("#x") || entity.starts_with("#X") => {
                    u32::from_str_radix(&entity[2..], 16)
                        .ok()
                        .and_then(char::from_u32)
                }
                _ if entity.starts_with('#') => entity[1..].parse().ok().and_then(char::from_u32),
                _ => None,
            };
            ch.map(|c| (c, end))
        });
        match decoded {
            Some((c, end)) => {
                out.push(c);
                rest = &tail[end + 1..];
            }
            None => {
                out.push('&');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Parses a DONs OData envelope with the default field names.
pub fn parse_dons_payload(body: &str) -> Result<ParsedDons, DonsError> {
    parse_dons_payload_with(body, &DonsConfig::default())
}

pub fn parse_dons_payload_with(body: &str, config: &DonsConfig) -> Result<ParsedDons, DonsError> {
    let envelope: Value =
        serde_json::from_str(body).map_err(|e| DonsError::MalformedEnvelope(e.to_string()))?;
    let records = envelope
        .get("value")
        .and_then(Value::as_array)
        .ok_or_else(|| DonsError::MalformedEnvelope("no \"value\" array".into()))?;
    let fields = &config.fields;
    let mut parsed = ParsedDons::default();
    for (i, record) in records.iter().enumerate() {
        let text = |name: &str| record.get(name).and_then(Value::as_str).map(str::trim);
        let title = text(&fields.title).filter(|t| !t.is_empty());
        let date = text(&fields.publication_date).and_then(parse_date);
        let url = text(&fields.url).filter(|u| !u.is_empty());
        let (Some(title), Some(publication_date), Some(url)) = (title, date, url) else {
            let mut missing = Vec::new();
            if title.is_none() {
                missing.push(fields.title.as_str());
            }
            if date.is_none() {
                missing.push(fields.publication_date.as_str());
            }
            if url.is_none() {
                missing.push(fields.url.as_str());
            }
            let warning = format!("record {i}: missing or invalid {}", missing.join(", "));
            warn!("{warning}");
            parsed.warnings.push(warning);
            continue;
        };
        let summary_html = record
            .get(&fields.summary)
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_owned();
        parsed.items.push(DonsItem {
            title: title.to_owned(),
            publication_date,
            url: absolutize(url, &config.item_base_url),
            summary_plain: strip_html(&summary_html),
            summary_html,
        });
    }
    parsed
        .items
        .sort_by_key(|i| std::cmp::Reverse(i.publication_date));
    Ok(parsed)
}

/// Inverse of [`parse_dons_payload`] on the retained fields.
pub fn serialize_dons_payload(items: &[DonsItem], fields: &DonsFields) -> String {
    let value: Vec<Value> = items
        .iter()
        .map(|item| {
            let mut record = Map::new();
            record.insert(fields.title.clone(), json!(item.title));
            record.insert(
                fields.publication_date.clone(),
                json!(item
                    .publication_date
                    .to_rfc3339_opts(SecondsFormat::Secs, true)),
            );
            record.insert(fields.url.clone(), json!(item.url));
            record.insert(fields.summary.clone(), json!(item.summary_html));
            Value::Object(record)
        })
        .collect();
    json!({ "value": value }).to_string()
}

#[derive(Clone)]
pub struct DonsClient {
    transport: Arc<dyn HttpTransport>,
    config: DonsConfig,
}

impl DonsClient {
    pub fn new(transport: Arc<dyn HttpTransport>, config: DonsConfig) -> Self {
        Self { transport, config }
    }

    pub fn request_url(&self, q: &DonsQuery) -> Result<String, DonsError> {
        Ok(format!(
            "{}?{}",
            self.config.endpoint,
            build_odata_query_with(q, &self.config.fields)?
        ))
    }

    pub async fn fetch_dons(&self, q: &DonsQuery) -> Result<ParsedDons, DonsError> {
        let url = self.request_url(q)?;
        let response = self.transport.send(HttpRequest::get(url)).await?;
        if !response.is_success() {
            return Err(DonsError::Http {
                status: response.status,
            });
        }
        parse_dons_payload_with(&response.body, &self.config)
    }
}
