//! CDC WONDER client: request-parameter documents, POST, tabular responses.
//!
//! Response documents are read as follows. Column labels come from the
//! `label` attributes of `byvariables/variable` followed by
//! `measure-selections/measure`. Rows are the `r` elements of `data-table`;
//! each `c` cell carries its text in `l` (label), `v` (value) or `dt`
//! (display text). A label cell with `c="k"` spans `k` rows, and the rows
//! below it omit that leading cell. A `message` element anywhere in the
//! document means the server refused the request.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transport::{HttpRequest, HttpTransport, TransportError};

pub const RESTRICTIONS_PARAMETER: &str = "accept_datause_restrictions";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WonderRequest {
    pub dataset_id: String,
    pub parameters: BTreeMap<String, Vec<String>>,
    pub accept_datause_restrictions: bool,
}

impl WonderRequest {
    pub fn new(dataset_id: impl Into<String>) -> Self {
        Self {
            dataset_id: dataset_id.into(),
            parameters: BTreeMap::new(),
            accept_datause_restrictions: true,
        }
    }

    pub fn param(mut self, name: &str, values: &[&str]) -> Self {
        self.parameters.insert(
            name.to_owned(),
            values.iter().map(|v| (*v).to_owned()).collect(),
        );
        self
    }

    /// All-cause deaths by year from the detailed mortality dataset.
    pub fn default_mortality() -> Self {
        Self::new("D76")
            .param("B_1", &["D76.V1-level1"])
            .param("B_2", &["*None*"])
            .param("F_D76.V1", &["*All*"])
            .param("M_1", &["D76.M1"])
            .param("M_2", &["D76.M2"])
            .param("M_3", &["D76.M3"])
            .param("O_age", &["D76.V5"])
            .param("O_timeout", &["300"])
            .param("V_D76.V5", &["*All*"])
            .param("action-Send", &["Send"])
            .param("stage", &["request"])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WonderTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub footnotes: Vec<String>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum WonderError {
    #[error("the WONDER data-use restrictions must be accepted before sending")]
    RestrictionsNotAccepted,
    #[error("parameter with empty name")]
    EmptyParameterName,
    #[error("parameter {0} is set from accept_datause_restrictions and cannot be supplied")]
    ReservedParameter(String),
    #[error("dataset id is empty")]
    EmptyDataset,
    #[error("no endpoint configured for dataset {0}")]
    UnknownDataset(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("WONDER answered HTTP {status}")]
    Http { status: u16 },
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("server rejected request: {0}")]
    ServerRejected(String),
}

/// Escapes the five XML special characters.
pub fn escape_xml(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Serializes the request-parameter document.
///
/// One `parameter` element per (name, value) pair, names sorted, values in
/// their given order. The output is byte-deterministic.
pub fn build_request_xml(r: &WonderRequest) -> Result<String, WonderError> {
    if r.dataset_id.trim().is_empty() {
        return Err(WonderError::EmptyDataset);
    }
    if !r.accept_datause_restrictions {
        return Err(WonderError::RestrictionsNotAccepted);
    }
    let mut pairs: Vec<(&str, &str)> = vec![(RESTRICTIONS_PARAMETER, "true")];
    for (name, values) in &r.parameters {
        if name.is_empty() {
            return Err(WonderError::EmptyParameterName);
        }
        if name == RESTRICTIONS_PARAMETER {
            return Err(WonderError::ReservedParameter(name.clone()));
        }
        pairs.extend(values.iter().map(|v| (name.as_str(), v.as_str())));
    }
    // stable: values of one name keep their order
    pairs.sort_by(|a, b| a.0.cmp(b.0));

    let mut xml =
        String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<request-parameters>\n");
    for (name, value) in pairs {
        let _ = write!(
            xml,
            "  <parameter>\n    <name>{}</name>\n    <value>{}</value>\n  </parameter>\n",
            escape_xml(name),
            escape_xml(value)
        );
    }
    xml.push_str("</request-parameters>\n");
    Ok(xml)
}

fn cell_text(node: roxmltree::Node<'_, '_>) -> String {
    ["l", "v", "dt"]
        .iter()
        .find_map(|a| node.attribute(*a))
        .map(str::to_owned)
        .unwrap_or_else(|| node.text().unwrap_or_default().trim().to_owned())
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|n| n.has_tag_name(name))
}

fn parse_options() -> roxmltree::ParsingOptions {
    roxmltree::ParsingOptions {
        allow_dtd: true,
        ..Default::default()
    }
}

/// Parses a WONDER response into a rectangular table.
pub fn parse_response_xml(body: &str) -> Result<WonderTable, WonderError> {
    let doc = roxmltree::Document::parse_with_options(body, parse_options())
        .map_err(|e| WonderError::MalformedXml(e.to_string()))?;
    let root = doc.root_element();
    if let Some(message) = root
        .descendants()
        .find(|n| n.has_tag_name("message"))
        .map(|n| n.text().unwrap_or_default().trim().to_owned())
        .filter(|m| !m.is_empty())
    {
        return Err(WonderError::ServerRejected(message));
    }
    let response = if root.has_tag_name("response") {
        root
    } else {
        child(root, "response")
            .ok_or_else(|| WonderError::MalformedXml("no response element".into()))?
    };

    let mut columns = Vec::new();
    for (group, item) in [
        ("byvariables", "variable"),
        ("measure-selections", "measure"),
    ] {
        if let Some(g) = child(response, group) {
            columns.extend(
                g.children()
                    .filter(|n| n.has_tag_name(item))
                    .map(|n| n.attribute("label").unwrap_or_default().to_owned()),
            );
        }
    }
    if columns.is_empty() {
        return Err(WonderError::MalformedXml(
            "response declares no columns".into(),
        ));
    }

    let mut rows = Vec::new();
    // (text, rows still to cover) for every leading label column
    let mut spans: Vec<Option<(String, usize)>> = vec![None; columns.len()];
    if let Some(table) = child(response, "data-table") {
        for (ri, r) in table.children().filter(|n| n.has_tag_name("r")).enumerate() {
            let cells: Vec<_> = r.children().filter(|n| n.has_tag_name("c")).collect();
            if cells.len() > columns.len() {
                return Err(WonderError::MalformedXml(format!(
                    "row {ri} has {} cells for {} columns",
                    cells.len(),
                    columns.len()
                )));
            }
            let inherited = columns.len() - cells.len();
            let mut row = Vec::with_capacity(columns.len());
            for (col, span) in spans.iter_mut().enumerate().take(inherited) {
                match span {
                    Some((text, remaining)) if *remaining > 0 => {
                        row.push(text.clone());
                        *remaining -= 1;
                    }
                    _ => {
                        return Err(WonderError::MalformedXml(format!(
                            "row {ri} omits column {col} with no spanning label above it"
                        )))
                    }
                }
            }
            for (offset, cell) in cells.into_iter().enumerate() {
                let col = inherited + offset;
                let text = cell_text(cell);
                if let Some(k) = cell.attribute("c").and_then(|c| c.parse::<usize>().ok()) {
                    spans[col] = Some((text.clone(), k.saturating_sub(1)));
                } else {
                    spans[col] = None;
                }
                row.push(text);
            }
            rows.push(row);
        }
    }

    let footnotes = root
        .descendants()
        .filter(|n| n.has_tag_name("footnote"))
        .map(|n| n.text().unwrap_or_default().trim().to_owned())
        .filter(|t| !t.is_empty())
        .collect();
    Ok(WonderTable {
        columns,
        rows,
        footnotes,
    })
}

fn md_cell(text: &str) -> String {
    text.replace('|', "\\|").replace('\n', " ")
}

/// Markdown table of the first `max_rows` rows, with a `(k more rows)` line
/// when truncated.
pub fn summarize_table(t: &WonderTable, max_rows: usize) -> String {
    let line = |cells: &mut dyn Iterator<Item = String>| {
        let mut s = String::from("|");
        for c in cells {
            let _ = write!(s, " {c} |");
        }
        s.push('\n');
        s
    };
    let mut out = line(&mut t.columns.iter().map(|c| md_cell(c)));
    out.push_str(&line(&mut t.columns.iter().map(|_| "---".to_owned())));
    for row in t.rows.iter().take(max_rows) {
        out.push_str(&line(&mut row.iter().map(|c| md_cell(c))));
    }
    if t.rows.len() > max_rows {
        let _ = writeln!(out, "({} more rows)", t.rows.len() - max_rows);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WonderConfig {
    /// `dataset_id → POST URL`.
    pub endpoints: BTreeMap<String, String>,
    /// `dataset_id → human-readable dataset page`, used for citations.
    pub dataset_pages: BTreeMap<String, String>,
}

impl Default for WonderConfig {
    fn default() -> Self {
        Self {
            endpoints: BTreeMap::from([(
                "D76".to_owned(),
                "https://wonder.cdc.gov/controller/datarequest/D76".to_owned(),
            )]),
            dataset_pages: BTreeMap::from([(
                "D76".to_owned(),
                "https://wonder.cdc.gov/ucd-icd10.html".to_owned(),
            )]),
        }
    }
}

#[derive(Clone)]
pub struct WonderClient {
    transport: Arc<dyn HttpTransport>,
    config: WonderConfig,
}

impl WonderClient {
    pub fn new(transport: Arc<dyn HttpTransport>, config: WonderConfig) -> Self {
        Self { transport, config }
    }

    pub fn config(&self) -> &WonderConfig {
        &self.config
    }

    /// Posts the request document and returns the raw response body.
    pub async fn post_request(&self, r: &WonderRequest) -> Result<String, WonderError> {
        let xml = build_request_xml(r)?;
        let url = self
            .config
            .endpoints
            .get(&r.dataset_id)
            .ok_or_else(|| WonderError::UnknownDataset(r.dataset_id.clone()))?;
        let form = vec![
            ("request_xml".to_owned(), xml),
            (RESTRICTIONS_PARAMETER.to_owned(), "true".to_owned()),
        ];
        let response = self
            .transport
            .send(HttpRequest::post_form(url.clone(), form))
            .await?;
        if !response.is_success() {
            // WONDER reports refusals as XML bodies on 500s too
            if let Err(e @ WonderError::ServerRejected(_)) = parse_response_xml(&response.body) {
                return Err(e);
            }
            return Err(WonderError::Http {
                status: response.status,
            });
        }
        Ok(response.body)
    }

    pub async fn query(&self, r: &WonderRequest) -> Result<WonderTable, WonderError> {
        parse_response_xml(&self.post_request(r).await?)
    }
}
