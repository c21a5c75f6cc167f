//! BioC collections in their XML and JSON renderings.
//!
//! The canonical JSON form written by [`convert_bioc_xml_to_json`] is compact
//! and uses a fixed key order at every level:
//!
//! * collection: `source, date, key, infons, documents`
//! * document: `id, infons, passages`
//! * passage: `offset, infons, text, annotations`
//! * annotation: `id, infons, text, locations` (`offset, length`)
//!
//! Infon maps are emitted sorted by key. Sentences and relations are not
//! retained.

use std::collections::BTreeMap;

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

pub type Infons = BTreeMap<String, String>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BioCCollection {
    pub source: String,
    pub date: String,
    pub key: String,
    pub infons: Infons,
    pub documents: Vec<BioCDocument>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BioCDocument {
    pub doc_id: String,
    pub infons: Infons,
    pub passages: Vec<BioCPassage>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BioCPassage {
    pub offset: u64,
    pub text: String,
    pub infons: Infons,
    /// Carried through untouched; nothing downstream interprets them.
    pub annotations: Vec<BioCAnnotation>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BioCAnnotation {
    pub id: String,
    pub infons: Infons,
    pub text: String,
    pub locations: Vec<BioCLocation>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BioCLocation {
    pub offset: u64,
    pub length: u64,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BioCError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("not a BioC document: root element is <{0}>")]
    NotBioC(String),
    #[error("malformed BioC JSON: {0}")]
    MalformedJson(String),
    #[error("BioC schema violation: {0}")]
    SchemaViolation(String),
}

impl BioCDocument {
    /// Checks the id and the strictly increasing passage offsets.
    pub fn validate(&self) -> Result<(), BioCError> {
        if self.doc_id.trim().is_empty() {
            return Err(BioCError::SchemaViolation("document id is empty".into()));
        }
        for pair in self.passages.windows(2) {
            if pair[1].offset <= pair[0].offset {
                return Err(BioCError::SchemaViolation(format!(
                    "document {}: passage offset {} does not follow {}",
                    self.doc_id, pair[1].offset, pair[0].offset
                )));
            }
        }
        Ok(())
    }

    pub fn passage_of_type(&self, kind: &str) -> Option<&BioCPassage> {
        self.passages.iter().find(|p| {
            p.infons
                .get("type")
                .or_else(|| p.infons.get("section_type"))
                .is_some_and(|t| t.eq_ignore_ascii_case(kind))
        })
    }
}

impl BioCCollection {
    pub fn validate(&self) -> Result<(), BioCError> {
        self.documents.iter().try_for_each(BioCDocument::validate)
    }
}

struct SortedInfons<'a>(&'a Infons);

impl Serialize for SortedInfons<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl Serialize for BioCLocation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("location", 2)?;
        st.serialize_field("offset", &self.offset)?;
        st.serialize_field("length", &self.length)?;
        st.end()
    }
}

impl Serialize for BioCAnnotation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("annotation", 4)?;
        st.serialize_field("id", &self.id)?;
        st.serialize_field("infons", &SortedInfons(&self.infons))?;
        st.serialize_field("text", &self.text)?;
        st.serialize_field("locations", &self.locations)?;
        st.end()
    }
}

impl Serialize for BioCPassage {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("passage", 4)?;
        st.serialize_field("offset", &self.offset)?;
        st.serialize_field("infons", &SortedInfons(&self.infons))?;
        st.serialize_field("text", &self.text)?;
        st.serialize_field("annotations", &self.annotations)?;
        st.end()
    }
}

impl Serialize for BioCDocument {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("document", 3)?;
        st.serialize_field("id", &self.doc_id)?;
        st.serialize_field("infons", &SortedInfons(&self.infons))?;
        st.serialize_field("passages", &self.passages)?;
        st.end()
    }
}

impl Serialize for BioCCollection {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("collection", 5)?;
        st.serialize_field("source", &self.source)?;
        st.serialize_field("date", &self.date)?;
        st.serialize_field("key", &self.key)?;
        st.serialize_field("infons", &SortedInfons(&self.infons))?;
        st.serialize_field("documents", &self.documents)?;
        st.end()
    }
}

/// Canonical JSON text of a collection.
pub fn to_canonical_json(collection: &BioCCollection) -> String {
    serde_json::to_string(collection).expect("BioC collection serializes")
}

// ---- XML ----

type Node<'a, 'i> = roxmltree::Node<'a, 'i>;

fn elements<'a, 'i>(node: Node<'a, 'i>, name: &'static str) -> impl Iterator<Item = Node<'a, 'i>> {
    node.children().filter(move |n| n.has_tag_name(name))
}

fn child_text(node: Node<'_, '_>, name: &'static str) -> String {
    elements(node, name)
        .next()
        .map(|n| n.text().unwrap_or_default().to_owned())
        .unwrap_or_default()
}

fn xml_infons(node: Node<'_, '_>) -> Infons {
    elements(node, "infon")
        .map(|n| {
            (
                n.attribute("key").unwrap_or_default().to_owned(),
                n.text().unwrap_or_default().to_owned(),
            )
        })
        .collect()
}

fn xml_u64(node: Node<'_, '_>, what: &str, raw: &str) -> Result<u64, BioCError> {
    raw.trim().parse::<u64>().map_err(|_| {
        BioCError::SchemaViolation(format!(
            "<{}> {what} {raw:?} is not a non-negative integer",
            node.tag_name().name()
        ))
    })
}

fn xml_annotation(node: Node<'_, '_>) -> Result<BioCAnnotation, BioCError> {
    let locations = elements(node, "location")
        .map(|l| {
            Ok(BioCLocation {
                offset: xml_u64(l, "offset", l.attribute("offset").unwrap_or_default())?,
                length: xml_u64(l, "length", l.attribute("length").unwrap_or_default())?,
            })
        })
        .collect::<Result<_, BioCError>>()?;
    Ok(BioCAnnotation {
        id: node.attribute("id").unwrap_or_default().to_owned(),
        infons: xml_infons(node),
        text: child_text(node, "text"),
        locations,
    })
}

fn xml_passage(node: Node<'_, '_>) -> Result<BioCPassage, BioCError> {
    let offset_node = elements(node, "offset")
        .next()
        .ok_or_else(|| BioCError::SchemaViolation("passage without <offset>".into()))?;
    Ok(BioCPassage {
        offset: xml_u64(offset_node, "value", offset_node.text().unwrap_or_default())?,
        text: child_text(node, "text"),
        infons: xml_infons(node),
        annotations: elements(node, "annotation")
            .map(xml_annotation)
            .collect::<Result<_, _>>()?,
    })
}

fn xml_document(node: Node<'_, '_>) -> Result<BioCDocument, BioCError> {
    let doc = BioCDocument {
        doc_id: child_text(node, "id").trim().to_owned(),
        infons: xml_infons(node),
        passages: elements(node, "passage")
            .map(xml_passage)
            .collect::<Result<_, _>>()?,
    };
    doc.validate()?;
    Ok(doc)
}

/// Parses a BioC XML collection.
pub fn parse_bioc_xml(xml: &str) -> Result<BioCCollection, BioCError> {
    let options = roxmltree::ParsingOptions {
        allow_dtd: true,
        ..Default::default()
    };
    let doc = roxmltree::Document::parse_with_options(xml, options)
        .map_err(|e| BioCError::MalformedXml(e.to_string()))?;
    let root = doc.root_element();
    if !root.has_tag_name("collection") {
        return Err(BioCError::NotBioC(root.tag_name().name().to_owned()));
    }
    Ok(BioCCollection {
        source: child_text(root, "source"),
        date: child_text(root, "date"),
        key: child_text(root, "key"),
        infons: xml_infons(root),
        documents: elements(root, "document")
            .map(xml_document)
            .collect::<Result<_, _>>()?,
    })
}

/// XML collection rendered as canonical BioC JSON.
pub fn convert_bioc_xml_to_json(xml: &str) -> Result<String, BioCError> {
    parse_bioc_xml(xml).map(|c| to_canonical_json(&c))
}

// ---- JSON ----

fn json_err(msg: impl Into<String>) -> BioCError {
    BioCError::MalformedJson(msg.into())
}

fn json_str(v: &Value, key: &str) -> String {
    match v.get(key) {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => String::new(),
    }
}

fn json_infons(v: &Value) -> Result<Infons, BioCError> {
    match v.get("infons") {
        None | Some(Value::Null) => Ok(Infons::new()),
        Some(Value::Object(map)) => Ok(map
            .iter()
            .filter_map(|(k, v)| match v {
                Value::Null => None,
                Value::String(s) => Some((k.clone(), s.clone())),
                other => Some((k.clone(), other.to_string())),
            })
            .collect()),
        Some(_) => Err(json_err("infons is not an object")),
    }
}

fn json_u64(v: &Value, what: &str) -> Result<u64, BioCError> {
    match v {
        Value::Number(n) => n.as_u64().ok_or_else(|| {
            BioCError::SchemaViolation(format!("{what} {n} is negative or not an integer"))
        }),
        Value::String(s) => s.trim().parse().map_err(|_| {
            BioCError::SchemaViolation(format!("{what} {s:?} is not a non-negative integer"))
        }),
        _ => Err(BioCError::SchemaViolation(format!("{what} missing"))),
    }
}

fn json_array<'v>(v: &'v Value, key: &str) -> Result<&'v [Value], BioCError> {
    match v.get(key) {
        None | Some(Value::Null) => Ok(&[]),
        Some(Value::Array(a)) => Ok(a),
        Some(_) => Err(json_err(format!("{key} is not an array"))),
    }
}

fn json_annotation(v: &Value) -> Result<BioCAnnotation, BioCError> {
    Ok(BioCAnnotation {
        id: json_str(v, "id"),
        infons: json_infons(v)?,
        text: json_str(v, "text"),
        locations: json_array(v, "locations")?
            .iter()
            .map(|l| {
                Ok(BioCLocation {
                    offset: json_u64(l.get("offset").unwrap_or(&Value::Null), "location offset")?,
                    length: json_u64(l.get("length").unwrap_or(&Value::Null), "location length")?,
                })
            })
            .collect::<Result<_, BioCError>>()?,
    })
}

fn json_passage(v: &Value) -> Result<BioCPassage, BioCError> {
    Ok(BioCPassage {
        offset: json_u64(v.get("offset").unwrap_or(&Value::Null), "passage offset")?,
        text: json_str(v, "text"),
        infons: json_infons(v)?,
        annotations: json_array(v, "annotations")?
            .iter()
            .map(json_annotation)
            .collect::<Result<_, _>>()?,
    })
}

fn json_document(v: &Value) -> Result<BioCDocument, BioCError> {
    let doc = BioCDocument {
        doc_id: json_str(v, "id").trim().to_owned(),
        infons: json_infons(v)?,
        passages: json_array(v, "passages")?
            .iter()
            .map(json_passage)
            .collect::<Result<_, _>>()?,
    };
    doc.validate()?;
    Ok(doc)
}

fn json_collection(v: &Value) -> Result<BioCCollection, BioCError> {
    if !v.is_object() {
        return Err(json_err("collection is not an object"));
    }
    Ok(BioCCollection {
        source: json_str(v, "source"),
        date: json_str(v, "date"),
        key: json_str(v, "key"),
        infons: json_infons(v)?,
        documents: json_array(v, "documents")?
            .iter()
            .map(json_document)
            .collect::<Result<_, _>>()?,
    })
}

/// Parses BioC JSON: a collection object, or an array of collections as the
/// NCBI BioC service returns. Arrays are flattened into one collection.
pub fn parse_bioc_json(text: &str) -> Result<BioCCollection, BioCError> {
    let value: Value = serde_json::from_str(text).map_err(|e| json_err(e.to_string()))?;
    match &value {
        Value::Array(items) => {
            let mut merged: Option<BioCCollection> = None;
            for item in items {
                let c = json_collection(item)?;
                match &mut merged {
                    Some(m) => m.documents.extend(c.documents),
                    None => merged = Some(c),
                }
            }
            Ok(merged.unwrap_or_default())
        }
        _ => json_collection(&value),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<!DOCTYPE collection SYSTEM "BioC.dtd">
<collection><source>PubMed</source><date>20240901</date><key>collection.key</key>
<document><id>1</id><passage><infon key="type">title</infon><offset>0</offset><text>A &amp; B</text></passage></document>
</collection>"#;

    #[test]
    fn minimal_round_trip() {
        let json = convert_bioc_xml_to_json(MINIMAL).unwrap();
        assert_eq!(
            json,
            r#"{"source":"PubMed","date":"20240901","key":"collection.key","infons":{},"documents":[{"id":"1","infons":{},"passages":[{"offset":0,"infons":{"type":"title"},"text":"A & B","annotations":[]}]}]}"#
        );
        assert_eq!(
            parse_bioc_json(&json).unwrap(),
            parse_bioc_xml(MINIMAL).unwrap()
        );
    }

    #[test]
    fn zero_documents() {
        let json = convert_bioc_xml_to_json("<collection><source>s</source></collection>").unwrap();
        assert!(json.ends_with(r#""documents":[]}"#), "{json}");
    }

    #[test]
    fn rejects_non_bioc_and_broken_xml() {
        assert_eq!(
            convert_bioc_xml_to_json("<html/>"),
            Err(BioCError::NotBioC("html".into()))
        );
        assert!(matches!(
            convert_bioc_xml_to_json("<collection>"),
            Err(BioCError::MalformedXml(_))
        ));
    }

    #[test]
    fn out_of_order_passages() {
        let json = r#"{"documents":[{"id":"9","passages":[{"offset":10,"text":"b"},{"offset":3,"text":"a"}]}]}"#;
        assert!(matches!(
            parse_bioc_json(json),
            Err(BioCError::SchemaViolation(_))
        ));
        let json = r#"{"documents":[{"id":"9","passages":[{"offset":-1,"text":"a"}]}]}"#;
        assert!(matches!(
            parse_bioc_json(json),
            Err(BioCError::SchemaViolation(_))
        ));
        let json = r#"{"documents":[{"id":"","passages":[]}]}"#;
        assert!(matches!(
            parse_bioc_json(json),
            Err(BioCError::SchemaViolation(_))
        ));
    }

    #[test]
    fn service_array_form_and_loose_infons() {
        let json = r#"[{"source":"PubMed","documents":[{"id":"5","infons":{"year":2024,"note":null},"passages":[{"offset":0,"infons":{"type":"title"},"text":"t","sentences":[],"relations":[]}],"relations":[]}]}]"#;
        let c = parse_bioc_json(json).unwrap();
        assert_eq!(
            c.documents[0].infons,
            Infons::from([("year".into(), "2024".into())])
        );
        assert!(parse_bioc_json("[]").unwrap().documents.is_empty());
    }

    fn arb_offsets() -> impl Strategy<Value = Vec<i64>> {
        proptest::collection::vec(-5i64..200, 0..8)
    }

    proptest! {
        #[test]
        fn offsets_accepted_iff_strictly_increasing(offsets in arb_offsets()) {
            let passages: Vec<_> = offsets
                .iter()
                .map(|o| serde_json::json!({"offset": o, "text": "x"}))
                .collect();
            let json = serde_json::json!({"documents": [{"id": "1", "passages": passages}]}).to_string();
            let ok = offsets.iter().all(|o| *o >= 0) && offsets.windows(2).all(|w| w[0] < w[1]);
            let parsed = parse_bioc_json(&json);
            prop_assert_eq!(parsed.is_ok(), ok, "{:?} -> {:?}", offsets, parsed);
            if let Ok(c) = parsed {
                let doc = &c.documents[0];
                prop_assert!(doc.passages.windows(2).all(|w| w[0].offset < w[1].offset));
            }
        }
    }
}
