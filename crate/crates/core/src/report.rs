//! Final briefing rendering and the report metrics (words, sources).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::orchestrator::{AgentFinding, ContradictionFlag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    #[serde(rename = "WHO")]
    Who,
    #[serde(rename = "CDC")]
    Cdc,
    #[serde(rename = "PubMed")]
    PubMed,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Who => "WHO",
            Origin::Cdc => "CDC",
            Origin::PubMed => "PubMed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCitation {
    pub url: String,
    pub title: String,
    pub origin: Origin,
}

impl SourceCitation {
    pub fn new(url: impl Into<String>, title: impl Into<String>, origin: Origin) -> Self {
        Self {
            url: url.into(),
            title: title.into(),
            origin,
        }
    }
}

/// True when `url` has a scheme and a non-empty host.
pub fn is_absolute_url(url: &str) -> bool {
    let Some((scheme, rest)) = url.split_once("://") else {
        return false;
    };
    let scheme_ok = scheme
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic())
        && scheme
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'));
    let host = rest.split(['/', '?', '#']).next().unwrap_or("");
    scheme_ok && !host.is_empty() && !host.contains(char::is_whitespace)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMetrics {
    pub words: usize,
    pub source_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub heading: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Briefing {
    pub query: String,
    pub sections: Vec<Section>,
    pub sources: Vec<SourceCitation>,
    pub metrics: ReportMetrics,
    pub degraded: bool,
}

/// JSON sidecar written next to the markdown file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BriefingSidecar {
    pub query: String,
    pub degraded: bool,
    pub metrics: ReportMetrics,
    pub sources: Vec<SourceCitation>,
}

impl Briefing {
    pub fn to_markdown(&self) -> String {
        render_markdown(&self.query, &self.sections)
    }

    pub fn sidecar(&self) -> BriefingSidecar {
        BriefingSidecar {
            query: self.query.clone(),
            degraded: self.degraded,
            metrics: self.metrics,
            sources: self.sources.clone(),
        }
    }

    pub fn sidecar_json(&self) -> String {
        serde_json::to_string_pretty(&self.sidecar()).expect("sidecar serializes")
    }
}

fn render_markdown(query: &str, sections: &[Section]) -> String {
    let mut out = String::from("# ARIES Briefing\n\n");
    let _ = writeln!(out, "**Query:** {}\n", query.trim());
    for section in sections {
        let _ = writeln!(out, "## {}\n", section.heading);
        let body = section.body.trim_end();
        if !body.is_empty() {
            let _ = writeln!(out, "{body}\n");
        }
    }
    let trimmed = out.trim_end().len();
    out.truncate(trimmed);
    out.push('\n');
    out
}

/// What goes into the Summary section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Synthesis {
    /// Text written by the manager model.
    Model(String),
    /// The model was unavailable; the summary is assembled from findings.
    Degraded { reason: String },
}

pub const NO_CONTRADICTIONS: &str = "No contradictions detected.";

/// Renders the briefing sections and computes its metrics.
///
/// Section order is fixed: Summary, one `<role> Findings` section per finding,
/// Risk Assessment, Sources.
pub fn render_briefing(
    query: &str,
    findings: &[AgentFinding],
    flags: &[ContradictionFlag],
    synthesis: &Synthesis,
) -> Briefing {
    let mut sections = Vec::with_capacity(findings.len() + 3);
    let mut degraded = findings.iter().any(AgentFinding::is_degraded);

    let summary = match synthesis {
        Synthesis::Model(text) => text.trim().to_owned(),
        Synthesis::Degraded { reason } => {
            degraded = true;
            mechanical_summary(findings, reason)
        }
    };
    sections.push(Section {
        heading: "Summary".to_owned(),
        body: summary,
    });

    for finding in findings {
        sections.push(Section {
            heading: format!("{} Findings", finding.role),
            body: finding_body(finding),
        });
    }

    sections.push(Section {
        heading: "Risk Assessment".to_owned(),
        body: risk_body(flags),
    });

    let sources = dedupe_sources(findings.iter().flat_map(|f| f.citations.iter().cloned()));
    sections.push(Section {
        heading: "Sources".to_owned(),
        body: sources_body(&sources),
    });

    let words = word_count(&render_markdown(query, &sections));
    let source_count = sources.len();
    Briefing {
        query: query.to_owned(),
        sections,
        sources,
        metrics: ReportMetrics {
            words,
            source_count,
        },
        degraded,
    }
}

fn mechanical_summary(findings: &[AgentFinding], reason: &str) -> String {
    let mut out =
        format!("_Degraded synthesis: {reason}. Findings are listed without model synthesis._\n");
    for f in findings {
        let first = f
            .summary
            .lines()
            .find(|l| !l.trim().is_empty())
            .unwrap_or("")
            .trim();
        let _ = write!(out, "\n- **{}:** {}", f.role, first);
    }
    out
}

fn finding_body(f: &AgentFinding) -> String {
    let mut out = format!("**Risk signal:** {}", f.risk_signal.level);
    if !f.risk_signal.basis.is_empty() {
        let _ = write!(out, " ({})", f.risk_signal.basis);
    }
    out.push_str("\n\n");
    out.push_str(f.summary.trim());
    out
}

fn risk_body(flags: &[ContradictionFlag]) -> String {
    if flags.is_empty() {
        return NO_CONTRADICTIONS.to_owned();
    }
    let mut out = String::new();
    for flag in flags {
        let _ = writeln!(out, "- **Contradiction:** {}", flag.note);
    }
    out
}

fn sources_body(sources: &[SourceCitation]) -> String {
    if sources.is_empty() {
        return "No sources were collected.".to_owned();
    }
    let mut out = String::new();
    for (i, s) in sources.iter().enumerate() {
        let title = if s.title.trim().is_empty() {
            s.url.as_str()
        } else {
            s.title.trim()
        };
        let _ = writeln!(
            out,
            "{}. [{}]({}) ({})",
            i + 1,
            title.replace(['[', ']'], ""),
            s.url,
            s.origin.as_str()
        );
    }
    out
}

/// Counts maximal non-whitespace runs.
///
/// Before counting, the `(url)` part of markdown links is removed and so is
/// a leading ATX heading marker (up to three spaces, one to six `#`, then
/// whitespace or end of line).
pub fn word_count(markdown: &str) -> usize {
    markdown
        .split('\n')
        .map(|line| {
            strip_link_urls(strip_heading_marker(line))
                .split_whitespace()
                .count()
        })
        .sum()
}

fn strip_heading_marker(line: &str) -> &str {
    let indent = line.len() - line.trim_start_matches(' ').len();
    if indent > 3 {
        return line;
    }
    let rest = &line[indent..];
    let hashes = rest.len() - rest.trim_start_matches('#').len();
    if !(1..=6).contains(&hashes) {
        return line;
    }
    let after = &rest[hashes..];
    match after.chars().next() {
        None => "",
        Some(c) if c == ' ' || c == '\t' => &after[1..],
        Some(_) => line,
    }
}

fn strip_link_urls(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut rest = line;
    while let Some(at) = rest.find("](") {
        let tail = &rest[at + 2..];
        match tail.find(')') {
            Some(close) => {
                out.push_str(&rest[..=at]);
                rest = &tail[close + 1..];
            }
            None => break,
        }
    }
    out.push_str(rest);
    out
}

/// Normalized form used to compare citation URLs: scheme and host
/// lowercased, fragment dropped, trailing `/` stripped.
pub fn normalize_url(url: &str) -> String {
    let without_fragment = url.split('#').next().unwrap_or("");
    let normalized = match without_fragment.split_once("://") {
        Some((scheme, rest)) => {
            let host_end = rest.find(['/', '?']).unwrap_or(rest.len());
            let (host, tail) = rest.split_at(host_end);
            format!(
                "{}://{}{}",
                scheme.to_ascii_lowercase(),
                host.to_ascii_lowercase(),
                tail
            )
        }
        None => without_fragment.to_owned(),
    };
    normalized.trim_end_matches('/').to_owned()
}

/// Drops citations whose normalized URL was already seen; first one wins.
pub fn dedupe_sources(citations: impl IntoIterator<Item = SourceCitation>) -> Vec<SourceCitation> {
    let mut seen = std::collections::HashSet::new();
    citations
        .into_iter()
        .filter(|c| seen.insert(normalize_url(&c.url)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::{RiskLevel, RiskSignal};
    use std::time::Duration;

    fn cite(url: &str) -> SourceCitation {
        SourceCitation::new(url, "t", Origin::Who)
    }

    #[test]
    fn word_count_basics() {
        assert_eq!(word_count(""), 0);
        assert_eq!(word_count("two words"), 2);
        assert_eq!(word_count("## Heading here"), 2);
        assert_eq!(word_count("see [the report](https://a.test/x y) now"), 4);
        assert_eq!(word_count("#hashtag stays"), 2);
        assert_eq!(word_count("####### seven"), 2);
        assert_eq!(word_count("##"), 0);
        assert_eq!(word_count("    # indented code"), 3);
        assert_eq!(word_count("a](unterminated"), 1);
    }

    #[test]
    fn normalize_rules() {
        assert_eq!(
            normalize_url("HTTPS://WHO.int/News/"),
            "https://who.int/News"
        );
        assert_eq!(normalize_url("https://a.test/x#frag"), "https://a.test/x");
        assert_eq!(normalize_url("https://a.test/?q=1"), "https://a.test/?q=1");
    }

    #[test]
    fn dedupe_first_wins() {
        let a = cite("https://a.test/x");
        assert_eq!(dedupe_sources([a.clone(), a.clone()]), vec![a.clone()]);
        let mut upper = cite("HTTPS://A.TEST/x/#top");
        upper.title = "other".into();
        assert_eq!(dedupe_sources([a.clone(), upper]), vec![a]);
    }

    #[test]
    fn absolute_urls() {
        assert!(is_absolute_url("https://www.who.int/x"));
        assert!(!is_absolute_url("/emergencies/x"));
        assert!(!is_absolute_url("https:///x"));
        assert!(!is_absolute_url("1http://a"));
    }

    fn finding(id: &str, role: &str, level: RiskLevel, urls: &[&str]) -> AgentFinding {
        AgentFinding {
            agent_id: id.into(),
            role: role.into(),
            summary: format!("{role} summary text."),
            citations: urls.iter().map(|u| cite(u)).collect(),
            risk_signal: RiskSignal {
                level,
                basis: String::new(),
            },
            tool_calls_made: 1,
            failure: None,
            elapsed: Duration::ZERO,
        }
    }

    #[test]
    fn empty_briefing() {
        let b = render_briefing("q", &[], &[], &Synthesis::Model("Nothing found.".into()));
        let headings: Vec<_> = b.sections.iter().map(|s| s.heading.as_str()).collect();
        assert_eq!(headings, ["Summary", "Risk Assessment", "Sources"]);
        assert_eq!(b.sections[1].body, NO_CONTRADICTIONS);
        assert!(b.sources.is_empty());
        assert!(b.metrics.words > 0);
        assert!(!b.degraded);
    }

    #[test]
    fn flag_is_listed_with_roles_and_levels() {
        let f = [
            finding(
                "who",
                "WHO Intelligence Officer",
                RiskLevel::Low,
                &["https://who.test/1"],
            ),
            finding(
                "cdc",
                "CDC Data Analyst",
                RiskLevel::Spike,
                &["https://cdc.test/1"],
            ),
        ];
        let flags = crate::orchestrator::verify(&f, &Default::default());
        let b = render_briefing("q", &f, &flags, &Synthesis::Model("s".into()));
        let risk = &b.sections[3].body;
        for needle in [
            "WHO Intelligence Officer",
            "CDC Data Analyst",
            "Low",
            "Spike",
        ] {
            assert!(risk.contains(needle), "{needle} missing from {risk}");
        }
    }

    #[test]
    fn source_count_matches_rendered_entries() {
        let f = [
            finding(
                "a",
                "A",
                RiskLevel::Unknown,
                &["https://x.test/1", "https://x.test/2"],
            ),
            finding(
                "b",
                "B",
                RiskLevel::Unknown,
                &["https://X.test/1/", "https://x.test/3"],
            ),
        ];
        let b = render_briefing("q", &f, &[], &Synthesis::Model("s".into()));
        let md = b.to_markdown();
        let sources = md.split("## Sources").nth(1).unwrap();
        let entries = sources
            .lines()
            .filter(|l| {
                l.split_once(". ")
                    .is_some_and(|(n, _)| n.parse::<usize>().is_ok())
            })
            .count();
        assert_eq!(entries, 3);
        assert_eq!(b.metrics.source_count, 3);
        assert_eq!(b.metrics.words, word_count(&md));
    }

    #[test]
    fn degraded_synthesis_marks_briefing() {
        let f = [finding("a", "A", RiskLevel::Unknown, &[])];
        let b = render_briefing(
            "q",
            &f,
            &[],
            &Synthesis::Degraded {
                reason: "gateway down".into(),
            },
        );
        assert!(b.degraded);
        assert!(b.sections[0].body.contains("Degraded synthesis"));
        assert!(b.sections[0].body.contains("**A:** A summary text."));
    }
}
