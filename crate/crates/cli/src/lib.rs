//! The `aries` command line: run an investigation, replay a stored session,
//! list scenarios or start the HTTP service.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use aries_core::events::{
    normalized_transcript, validate_sequence, EventPayload, EventSink, StreamEvent,
};
use aries_service::store::{read_log, LogError};
use aries_service::{open_sessions, scenario_summaries, serve_on, ScenarioSummary, ServiceConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "aries",
    version,
    about = "Multi-agent epidemiological surveillance briefings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one investigation; events go to stderr, the briefing to stdout.
    Ask {
        query: String,
        #[arg(long, default_value = "s1")]
        scenario: String,
        /// Scripted models and recorded fixtures instead of live services.
        #[arg(long)]
        mock: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the briefing here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a stored event log with timestamps normalized and check its order.
    Replay { file: PathBuf },
    /// List the configured scenarios.
    Scenarios {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mock: bool,
        /// Same JSON as `GET /api/scenarios`.
        #[arg(long)]
        json: bool,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mock: bool,
        /// Overrides the configured listen address.
        #[arg(long)]
        bind: Option<String>,
    },
}

fn load_config(path: Option<&Path>, mock: bool) -> Result<ServiceConfig, String> {
    let mut config = match path {
        Some(p) => ServiceConfig::load(p).map_err(|e| e.to_string())?,
        None => ServiceConfig::default(),
    };
    config.mock |= mock;
    Ok(config)
}

/// One terminal line per event.
pub fn describe(event: &StreamEvent) -> String {
    let agent = event.agent_id().unwrap_or("manager");
    let body = match event.payload() {
        EventPayload::Thought(p) => format!("thought: {}", p.text),
        EventPayload::IntentIdentified(p) => {
            format!("intent: {} (agents: {})", p.intent, p.agents.join(", "))
        }
        EventPayload::DelegationIssued(p) => format!("delegated to {}: {}", p.role, p.instruction),
        EventPayload::ToolInvoked(p) => format!("calls {} {}", p.tool, p.arguments),
        EventPayload::ToolCompleted(p) if p.ok => {
            format!("{} returned {} citation(s)", p.tool, p.citations)
        }
        EventPayload::ToolCompleted(p) => format!("{} failed: {}", p.tool, p.detail),
        EventPayload::FindingReceived(p) if p.degraded => {
            format!("finding (degraded): {}", p.summary)
        }
        EventPayload::FindingReceived(p) => {
            format!(
                "finding: risk {} after {} tool call(s)",
                p.risk_level, p.tool_calls_made
            )
        }
        EventPayload::VerificationNote(p) => format!("verification: {}", p.text),
        EventPayload::FinalBriefing(p) => format!(
            "briefing ready: {} words, {} sources{}",
            p.metrics.words,
            p.metrics.source_count,
            if p.degraded { " (degraded)" } else { "" }
        ),
        EventPayload::SourcesListed(p) => format!("{} source(s) listed", p.sources.len()),
        EventPayload::Error(p) => format!("error: {}", p.message),
    };
    format!("[{:>3}] {agent:<18} {body}", event.seq())
}

struct StderrSink;

impl EventSink for StderrSink {
    fn accept(&self, event: &StreamEvent) {
        eprintln!("{}", describe(event));
    }
}

pub async fn run(cli: Cli) -> u8 {
    match cli.command {
        Command::Ask {
            query,
            scenario,
            mock,
            config,
            out,
        } => ask(&query, &scenario, mock, config.as_deref(), out.as_deref()).await,
        Command::Replay { file } => replay(&file),
        Command::Scenarios { config, mock, json } => scenarios(config.as_deref(), mock, json),
        Command::Serve { config, mock, bind } => serve(config.as_deref(), mock, bind).await,
    }
}

async fn ask(
    query: &str,
    scenario: &str,
    mock: bool,
    config: Option<&Path>,
    out: Option<&Path>,
) -> u8 {
    let config = match load_config(config, mock) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_USAGE, &e),
    };
    let orchestrator = match config.build_orchestrator() {
        Ok(o) => o,
        Err(e) => return fail(EXIT_USAGE, &e.to_string()),
    };
    if query.trim().is_empty() {
        return fail(EXIT_USAGE, "query is empty");
    }
    if orchestrator.scenarios().get(scenario).is_none() {
        let known: Vec<_> = orchestrator
            .scenarios()
            .iter()
            .map(|s| s.id.as_str())
            .collect();
        return fail(
            EXIT_USAGE,
            &format!("unknown scenario {scenario} (known: {})", known.join(", ")),
        );
    }
    let session_id = format!("cli-{}", std::process::id());
    let sinks: Vec<Arc<dyn EventSink>> = vec![Arc::new(StderrSink)];
    let investigation = match orchestrator
        .run_investigation(&session_id, query, scenario, sinks)
        .await
    {
        Ok(i) => i,
        Err(e) => return fail(EXIT_FAILED, &format!("investigation failed: {e}")),
    };
    let markdown = investigation.briefing.to_markdown();
    let written = match out {
        Some(path) => {
            std::fs::write(path, &markdown).map_err(|e| format!("writing {}: {e}", path.display()))
        }
        None => to_stdout(&markdown),
    };
    match written {
        Ok(()) => EXIT_OK,
        Err(e) => fail(EXIT_FAILED, &e),
    }
}

fn replay(file: &Path) -> u8 {
    let events = match read_log(file) {
        Ok(events) => events,
        Err(e @ LogError::Io { .. }) => return fail(EXIT_USAGE, &e.to_string()),
        Err(e) => return fail(EXIT_FAILED, &e.to_string()),
    };
    if let Err(e) = to_stdout(&normalized_transcript(&events)) {
        return fail(EXIT_FAILED, &e);
    }
    match validate_sequence(&events) {
        Ok(()) => EXIT_OK,
        Err(v) => fail(EXIT_FAILED, &format!("invalid event sequence: {v}")),
    }
}

fn scenarios(config: Option<&Path>, mock: bool, json: bool) -> u8 {
    let set = match load_config(config, mock).and_then(|c| c.scenarios().map_err(|e| e.to_string()))
    {
        Ok(s) => s,
        Err(e) => return fail(EXIT_USAGE, &e),
    };
    let summaries = scenario_summaries(&set);
    let text = if json {
        serde_json::to_string_pretty(&summaries).expect("summaries serialize") + "\n"
    } else {
        summaries.iter().map(scenario_line).collect()
    };
    match to_stdout(&text) {
        Ok(()) => EXIT_OK,
        Err(e) => fail(EXIT_FAILED, &e),
    }
}

fn scenario_line(s: &ScenarioSummary) -> String {
    let mut agents: Vec<String> = s
        .agents
        .values()
        .map(|c| format!("{}@{:.1}", c.model_id, c.temperature))
        .collect();
    agents.sort();
    agents.dedup();
    let fixed = if s.manager.temperature_fixed {
        " (fixed temperature)"
    } else {
        ""
    };
    format!(
        "{:<4} {:<40} manager {}@{:.1}, agents {}{fixed}\n",
        s.id,
        s.name,
        s.manager.model_id,
        s.manager.temperature,
        agents.join(", ")
    )
}

async fn serve(config: Option<&Path>, mock: bool, bind: Option<String>) -> u8 {
    let mut config = match load_config(config, mock) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_USAGE, &e),
    };
    if let Some(bind) = bind {
        config.bind = bind;
    }
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let sessions = match open_sessions(&config) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_USAGE, &e.to_string()),
    };
    let listener = match tokio::net::TcpListener::bind(&config.bind).await {
        Ok(l) => l,
        Err(e) => return fail(EXIT_FAILED, &format!("binding {}: {e}", config.bind)),
    };
    match listener.local_addr() {
        Ok(addr) => eprintln!("aries: listening on http://{addr}"),
        Err(e) => return fail(EXIT_FAILED, &e.to_string()),
    }
    match serve_on(listener, sessions).await {
        Ok(()) => EXIT_OK,
        Err(e) => fail(EXIT_FAILED, &e.to_string()),
    }
}

/// A reader closing the pipe early (`aries replay log | head`) is not an error.
fn to_stdout(text: &str) -> Result<(), String> {
    use std::io::{ErrorKind, Write};
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(format!("writing stdout: {e}")),
        _ => Ok(()),
    }
}

fn fail(code: u8, message: &str) -> u8 {
    eprintln!("aries: {message}");
    code
}
