//! One directory per data root; per session an append-only event log, a
//! metadata file and, once complete, the briefing markdown and its sidecar.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use aries_core::events::StreamEvent;
use aries_core::report::BriefingSidecar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionState {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    pub query: String,
    pub scenario_id: String,
    pub created_at: DateTime<Utc>,
    pub state: SessionState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Rendered briefing as served and stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BriefingDoc {
    pub markdown: String,
    #[serde(flatten)]
    pub sidecar: BriefingSidecar,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path} line {line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
}

/// Append handle for one session's log. Each event is flushed and synced
/// before `append` returns.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl EventLog {
    pub fn create(path: PathBuf) -> io::Result<Self> {
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, event: &StreamEvent) -> io::Result<()> {
        let mut line = event.to_json_line();
        line.push('\n');
        let mut file = self.file.lock().expect("event log poisoned");
        file.write_all(line.as_bytes())?;
        file.sync_data()
    }
}

/// Reads a log written by [`EventLog`]. Blank lines are skipped.
pub fn read_log(path: &Path) -> Result<Vec<StreamEvent>, LogError> {
    let display = || path.display().to_string();
    let file = File::open(path).map_err(|source| LogError::Io {
        path: display(),
        source,
    })?;
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LogError::Io {
            path: display(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let event = StreamEvent::from_json_line(&line).map_err(|e| LogError::Malformed {
            path: display(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

/// A session found on disk at startup.
#[derive(Debug)]
pub struct StoredSession {
    pub meta: SessionMeta,
    pub events: Vec<StreamEvent>,
    pub briefing: Option<BriefingDoc>,
}

fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

impl Store {
    pub fn open(data_dir: &Path) -> io::Result<Self> {
        let root = data_dir.join("sessions");
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn log_path(&self, session_id: &str) -> PathBuf {
        self.root.join(format!("{session_id}.events.jsonl"))
    }

    fn meta_path(&self, session_id: &str) -> PathBuf {
        self.root.join(format!("{session_id}.meta.json"))
    }

    pub fn briefing_paths(&self, session_id: &str) -> (PathBuf, PathBuf) {
        (
            self.root.join(format!("{session_id}.briefing.md")),
            self.root.join(format!("{session_id}.briefing.json")),
        )
    }

    pub fn create_log(&self, session_id: &str) -> io::Result<EventLog> {
        EventLog::create(self.log_path(session_id))
    }

    pub fn write_meta(&self, meta: &SessionMeta) -> io::Result<()> {
        let json = serde_json::to_vec_pretty(meta).expect("meta serializes");
        write_atomic(&self.meta_path(&meta.session_id), &json)
    }

    pub fn write_briefing(&self, session_id: &str, doc: &BriefingDoc) -> io::Result<()> {
        let (md, json) = self.briefing_paths(session_id);
        write_atomic(&md, doc.markdown.as_bytes())?;
        let sidecar = serde_json::to_vec_pretty(&doc.sidecar).expect("sidecar serializes");
        write_atomic(&json, &sidecar)
    }

    fn read_briefing(&self, session_id: &str) -> Option<BriefingDoc> {
        let (md, json) = self.briefing_paths(session_id);
        let markdown = fs::read_to_string(md).ok()?;
        let sidecar = serde_json::from_str(&fs::read_to_string(json).ok()?).ok()?;
        Some(BriefingDoc { markdown, sidecar })
    }

    /// Every session with a readable metadata file. A session still marked
    /// running was interrupted by a restart and comes back as failed.
    pub fn load_all(&self) -> io::Result<Vec<StoredSession>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let path = entry?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            let Some(id) = name.strip_suffix(".meta.json") else {
                continue;
            };
            let meta: SessionMeta = match fs::read_to_string(&path)
                .map_err(|e| e.to_string())
                .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
            {
                Ok(m) => m,
                Err(e) => {
                    tracing::warn!(session = id, "skipping unreadable session metadata: {e}");
                    continue;
                }
            };
            let events = match read_log(&self.log_path(id)) {
                Ok(events) => events,
                Err(e) => {
                    tracing::warn!(session = id, "skipping session with unreadable log: {e}");
                    continue;
                }
            };
            let mut meta = meta;
            let mut briefing = None;
            match meta.state {
                SessionState::Complete => {
                    briefing = self.read_briefing(id);
                    if briefing.is_none() {
                        meta.state = SessionState::Failed;
                        meta.failure = Some("briefing files missing".into());
                    }
                }
                SessionState::Running => {
                    meta.state = SessionState::Failed;
                    meta.failure = Some("interrupted by service restart".into());
                }
                SessionState::Failed => {}
            }
            out.push(StoredSession {
                meta,
                events,
                briefing,
            });
        }
        out.sort_by_key(|s| s.meta.created_at);
        Ok(out)
    }
}
