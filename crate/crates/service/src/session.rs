use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use tokio::sync::watch;

use aries_core::events::{Clock, ErrorPayload, EventPayload, EventSink, StreamEvent, SystemClock};
use aries_core::orchestrator::{Orchestrator, OrchestratorError};

use crate::store::{BriefingDoc, EventLog, SessionMeta, SessionState, Store};
use crate::ServiceError;

#[derive(Debug)]
struct Inner {
    state: SessionState,
    failure: Option<String>,
    events: Vec<StreamEvent>,
    briefing: Option<BriefingDoc>,
    /// First persistence failure; later events are dropped, not published.
    persist_error: Option<String>,
}

/// One investigation: its metadata, its published events and, once done, its briefing.
#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub query: String,
    pub scenario_id: String,
    pub created_at: DateTime<Utc>,
    inner: Mutex<Inner>,
    changed: watch::Sender<u64>,
    log: Option<EventLog>,
}

impl Session {
    fn new(
        meta: SessionMeta,
        events: Vec<StreamEvent>,
        briefing: Option<BriefingDoc>,
        log: Option<EventLog>,
    ) -> Self {
        let (changed, _) = watch::channel(0);
        Self {
            id: meta.session_id,
            query: meta.query,
            scenario_id: meta.scenario_id,
            created_at: meta.created_at,
            inner: Mutex::new(Inner {
                state: meta.state,
                failure: meta.failure,
                events,
                briefing,
                persist_error: None,
            }),
            changed,
            log,
        }
    }

    pub fn meta(&self) -> SessionMeta {
        let inner = self.inner.lock().expect("session poisoned");
        SessionMeta {
            session_id: self.id.clone(),
            query: self.query.clone(),
            scenario_id: self.scenario_id.clone(),
            created_at: self.created_at,
            state: inner.state,
            failure: inner.failure.clone(),
        }
    }

    pub fn state(&self) -> SessionState {
        self.inner.lock().expect("session poisoned").state
    }

    pub fn failure(&self) -> Option<String> {
        self.inner.lock().expect("session poisoned").failure.clone()
    }

    pub fn briefing(&self) -> Option<BriefingDoc> {
        self.inner
            .lock()
            .expect("session poisoned")
            .briefing
            .clone()
    }

    pub fn event_count(&self) -> usize {
        self.inner.lock().expect("session poisoned").events.len()
    }

    /// Published events with `seq >= from`.
    pub fn events_from(&self, from: u64) -> Vec<StreamEvent> {
        let inner = self.inner.lock().expect("session poisoned");
        let start = usize::try_from(from)
            .unwrap_or(usize::MAX)
            .min(inner.events.len());
        inner.events[start..].to_vec()
    }

    /// Ticks whenever an event is published or the state changes.
    pub fn subscribe(&self) -> watch::Receiver<u64> {
        self.changed.subscribe()
    }

    fn bump(&self) {
        self.changed.send_modify(|n| *n += 1);
    }

    /// Durably appends, then publishes. Nothing is published after a failed write.
    fn publish(&self, event: &StreamEvent) {
        let mut inner = self.inner.lock().expect("session poisoned");
        if inner.persist_error.is_some() {
            return;
        }
        if let Some(log) = &self.log {
            if let Err(e) = log.append(event) {
                tracing::error!(session = %self.id, "event log append failed: {e}");
                inner.persist_error = Some(format!("event log append failed: {e}"));
                return;
            }
        }
        inner.events.push(event.clone());
        drop(inner);
        self.bump();
    }

    fn persist_error(&self) -> Option<String> {
        self.inner
            .lock()
            .expect("session poisoned")
            .persist_error
            .clone()
    }

    fn finish(&self, state: SessionState, failure: Option<String>, briefing: Option<BriefingDoc>) {
        {
            let mut inner = self.inner.lock().expect("session poisoned");
            inner.state = state;
            inner.failure = failure;
            inner.briefing = briefing;
        }
        self.bump();
    }
}

/// Write-ahead sink handed to the orchestrator.
struct SessionSink(Arc<Session>);

impl EventSink for SessionSink {
    fn accept(&self, event: &StreamEvent) {
        self.0.publish(event);
    }
}

/// Session registry plus the shared orchestrator.
pub struct Sessions {
    orchestrator: Arc<Orchestrator>,
    store: Store,
    clock: Arc<dyn Clock>,
    map: RwLock<HashMap<String, Arc<Session>>>,
}

impl Sessions {
    /// Loads stored sessions from `store` and serves new ones with `orchestrator`.
    pub fn open(orchestrator: Orchestrator, store: Store) -> Result<Self, ServiceError> {
        let mut map = HashMap::new();
        for stored in store.load_all()? {
            let id = stored.meta.session_id.clone();
            map.insert(
                id,
                Arc::new(Session::new(
                    stored.meta,
                    stored.events,
                    stored.briefing,
                    None,
                )),
            );
        }
        Ok(Self {
            orchestrator: Arc::new(orchestrator),
            store,
            clock: Arc::new(SystemClock),
            map: RwLock::new(map),
        })
    }

    pub fn orchestrator(&self) -> &Orchestrator {
        &self.orchestrator
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn get(&self, id: &str) -> Option<Arc<Session>> {
        self.map.read().expect("registry poisoned").get(id).cloned()
    }

    /// All sessions, oldest first.
    pub fn list(&self) -> Vec<Arc<Session>> {
        let mut all: Vec<_> = self
            .map
            .read()
            .expect("registry poisoned")
            .values()
            .cloned()
            .collect();
        all.sort_by(|a, b| {
            a.created_at
                .cmp(&b.created_at)
                .then_with(|| a.id.cmp(&b.id))
        });
        all
    }

    /// Validates, registers and starts an investigation; returns without waiting for it.
    pub fn create(&self, query: &str, scenario_id: &str) -> Result<Arc<Session>, ServiceError> {
        let query = query.trim();
        if query.is_empty() {
            return Err(OrchestratorError::EmptyQuery.into());
        }
        if self.orchestrator.scenarios().get(scenario_id).is_none() {
            return Err(OrchestratorError::UnknownScenario(scenario_id.to_owned()).into());
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        let meta = SessionMeta {
            session_id: id.clone(),
            query: query.to_owned(),
            scenario_id: scenario_id.to_owned(),
            created_at: self.clock.now(),
            state: SessionState::Running,
            failure: None,
        };
        let log = self.store.create_log(&id)?;
        self.store.write_meta(&meta)?;
        let session = Arc::new(Session::new(meta, Vec::new(), None, Some(log)));
        self.map
            .write()
            .expect("registry poisoned")
            .insert(id, session.clone());

        let orchestrator = self.orchestrator.clone();
        let store = self.store.clone();
        let clock = self.clock.clone();
        let running = session.clone();
        tokio::spawn(async move {
            run(orchestrator, store, clock, running).await;
        });
        Ok(session)
    }
}

async fn run(
    orchestrator: Arc<Orchestrator>,
    store: Store,
    clock: Arc<dyn Clock>,
    session: Arc<Session>,
) {
    let sink: Arc<dyn EventSink> = Arc::new(SessionSink(session.clone()));
    let result = orchestrator
        .run_investigation(
            &session.id,
            &session.query,
            &session.scenario_id,
            vec![sink],
        )
        .await;
    let outcome = match (result, session.persist_error()) {
        (_, Some(e)) => Err(e),
        (Ok(inv), None) => {
            let doc = BriefingDoc {
                markdown: inv.briefing.to_markdown(),
                sidecar: inv.briefing.sidecar(),
            };
            store
                .write_briefing(&session.id, &doc)
                .map(|_| doc)
                .map_err(|e| format!("writing briefing failed: {e}"))
        }
        (Err(e), None) => Err(e.to_string()),
    };
    match outcome {
        Ok(doc) => {
            session.finish(SessionState::Complete, None, Some(doc));
        }
        Err(reason) => {
            tracing::error!(session = %session.id, "investigation failed: {reason}");
            let seq = session.event_count() as u64;
            let payload = EventPayload::Error(ErrorPayload {
                message: reason.clone(),
            });
            if let Ok(event) = StreamEvent::new(session.id.clone(), seq, None, payload, clock.now())
            {
                session.publish(&event);
            }
            session.finish(SessionState::Failed, Some(reason), None);
        }
    }
    if let Err(e) = store.write_meta(&session.meta()) {
        tracing::error!(session = %session.id, "writing session metadata failed: {e}");
    }
}
