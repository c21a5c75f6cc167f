//! Resumable server-sent event streams over a session's event list.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::response::Response;
use bytes::Bytes;
use futures::stream::{self, Stream};
use tokio::sync::watch;

use aries_core::events::serialize_sse;

use crate::session::Session;
use crate::store::SessionState;

const KEEP_ALIVE: Duration = Duration::from_secs(15);

/// First seq to send. A `Last-Event-ID` header takes precedence over `from_seq`
/// because a reconnecting browser repeats the original URL.
pub fn resume_point(last_event_id: Option<&str>, from_seq: Option<u64>) -> Result<u64, String> {
    match last_event_id.map(str::trim) {
        Some(raw) => raw
            .parse::<u64>()
            .map(|id| id.saturating_add(1))
            .map_err(|_| format!("Last-Event-ID must be a decimal seq, got {raw:?}")),
        None => Ok(from_seq.unwrap_or(0)),
    }
}

struct Cursor {
    session: Arc<Session>,
    next: u64,
    changes: watch::Receiver<u64>,
    done: bool,
}

/// Replays events from `from`, then follows the session until it finishes.
///
/// Each item is one or more complete SSE frames; a comment line is sent when
/// the session has been quiet for a while so proxies keep the connection.
pub fn event_stream(
    session: Arc<Session>,
    from: u64,
) -> impl Stream<Item = Result<Bytes, Infallible>> + Send {
    let changes = session.subscribe();
    let cursor = Cursor {
        session,
        next: from,
        changes,
        done: false,
    };
    stream::unfold(cursor, |mut c| async move {
        if c.done {
            return None;
        }
        loop {
            // mark seen before reading so a publish in between still wakes us
            c.changes.borrow_and_update();
            // read the state first: every event is published before the
            // session finishes, so a terminal state means the batch is final
            let finished = c.session.state() != SessionState::Running;
            let batch = c.session.events_from(c.next);
            if let Some(last) = batch.last() {
                c.next = last.seq() + 1;
                c.done = finished;
                let frames: String = batch.iter().map(serialize_sse).collect();
                return Some((Ok(Bytes::from(frames)), c));
            }
            if finished {
                return None;
            }
            match tokio::time::timeout(KEEP_ALIVE, c.changes.changed()).await {
                Ok(Ok(())) => {}
                Ok(Err(_)) => return None,
                Err(_) => return Some((Ok(Bytes::from_static(b": keep-alive\n\n")), c)),
            }
        }
    })
}

pub(crate) fn response(
    stream: impl Stream<Item = Result<Bytes, Infallible>> + Send + 'static,
) -> Response {
    Response::builder()
        .header("content-type", "text/event-stream")
        .header("cache-control", "no-cache")
        .header("x-accel-buffering", "no")
        .body(Body::from_stream(stream))
        .expect("static headers are valid")
}
