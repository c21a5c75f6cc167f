mod common;

use aries_core::events::{normalized_transcript, validate_sequence, EventKind};
use aries_core::mock;
use aries_service::store::read_log;
use aries_service::{ServiceConfig, SessionMeta, SessionState, Store};
use common::{mock_config, start};
use serde_json::{json, Value};

#[tokio::test]
async fn create_validation() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(&mock_config(dir.path(), 0)).await;
    let (status, body) = srv
        .post_json("/api/sessions", json!({"query": "  ", "scenario_id": "s1"}))
        .await;
    assert_eq!((status, body["error"].as_str()), (400, Some("EmptyQuery")));
    let (status, body) = srv
        .post_json(
            "/api/sessions",
            json!({"query": "mpox", "scenario_id": "s9"}),
        )
        .await;
    assert_eq!(
        (status, body["error"].as_str()),
        (404, Some("UnknownScenario"))
    );
    assert!(body["message"].as_str().unwrap().contains("s9"));
}

#[tokio::test]
async fn full_trace_then_briefing() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(&mock_config(dir.path(), 0)).await;
    let id = srv.create(mock::query(), "s1").await;
    let events = srv.read_events(&id, None, None).await;
    validate_sequence(&events).unwrap();
    assert_eq!(events.last().unwrap().kind(), EventKind::SourcesListed);

    let briefing: Value = serde_json::from_str(&srv.wait_complete(&id).await).unwrap();
    assert_eq!(briefing["degraded"], false);
    assert_eq!(
        briefing["metrics"]["source_count"],
        briefing["sources"].as_array().unwrap().len()
    );
    let (status, md) = srv
        .get(&format!("/api/sessions/{id}/briefing?format=markdown"))
        .await;
    assert_eq!(status, 200);
    assert_eq!(md, briefing["markdown"].as_str().unwrap());

    // write-ahead: the log on disk is exactly what subscribers saw
    let logged = read_log(&srv.sessions.store().log_path(&id)).unwrap();
    assert_eq!(
        normalized_transcript(&logged),
        normalized_transcript(&events)
    );
    let (md_path, json_path) = srv.sessions.store().briefing_paths(&id);
    assert_eq!(std::fs::read_to_string(md_path).unwrap(), md);
    assert!(std::fs::read_to_string(json_path)
        .unwrap()
        .contains("\"source_count\""));

    // replay of a finished session starts wherever asked
    let tail = srv.read_events(&id, Some(10), None).await;
    assert_eq!(tail.first().unwrap().seq(), 11);
    assert_eq!(tail.len(), events.len() - 11);
}

#[tokio::test]
async fn running_session_is_not_ready() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(&mock_config(dir.path(), 300)).await;
    let id = srv.create(mock::query(), "s2").await;
    let (status, body) = srv.get(&format!("/api/sessions/{id}/briefing")).await;
    assert_eq!(status, 409, "{body}");
    assert!(body.contains("NotReady"));
    srv.wait_complete(&id).await;
}

#[tokio::test]
async fn unknown_session() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(&mock_config(dir.path(), 0)).await;
    assert_eq!(srv.get("/api/sessions/nope/events").await.0, 404);
    assert_eq!(srv.get("/api/sessions/nope/briefing").await.0, 404);
    let r = srv
        .http
        .get(srv.url("/api/sessions/nope/events"))
        .header("last-event-id", "abc")
        .send()
        .await
        .unwrap();
    assert_eq!(r.status().as_u16(), 404);
}

#[tokio::test]
async fn bad_last_event_id() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(&mock_config(dir.path(), 0)).await;
    let id = srv.create(mock::query(), "s1").await;
    let r = srv
        .http
        .get(srv.url(&format!("/api/sessions/{id}/events")))
        .header("last-event-id", "abc")
        .send()
        .await
        .unwrap();
    assert_eq!(r.status().as_u16(), 400);
}

#[tokio::test]
async fn scenario_listing() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(&mock_config(dir.path(), 0)).await;
    let (_, body) = srv.get("/api/scenarios").await;
    let list: Vec<Value> = serde_json::from_str(&body).unwrap();
    let ids: Vec<_> = list.iter().map(|s| s["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["s1", "s2", "s3", "s4"]);
    assert_eq!(list[2]["manager"]["temperature_fixed"], true);

    let custom = tempfile::tempdir().unwrap();
    std::fs::write(
        custom.path().join("solo.json"),
        r#"{"name": "solo", "manager": {"model_id": "m", "temperature": 0.2},
            "agents": {"medical_scientist": {"model_id": "a", "temperature": 0.2},
                       "cdc_analyst": {"model_id": "a", "temperature": 0.2},
                       "who_officer": {"model_id": "a", "temperature": 0.2}}}"#,
    )
    .unwrap();
    let cfg = ServiceConfig {
        scenario_dir: Some(custom.path().to_owned()),
        ..mock_config(dir.path(), 0)
    };
    let (_, body) = start(&cfg).await.get("/api/scenarios").await;
    let list: Vec<Value> = serde_json::from_str(&body).unwrap();
    assert_eq!(list.len(), 1);
    assert_eq!(list[0]["id"], "solo");

    let empty = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig {
        scenario_dir: Some(empty.path().to_owned()),
        ..mock_config(dir.path(), 0)
    };
    assert_eq!(start(&cfg).await.get("/api/scenarios").await.1, "[]");
}

#[tokio::test]
async fn concurrent_sessions_stay_separate() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(&mock_config(dir.path(), 2)).await;
    let mut ids = Vec::new();
    for s in ["s1", "s2", "s3", "s4", "s1", "s2"] {
        ids.push(srv.create(mock::query(), s).await);
    }
    let traces =
        futures::future::join_all(ids.iter().map(|id| srv.read_events(id, None, None))).await;
    let first = normalized_transcript(&traces[0]).replace(&ids[0], "X");
    for (id, trace) in ids.iter().zip(&traces) {
        validate_sequence(trace).unwrap();
        assert!(trace.iter().all(|e| e.session_id() == id));
        assert_eq!(
            normalized_transcript(trace).replace(id.as_str(), "X"),
            first
        );
    }
    let (_, body) = srv.get("/api/sessions").await;
    let list: Vec<Value> = serde_json::from_str(&body).unwrap();
    assert_eq!(list.len(), ids.len());
}

#[tokio::test]
async fn restart_restores_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mock_config(dir.path(), 0);
    let srv = start(&cfg).await;
    let id = srv.create(mock::query(), "s1").await;
    let before = srv.read_events(&id, None, None).await;
    let briefing = srv.wait_complete(&id).await;

    // a session that was mid-run when the process died
    let store = Store::open(dir.path()).unwrap();
    store.create_log("interrupted").unwrap();
    store
        .write_meta(&SessionMeta {
            session_id: "interrupted".into(),
            query: "q".into(),
            scenario_id: "s1".into(),
            created_at: chrono::Utc::now(),
            state: SessionState::Running,
            failure: None,
        })
        .unwrap();

    let srv2 = start(&cfg).await;
    let after = srv2.read_events(&id, None, None).await;
    assert_eq!(
        normalized_transcript(&after),
        normalized_transcript(&before)
    );
    assert_eq!(
        srv2.get(&format!("/api/sessions/{id}/briefing")).await.1,
        briefing
    );

    let (status, body) = srv2.get("/api/sessions/interrupted/briefing").await;
    assert_eq!(status, 410);
    assert!(body.contains("interrupted"));
}
