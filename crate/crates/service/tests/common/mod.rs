#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use aries_core::events::StreamEvent;
use aries_service::client::FrameParser;
use aries_service::{router, AppState, ServiceConfig, Sessions, Store};
use futures::StreamExt;

pub struct TestServer {
    pub addr: SocketAddr,
    pub sessions: Arc<Sessions>,
    pub http: reqwest::Client,
}

pub fn mock_config(data_dir: &Path, latency_ms: u64) -> ServiceConfig {
    ServiceConfig {
        data_dir: data_dir.to_owned(),
        mock: true,
        mock_latency_ms: latency_ms,
        ..ServiceConfig::default()
    }
}

pub async fn start(config: &ServiceConfig) -> TestServer {
    let sessions = Arc::new(
        Sessions::open(
            config.build_orchestrator().unwrap(),
            Store::open(&config.data_dir).unwrap(),
        )
        .unwrap(),
    );
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(AppState {
        sessions: sessions.clone(),
    });
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    TestServer {
        addr,
        sessions,
        http: reqwest::Client::new(),
    }
}

impl TestServer {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    pub async fn post_json(&self, path: &str, body: serde_json::Value) -> (u16, serde_json::Value) {
        let r = self
            .http
            .post(self.url(path))
            .header("content-type", "application/json")
            .body(body.to_string())
            .send()
            .await
            .unwrap();
        let status = r.status().as_u16();
        (
            status,
            serde_json::from_str(&r.text().await.unwrap()).unwrap(),
        )
    }

    pub async fn get(&self, path: &str) -> (u16, String) {
        let r = self.http.get(self.url(path)).send().await.unwrap();
        (r.status().as_u16(), r.text().await.unwrap())
    }

    pub async fn create(&self, query: &str, scenario: &str) -> String {
        let (status, body) = self
            .post_json(
                "/api/sessions",
                serde_json::json!({"query": query, "scenario_id": scenario}),
            )
            .await;
        assert_eq!(status, 200, "{body}");
        body["session_id"].as_str().unwrap().to_owned()
    }

    /// Reads the stream to its end, or until `stop_after` seq has been parsed.
    pub async fn read_events(
        &self,
        id: &str,
        last_event_id: Option<u64>,
        stop_after: Option<u64>,
    ) -> Vec<StreamEvent> {
        let mut req = self
            .http
            .get(self.url(&format!("/api/sessions/{id}/events")));
        if let Some(last) = last_event_id {
            req = req.header("last-event-id", last.to_string());
        }
        let resp = req.send().await.unwrap();
        assert_eq!(resp.status().as_u16(), 200);
        let mut body = resp.bytes_stream();
        let mut parser = FrameParser::new();
        let mut events = Vec::new();
        while let Some(chunk) = body.next().await {
            let chunk = chunk.unwrap();
            for frame in parser.push(std::str::from_utf8(&chunk).unwrap()) {
                let event = StreamEvent::from_json_line(&frame.data).unwrap();
                assert_eq!(frame.id.as_deref(), Some(event.seq().to_string().as_str()));
                let seq = event.seq();
                events.push(event);
                if stop_after == Some(seq) {
                    // dropping the body closes the connection mid-stream
                    return events;
                }
            }
        }
        events
    }

    pub async fn wait_complete(&self, id: &str) -> String {
        for _ in 0..500 {
            let (status, body) = self.get(&format!("/api/sessions/{id}/briefing")).await;
            if status != 409 {
                return body;
            }
            tokio::time::sleep(std::time::Duration::from_millis(10)).await;
        }
        panic!("session {id} did not finish");
    }
}
