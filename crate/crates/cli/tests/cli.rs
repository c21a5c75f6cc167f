use std::io::{BufRead, BufReader};
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use aries_core::mock;
use aries_service::{open_sessions, serve_on, ServiceConfig};

const HEALTHY_LOG: &str = include_str!("fixtures/healthy.events.jsonl");
const GOLDEN_TRANSCRIPT: &str = include_str!("../../core/tests/golden/transcript.txt");

fn aries(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aries"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[tokio::test]
async fn ask_matches_service_briefing() {
    let out = aries(&["ask", "--mock", "--scenario", "s2", mock::query()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stderr(&out).contains("briefing ready"));

    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        data_dir: dir.path().to_owned(),
        mock: true,
        ..ServiceConfig::default()
    };
    let sessions = open_sessions(&config).unwrap();
    let session = sessions.create(mock::query(), "s2").unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve_on(listener, sessions));
    let url = format!(
        "http://{addr}/api/sessions/{}/briefing?format=markdown",
        session.id
    );
    let mut body = None;
    for _ in 0..500 {
        let r = reqwest::get(&url).await.unwrap();
        if r.status().as_u16() == 200 {
            body = Some(r.text().await.unwrap());
            break;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        body.expect("service finished")
    );
}

#[test]
fn ask_writes_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("briefing.md");
    let out = aries(&[
        "ask",
        "--mock",
        "--out",
        path.to_str().unwrap(),
        mock::query(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    assert_eq!(
        std::fs::read_to_string(path).unwrap(),
        include_str!("../../core/tests/golden/briefing.md")
    );
}

#[test]
fn ask_usage_errors() {
    let out = aries(&["ask", "--mock"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Usage"));

    let out = aries(&["ask", "--mock", "--scenario", "s7", "mpox"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("unknown scenario s7"),
        "{}",
        stderr(&out)
    );

    let out = aries(&["ask", "--mock", "   "]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replay_healthy_log_matches_golden() {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/healthy.events.jsonl"
    );
    let out = aries(&["replay", path]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), GOLDEN_TRANSCRIPT);
}

#[test]
fn replay_truncated_log_fails() {
    let dir = tempfile::tempdir().unwrap();
    let lines: Vec<&str> = HEALTHY_LOG.lines().collect();

    let short = dir.path().join("short.jsonl");
    std::fs::write(&short, lines[..lines.len() - 3].join("\n")).unwrap();
    let out = aries(&["replay", short.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("invalid event sequence"),
        "{}",
        stderr(&out)
    );

    let cut = dir.path().join("cut.jsonl");
    std::fs::write(&cut, &HEALTHY_LOG[..HEALTHY_LOG.len() - 40]).unwrap();
    let out = aries(&["replay", cut.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 17"), "{}", stderr(&out));

    let out = aries(&["replay", dir.path().join("missing.jsonl").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scenarios_lists_four() {
    let out = aries(&["scenarios"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let ids: Vec<_> = text
        .lines()
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    assert_eq!(ids, ["s1", "s2", "s3", "s4"]);
}

#[test]
fn bad_config_path_is_usage_error() {
    for cmd in ["serve", "scenarios"] {
        let out = aries(&[cmd, "--config", "/nonexistent/aries.json"]);
        assert_eq!(out.status.code(), Some(2), "{cmd}: {}", stderr(&out));
    }
}

#[tokio::test]
async fn served_scenarios_match_cli() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("aries.json");
    std::fs::write(
        &config,
        serde_json::json!({"mock": true, "data_dir": dir.path().join("data")}).to_string(),
    )
    .unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_aries"))
        .args([
            "serve",
            "--config",
            config.to_str().unwrap(),
            "--bind",
            "127.0.0.1:0",
        ])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let addr = loop {
        let line = lines.next().expect("server printed its address").unwrap();
        if let Some(addr) = line.strip_prefix("aries: listening on ") {
            break addr.to_owned();
        }
    };
    let served = reqwest::get(format!("{addr}/api/scenarios"))
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    child.kill().unwrap();
    let _ = child.wait();

    let listed = aries(&["scenarios", "--json", "--config", config.to_str().unwrap()]);
    let served: serde_json::Value = serde_json::from_str(&served).unwrap();
    let listed: serde_json::Value = serde_json::from_slice(&listed.stdout).unwrap();
    assert_eq!(served, listed);
    assert_eq!(listed.as_array().unwrap().len(), 4);
}
