//! HTTP transport used by the data-source clients.
//!
//! Clients never talk to `reqwest` directly. They go through [`HttpTransport`],
//! which has a live implementation and a fixture-backed one that replays
//! recorded bodies. The fixture transport is what `--mock` mode and the test
//! suites run on.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Get,
    Post,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Get => f.write_str("GET"),
            Method::Post => f.write_str("POST"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: Method,
    pub url: String,
    /// `application/x-www-form-urlencoded` body fields, POST only.
    pub form: Vec<(String, String)>,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        Self {
            method: Method::Get,
            url: url.into(),
            form: Vec::new(),
        }
    }

    pub fn post_form(url: impl Into<String>, form: Vec<(String, String)>) -> Self {
        Self {
            method: Method::Post,
            url: url.into(),
            form,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub content_type: Option<String>,
    pub body: String,
}

impl HttpResponse {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    /// Connection-level failure: DNS, refused, reset, timeout.
    #[error("connection to {url} failed: {reason}")]
    Connect { url: String, reason: String },
    #[error("{method} {url}: {reason}")]
    Other {
        method: Method,
        url: String,
        reason: String,
    },
}

#[async_trait]
pub trait HttpTransport: Send + Sync {
    async fn send(&self, request: HttpRequest) -> Result<HttpResponse, TransportError>;
}

/// Live transport backed by `reqwest`.
#[derive(Debug, Clone)]
pub struct ReqwestTransport {
    client: reqwest::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("aries/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| TransportError::Other {
                method: Method::Get,
                url: String::new(),
                reason: e.to_string(),
            })?;
        Ok(Self { client })
    }
}

#[async_trait]
impl HttpTransport for ReqwestTransport {
    async fn send(&self, request: HttpRequest) -> Result<HttpResponse, TransportError> {
        let builder = match request.method {
            Method::Get => self.client.get(&request.url),
            Method::Post => self.client.post(&request.url).form(&request.form),
        };
        let response = builder.send().await.map_err(|e| {
            if e.is_connect() || e.is_timeout() {
                TransportError::Connect {
                    url: request.url.clone(),
                    reason: e.to_string(),
                }
            } else {
                TransportError::Other {
                    method: request.method,
                    url: request.url.clone(),
                    reason: e.to_string(),
                }
            }
        })?;
        let status = response.status().as_u16();
        let content_type = response
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .map(str::to_owned);
        let body = response.text().await.map_err(|e| TransportError::Other {
            method: request.method,
            url: request.url.clone(),
            reason: e.to_string(),
        })?;
        Ok(HttpResponse {
            status,
            content_type,
            body,
        })
    }
}

/// What a fixture route answers with.
#[derive(Debug, Clone)]
pub enum FixtureReply {
    Body {
        status: u16,
        content_type: Option<String>,
        body: String,
    },
    /// Simulated connection failure.
    Unreachable,
}

impl FixtureReply {
    pub fn ok(content_type: &str, body: impl Into<String>) -> Self {
        FixtureReply::Body {
            status: 200,
            content_type: Some(content_type.to_owned()),
            body: body.into(),
        }
    }

    pub fn status(status: u16, body: impl Into<String>) -> Self {
        FixtureReply::Body {
            status,
            content_type: Some("text/plain".to_owned()),
            body: body.into(),
        }
    }
}

#[derive(Debug, Clone)]
struct FixtureRoute {
    method: Method,
    url_prefix: String,
    reply: FixtureReply,
    delay: Duration,
}

/// Replays recorded bodies keyed by `(method, url prefix)`.
///
/// Routes are matched longest-prefix first, so a specific article route wins
/// over a catch-all for the same endpoint. Unmatched requests answer 404.
#[derive(Debug, Clone, Default)]
pub struct FixtureTransport {
    routes: Vec<FixtureRoute>,
    latency: Duration,
    log: Arc<Mutex<Vec<HttpRequest>>>,
}

impl FixtureTransport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces the route for `(method, url_prefix)`.
    pub fn route(
        mut self,
        method: Method,
        url_prefix: impl Into<String>,
        reply: FixtureReply,
    ) -> Self {
        self.set_route(method, url_prefix, reply, Duration::ZERO);
        self
    }

    pub fn route_delayed(
        mut self,
        method: Method,
        url_prefix: impl Into<String>,
        reply: FixtureReply,
        delay: Duration,
    ) -> Self {
        self.set_route(method, url_prefix, reply, delay);
        self
    }

    /// Latency added to every reply, on top of per-route delays.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    fn set_route(
        &mut self,
        method: Method,
        url_prefix: impl Into<String>,
        reply: FixtureReply,
        delay: Duration,
    ) {
        let url_prefix = url_prefix.into();
        self.routes
            .retain(|r| !(r.method == method && r.url_prefix == url_prefix));
        self.routes.push(FixtureRoute {
            method,
            url_prefix,
            reply,
            delay,
        });
    }

    /// Every request seen so far, in arrival order.
    pub fn requests(&self) -> Vec<HttpRequest> {
        self.log.lock().expect("fixture log poisoned").clone()
    }

    fn lookup(&self, request: &HttpRequest) -> Option<&FixtureRoute> {
        self.routes
            .iter()
            .filter(|r| r.method == request.method && request.url.starts_with(&r.url_prefix))
            .max_by_key(|r| r.url_prefix.len())
    }
}

#[async_trait]
impl HttpTransport for FixtureTransport {
    async fn send(&self, request: HttpRequest) -> Result<HttpResponse, TransportError> {
        self.log
            .lock()
            .expect("fixture log poisoned")
            .push(request.clone());
        let route = self.lookup(&request).cloned();
        let delay = self.latency + route.as_ref().map_or(Duration::ZERO, |r| r.delay);
        if !delay.is_zero() {
            tokio::time::sleep(delay).await;
        }
        match route.map(|r| r.reply) {
            Some(FixtureReply::Body {
                status,
                content_type,
                body,
            }) => Ok(HttpResponse {
                status,
                content_type,
                body,
            }),
            Some(FixtureReply::Unreachable) => Err(TransportError::Connect {
                url: request.url,
                reason: "fixture marked unreachable".to_owned(),
            }),
            None => Ok(HttpResponse {
                status: 404,
                content_type: Some("text/plain".to_owned()),
                body: "no fixture".to_owned(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn longest_prefix_wins() {
        let t = FixtureTransport::new()
            .route(
                Method::Get,
                "https://a.test/items",
                FixtureReply::ok("text/plain", "all"),
            )
            .route(
                Method::Get,
                "https://a.test/items/7",
                FixtureReply::ok("text/plain", "seven"),
            );
        let r = t
            .send(HttpRequest::get("https://a.test/items/7/x"))
            .await
            .unwrap();
        assert_eq!(r.body, "seven");
        let r = t
            .send(HttpRequest::get("https://a.test/items/8"))
            .await
            .unwrap();
        assert_eq!(r.body, "all");
    }

    #[tokio::test]
    async fn unmatched_is_404_and_method_matters() {
        let t = FixtureTransport::new().route(
            Method::Post,
            "https://a.test/",
            FixtureReply::ok("text/plain", "p"),
        );
        let r = t.send(HttpRequest::get("https://a.test/")).await.unwrap();
        assert_eq!(r.status, 404);
        assert_eq!(t.requests().len(), 1);
    }

    #[tokio::test]
    async fn replacing_a_route_injects_failure() {
        let t = FixtureTransport::new()
            .route(
                Method::Get,
                "https://a.test/",
                FixtureReply::ok("text/plain", "fine"),
            )
            .route(
                Method::Get,
                "https://a.test/",
                FixtureReply::status(500, "boom"),
            );
        let r = t.send(HttpRequest::get("https://a.test/x")).await.unwrap();
        assert_eq!(r.status, 500);
    }
}
