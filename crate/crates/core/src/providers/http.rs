//! Blocking JSON-over-HTTP provider client.

use super::protocol::*;
use super::{Embedder, ProviderError, SessionProvider, Summarizer};
use reqwest::blocking::{Client, RequestBuilder};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    /// Base URL, e.g. `http://127.0.0.1:8080`.
    pub endpoint: String,
    pub bearer_token: Option<String>,
    pub timeout: Duration,
    /// Total attempts per call, including the first.
    pub max_attempts: u32,
    /// Delay before the first retry; doubles on each subsequent retry.
    pub backoff: Duration,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            bearer_token: None,
            timeout: Duration::from_secs(120),
            max_attempts: 3,
            backoff: Duration::from_millis(250),
        }
    }
}

pub struct HttpProvider {
    config: HttpConfig,
    client: Client,
    retries: AtomicU64,
    /// Serializes calls within one session.
    session_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

enum Failure {
    /// No connection could be made; retried, then reported as unreachable.
    Connect(String),
    Transient(String),
    Fatal(ProviderError),
}

impl HttpProvider {
    pub fn new(config: HttpConfig) -> Result<Self, ProviderError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ProviderError::InvalidRequest(format!("cannot build HTTP client: {e}")))?;
        Ok(Self {
            config,
            client,
            retries: AtomicU64::new(0),
            session_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    /// Retries performed so far across all calls.
    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    fn session_lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.session_locks
            .lock()
            .unwrap()
            .entry(id.to_string())
            .or_default()
            .clone()
    }

    fn prepare(&self, rb: RequestBuilder) -> RequestBuilder {
        let rb = rb.header(PROTOCOL_HEADER, PROTOCOL_VERSION);
        match &self.config.bearer_token {
            Some(token) => rb.bearer_auth(token),
            None => rb,
        }
    }

    fn attempt(&self, build: &dyn Fn() -> RequestBuilder) -> Result<Vec<u8>, Failure> {
        let resp = self.prepare(build()).send().map_err(|e| {
            if e.is_connect() {
                Failure::Connect(e.to_string())
            } else if e.is_timeout() || e.is_request() {
                Failure::Transient(e.to_string())
            } else {
                Failure::Fatal(ProviderError::Unreachable(e.to_string()))
            }
        })?;
        let status = resp.status();
        let version = resp
            .headers()
            .get(PROTOCOL_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let body = resp.bytes().map_err(|e| Failure::Transient(e.to_string()))?.to_vec();

        if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
            return Err(Failure::Transient(format!("HTTP {status}")));
        }
        if version.as_deref() != Some(PROTOCOL_VERSION) {
            return Err(Failure::Fatal(ProviderError::ProtocolMismatch {
                expected: PROTOCOL_VERSION.to_string(),
                got: version.unwrap_or_else(|| "none".to_string()),
            }));
        }
        if !status.is_success() {
            let detail = serde_json::from_slice::<ErrorBody>(&body).ok().map(|b| b.error);
            let err = match detail {
                Some(d) if d.code == "unknown_session" => ProviderError::UnknownSession(d.message),
                Some(d) if d.code == "window_exceeded" => ProviderError::WindowExceeded(d.message),
                Some(d) => ProviderError::Http {
                    status: status.as_u16(),
                    message: format!("{}: {}", d.code, d.message),
                },
                None => ProviderError::Http {
                    status: status.as_u16(),
                    message: String::from_utf8_lossy(&body).into_owned(),
                },
            };
            return Err(Failure::Fatal(err));
        }
        Ok(body)
    }

    fn call_raw(&self, what: &str, build: &dyn Fn() -> RequestBuilder) -> Result<Vec<u8>, ProviderError> {
        let attempts = self.config.max_attempts.max(1);
        let mut delay = self.config.backoff;
        let mut last = String::new();
        let mut connected = true;
        for attempt in 1..=attempts {
            (connected, last) = match self.attempt(build) {
                Ok(body) => return Ok(body),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Connect(msg)) => (false, msg),
                Err(Failure::Transient(msg)) => (true, msg),
            };
            if attempt < attempts {
                self.retries.fetch_add(1, Ordering::Relaxed);
                log::warn!("{what}: transient failure ({last}); retry {attempt} in {delay:?}");
                std::thread::sleep(delay);
                delay *= 2;
            }
        }
        if !connected {
            return Err(ProviderError::Unreachable(format!(
                "{} after {attempts} attempts: {last}",
                self.config.endpoint
            )));
        }
        Err(ProviderError::RetriesExhausted { attempts, last })
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, req: &Req) -> Result<Resp, ProviderError> {
        let url = self.url(path);
        let body = self.call_raw(path, &|| self.client.post(&url).json(req))?;
        parse(&body)
    }
}

/// Deserializes a response, turning serde's messages into schema violations.
pub(crate) fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ProviderError> {
    serde_json::from_slice(body).map_err(|e| {
        let msg = e.to_string();
        let msg = match msg.strip_prefix("missing field `") {
            Some(rest) => match rest.split_once('`') {
                Some((field, _)) => format!("{field} missing"),
                None => msg.clone(),
            },
            None => msg,
        };
        ProviderError::SchemaViolation(msg)
    })
}

impl Summarizer for HttpProvider {
    fn identity(&self) -> String {
        format!("http:{}", self.config.endpoint)
    }

    fn summarize(&self, req: &SummarizeRequest) -> Result<SummarizeResponse, ProviderError> {
        let resp: SummarizeResponse = self.post("/v1/summarize", req)?;
        resp.check(req.batch.len()).map_err(ProviderError::SchemaViolation)?;
        Ok(resp)
    }
}

impl SessionProvider for HttpProvider {
    fn create_session(&self, req: &SessionRequest) -> Result<SessionResponse, ProviderError> {
        self.post("/v1/session", req)
    }

    fn decide(&self, req: &DecideRequest) -> Result<DecideResponse, ProviderError> {
        let lock = self.session_lock(&req.session_id);
        let _guard = lock.lock().unwrap();
        let resp: DecideResponse = self.post("/v1/decide", req)?;
        resp.check(req).map_err(ProviderError::SchemaViolation)?;
        Ok(resp)
    }

    fn answer(&self, req: &AnswerRequest) -> Result<AnswerResponse, ProviderError> {
        let lock = self.session_lock(&req.session_id);
        let _guard = lock.lock().unwrap();
        self.post("/v1/answer", req)
    }

    fn close_session(&self, session_id: &str) -> Result<(), ProviderError> {
        let lock = self.session_lock(session_id);
        {
            let _guard = lock.lock().unwrap();
            let url = self.url(&format!("/v1/session/{session_id}"));
            self.call_raw("/v1/session", &|| self.client.delete(&url))?;
        }
        self.session_locks.lock().unwrap().remove(session_id);
        Ok(())
    }
}

impl Embedder for HttpProvider {
    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse, ProviderError> {
        let resp: EmbedResponse = self.post("/v1/embed", req)?;
        resp.check(req.texts.len()).map_err(ProviderError::SchemaViolation)?;
        Ok(resp)
    }
}
