#![allow(dead_code)]

use pecan_core::providers::{
    AnswerRequest, DecideRequest, EmbedRequest, Embedder, ErrorBody, ErrorDetail, MockProvider, ProviderError,
    SessionProvider, SessionRequest, SummarizeRequest, Summarizer, PROTOCOL_HEADER, PROTOCOL_VERSION,
};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use tiny_http::{Header, Response, Server};

/// Canned reply that replaces the mock's answer for one request.
#[derive(Debug, Clone)]
pub struct Injected {
    pub status: u16,
    pub body: String,
    pub version: Option<&'static str>,
}

type Hook = Box<dyn FnMut(&str, &str) -> Option<Injected> + Send>;

/// Protocol server backed by an in-process [`MockProvider`].
pub struct MockServer {
    pub url: String,
    server: Arc<Server>,
    handle: Option<JoinHandle<()>>,
    pub seen_auth: Arc<Mutex<Vec<Option<String>>>>,
}

fn header(name: &str, value: &str) -> Header {
    Header::from_bytes(name.as_bytes(), value.as_bytes()).unwrap()
}

fn error_code(e: &ProviderError) -> (u16, &'static str) {
    match e {
        ProviderError::UnknownSession(_) => (404, "unknown_session"),
        ProviderError::WindowExceeded(_) => (413, "window_exceeded"),
        _ => (400, "invalid_request"),
    }
}

fn dispatch(mock: &MockProvider, method: &str, path: &str, body: &str) -> (u16, String) {
    fn ok<T: serde::Serialize>(r: Result<T, ProviderError>) -> (u16, String) {
        match r {
            Ok(v) => (200, serde_json::to_string(&v).unwrap()),
            Err(e) => {
                let (status, code) = error_code(&e);
                let body = ErrorBody {
                    error: ErrorDetail {
                        code: code.into(),
                        message: e.to_string(),
                    },
                };
                (status, serde_json::to_string(&body).unwrap())
            }
        }
    }
    fn parse<T: serde::de::DeserializeOwned>(body: &str) -> Result<T, ProviderError> {
        serde_json::from_str(body).map_err(|e| ProviderError::InvalidRequest(e.to_string()))
    }
    match (method, path) {
        ("POST", "/v1/summarize") => ok(parse::<SummarizeRequest>(body).and_then(|r| mock.summarize(&r))),
        ("POST", "/v1/session") => ok(parse::<SessionRequest>(body).and_then(|r| mock.create_session(&r))),
        ("POST", "/v1/decide") => ok(parse::<DecideRequest>(body).and_then(|r| mock.decide(&r))),
        ("POST", "/v1/answer") => ok(parse::<AnswerRequest>(body).and_then(|r| mock.answer(&r))),
        ("POST", "/v1/embed") => ok(parse::<EmbedRequest>(body).and_then(|r| mock.embed(&r))),
        ("DELETE", p) if p.starts_with("/v1/session/") => {
            ok(mock.close_session(&p["/v1/session/".len()..]).map(|_| serde_json::json!({})))
        }
        _ => (404, r#"{"error":{"code":"invalid_request","message":"no such endpoint"}}"#.into()),
    }
}

impl MockServer {
    pub fn start(mock: MockProvider) -> Self {
        Self::with_hook(mock, Box::new(|_, _| None))
    }

    pub fn with_hook(mock: MockProvider, mut hook: Hook) -> Self {
        let server = Arc::new(Server::http("127.0.0.1:0").unwrap());
        let port = server.server_addr().to_ip().unwrap().port();
        let seen_auth = Arc::new(Mutex::new(Vec::new()));
        let srv = server.clone();
        let auth = seen_auth.clone();
        let handle = std::thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                let mut body = String::new();
                req.as_reader().read_to_string(&mut body).unwrap();
                let path = req.url().to_string();
                let method = req.method().to_string();
                let bearer = req
                    .headers()
                    .iter()
                    .find(|h| h.field.equiv("Authorization"))
                    .map(|h| h.value.to_string());
                auth.lock().unwrap().push(bearer);

                let (status, text, version) = match hook(&path, &body) {
                    Some(inj) => (inj.status, inj.body, inj.version),
                    None => {
                        let (s, t) = dispatch(&mock, &method, &path, &body);
                        (s, t, Some(PROTOCOL_VERSION))
                    }
                };
                let mut resp = Response::from_string(text)
                    .with_status_code(status)
                    .with_header(header("Content-Type", "application/json"));
                if let Some(v) = version {
                    resp = resp.with_header(header(PROTOCOL_HEADER, v));
                }
                let _ = req.respond(resp);
            }
        });
        Self {
            url: format!("http://127.0.0.1:{port}"),
            server,
            handle: Some(handle),
            seen_auth,
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
