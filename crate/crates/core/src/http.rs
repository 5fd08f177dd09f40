//! Transport-neutral request/response types.
//!
//! Services expose their HTTP surface as plain handler functions over these
//! types. The binary mounts them on a real server; tests and scenario runs
//! call them directly through [`HttpTransport`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Get,
    Post,
    Delete,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Get => "GET",
            Method::Post => "POST",
            Method::Delete => "DELETE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: Method,
    /// Path plus optional query, without scheme or authority.
    pub path: String,
    /// Lowercased header names.
    pub headers: BTreeMap<String, String>,
    pub body: Vec<u8>,
}

impl HttpRequest {
    pub fn get(path: impl Into<String>) -> Self {
        Self {
            method: Method::Get,
            path: path.into(),
            headers: BTreeMap::new(),
            body: Vec::new(),
        }
    }

    pub fn delete(path: impl Into<String>) -> Self {
        Self {
            method: Method::Delete,
            ..Self::get(path)
        }
    }

    pub fn post_json<T: Serialize>(path: impl Into<String>, body: &T) -> Self {
        let mut headers = BTreeMap::new();
        headers.insert("content-type".to_owned(), "application/json".to_owned());
        Self {
            method: Method::Post,
            path: path.into(),
            headers,
            body: serde_json::to_vec(body).expect("request body serializes"),
        }
    }

    pub fn with_header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.insert(name.to_ascii_lowercase(), value.into());
        self
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.get(&name.to_ascii_lowercase()).map(String::as_str)
    }

    pub fn json<T: DeserializeOwned>(&self) -> Result<T, HttpResponse> {
        serde_json::from_slice(&self.body)
            .map_err(|e| HttpResponse::error(400, "BadRequest", &format!("invalid body: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn json<T: Serialize>(status: u16, body: &T) -> Self {
        Self {
            status,
            content_type: "application/json",
            body: serde_json::to_vec(body).expect("response body serializes"),
        }
    }

    pub fn ok<T: Serialize>(body: &T) -> Self {
        Self::json(200, body)
    }

    /// Error body shape shared by every service: `{"error": kind, "message": ..}`
    /// plus an optional `cause`.
    pub fn error(status: u16, kind: &str, message: &str) -> Self {
        Self::json(status, &json!({ "error": kind, "message": message }))
    }

    pub fn not_found() -> Self {
        Self::error(404, "NotFound", "no such route")
    }

    pub fn parse<T: DeserializeOwned>(&self) -> Result<T, serde_json::Error> {
        serde_json::from_slice(&self.body)
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("connection to {0} failed")]
    Unreachable(String),
    #[error("transport failure: {0}")]
    Io(String),
}

/// Sends a request to `base_url` (scheme and authority, optionally a path
/// prefix) plus `request.path`.
pub trait HttpTransport: Send + Sync {
    fn send(&self, base_url: &str, request: HttpRequest) -> Result<HttpResponse, TransportError>;
}

/// Splits `path?query` and returns the path segments.
pub fn path_segments(path: &str) -> Vec<&str> {
    let path = path.split('?').next().unwrap_or("");
    path.split('/').filter(|s| !s.is_empty()).collect()
}

pub type Handler = Arc<dyn Fn(HttpRequest) -> HttpResponse + Send + Sync>;

#[derive(Default)]
struct Faults {
    down: bool,
    fail_next: u32,
}

/// In-memory routing table from base URL to handler, with fault injection.
#[derive(Default)]
pub struct LocalNetwork {
    routes: RwLock<BTreeMap<String, Handler>>,
    faults: Mutex<BTreeMap<String, Faults>>,
    sent: Mutex<Vec<(String, Method, String)>>,
}

impl LocalNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn mount(&self, base_url: &str, handler: Handler) {
        self.routes
            .write()
            .expect("routes lock")
            .insert(base_url.trim_end_matches('/').to_owned(), handler);
    }

    pub fn unmount(&self, base_url: &str) {
        self.routes
            .write()
            .expect("routes lock")
            .remove(base_url.trim_end_matches('/'));
    }

    /// Every request to `base_url` fails until brought back up.
    pub fn set_down(&self, base_url: &str, down: bool) {
        self.faults
            .lock()
            .expect("faults lock")
            .entry(base_url.trim_end_matches('/').to_owned())
            .or_default()
            .down = down;
    }

    /// The next `n` requests to `base_url` fail at the transport level.
    pub fn fail_next(&self, base_url: &str, n: u32) {
        self.faults
            .lock()
            .expect("faults lock")
            .entry(base_url.trim_end_matches('/').to_owned())
            .or_default()
            .fail_next = n;
    }

    /// `(base_url, method, path)` of every request that reached a handler.
    pub fn requests(&self) -> Vec<(String, Method, String)> {
        self.sent.lock().expect("sent lock").clone()
    }
}

impl HttpTransport for LocalNetwork {
    fn send(&self, base_url: &str, request: HttpRequest) -> Result<HttpResponse, TransportError> {
        let base = base_url.trim_end_matches('/');
        if let Some(f) = self.faults.lock().expect("faults lock").get_mut(base) {
            if f.down {
                return Err(TransportError::Unreachable(base.to_owned()));
            }
            if f.fail_next > 0 {
                f.fail_next -= 1;
                return Err(TransportError::Io(format!("injected failure talking to {base}")));
            }
        }
        let handler = self
            .routes
            .read()
            .expect("routes lock")
            .get(base)
            .cloned()
            .ok_or_else(|| TransportError::Unreachable(base.to_owned()))?;
        self.sent
            .lock()
            .expect("sent lock")
            .push((base.to_owned(), request.method, request.path.clone()));
        Ok(handler(request))
    }
}

/// Splits an absolute URL into `(scheme://authority, /path?query)`.
pub fn split_url(url: &str) -> Option<(&str, &str)> {
    let after_scheme = url.find("://")? + 3;
    match url[after_scheme..].find('/') {
        Some(i) => Some(url.split_at(after_scheme + i)),
        None => Some((url, "/")),
    }
}
