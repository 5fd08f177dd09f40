//! Blocking HTTP client behind the core [`HttpTransport`] trait.

use std::time::Duration;

use fedauth_core::http::{HttpRequest, HttpResponse, HttpTransport, Method, TransportError};

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    /// Must not be called from inside an async runtime.
    pub fn new(timeout: Duration) -> anyhow::Result<Self> {
        let client = reqwest::blocking::Client::builder().timeout(timeout).build()?;
        Ok(Self { client })
    }
}

// Content types the core handlers produce; anything else is passed on as JSON.
fn content_type(value: Option<&str>) -> &'static str {
    match value {
        Some(v) if v.starts_with("text/plain") => "text/plain",
        _ => "application/json",
    }
}

impl HttpTransport for ReqwestTransport {
    fn send(&self, base_url: &str, request: HttpRequest) -> Result<HttpResponse, TransportError> {
        let url = format!("{}{}", base_url.trim_end_matches('/'), request.path);
        let method = match request.method {
            Method::Get => reqwest::Method::GET,
            Method::Post => reqwest::Method::POST,
            Method::Delete => reqwest::Method::DELETE,
        };
        let mut builder = self.client.request(method, &url);
        for (name, value) in &request.headers {
            builder = builder.header(name, value);
        }
        let resp = builder.body(request.body).send().map_err(|e| {
            if e.is_connect() {
                TransportError::Unreachable(base_url.to_owned())
            } else {
                TransportError::Io(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        let content_type = content_type(
            resp.headers()
                .get(reqwest::header::CONTENT_TYPE)
                .and_then(|v| v.to_str().ok()),
        );
        let body = resp
            .bytes()
            .map_err(|e| TransportError::Io(e.to_string()))?
            .to_vec();
        Ok(HttpResponse {
            status,
            content_type,
            body,
        })
    }
}
