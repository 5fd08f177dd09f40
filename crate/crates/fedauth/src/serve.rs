//! Mounts a core [`Handler`] on a real HTTP listener.

use std::collections::BTreeMap;
use std::io::Write;
use std::net::{SocketAddr, TcpListener};

use anyhow::Context;
use axum::body::Bytes;
use axum::http::{header, HeaderMap, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use fedauth_core::http::{Handler, HttpRequest, Method};

/// Binds before the handler exists so callers can learn the real port
/// (for `--port 0`) and derive URLs from it.
pub fn bind(host: &str, port: u16) -> anyhow::Result<(TcpListener, SocketAddr)> {
    let listener = TcpListener::bind((host, port))
        .with_context(|| format!("StartupFailure: cannot bind {host}:{port}"))?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    Ok((listener, addr))
}

async fn dispatch(
    handler: Handler,
    method: axum::http::Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let method = match method {
        axum::http::Method::GET => Method::Get,
        axum::http::Method::POST => Method::Post,
        axum::http::Method::DELETE => Method::Delete,
        _ => return StatusCode::METHOD_NOT_ALLOWED.into_response(),
    };
    let path = uri
        .path_and_query()
        .map_or_else(|| uri.path().to_owned(), |p| p.as_str().to_owned());
    let headers: BTreeMap<String, String> = headers
        .iter()
        .filter_map(|(k, v)| Some((k.as_str().to_owned(), v.to_str().ok()?.to_owned())))
        .collect();
    let request = HttpRequest {
        method,
        path: path.clone(),
        headers,
        body: body.to_vec(),
    };
    // Handlers may block on outbound calls (JWKS fetches, token service checks).
    let resp = match tokio::task::spawn_blocking(move || handler(request)).await {
        Ok(r) => r,
        Err(e) => {
            eprintln!("handler panicked: {e}");
            return StatusCode::INTERNAL_SERVER_ERROR.into_response();
        }
    };
    eprintln!("{method} {path} {}", resp.status);
    let status = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, [(header::CONTENT_TYPE, resp.content_type)], resp.body).into_response()
}

/// Serves until Ctrl-C. The first stdout line is `listening on http://<addr>`.
pub fn run(listener: TcpListener, handler: Handler) -> anyhow::Result<()> {
    let addr = listener.local_addr()?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener)?;
        let app = Router::new().fallback(move |method, uri, headers, body| {
            dispatch(handler.clone(), method, uri, headers, body)
        });
        println!("listening on http://{addr}");
        std::io::stdout().flush()?;
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
