//! Mock protected resource: `GET /data/<label>` answers 200 when the
//! presented credential may read `label`, 403 otherwise.

use percent_encoding::{percent_decode_str, utf8_percent_encode, NON_ALPHANUMERIC};
use serde_json::json;

use crate::http::{HttpRequest, HttpResponse, HttpTransport, Method};
use crate::sts::api::{CheckAccessRequest, CheckAccessResponse};
use crate::sts::{CredentialPresentation, Decision};

pub const CREDENTIAL_ID_HEADER: &str = "x-fedauth-credential-id";
pub const SECRET_HEADER: &str = "x-fedauth-secret";
pub const SESSION_TOKEN_HEADER: &str = "x-fedauth-session-token";

/// Request path for `label`; labels may contain '/' and ':'.
pub fn data_path(label: &str) -> String {
    format!("/data/{}", utf8_percent_encode(label, NON_ALPHANUMERIC))
}

fn label_of(req: &HttpRequest) -> Option<String> {
    let path = req.path.split('?').next()?;
    let raw = path.strip_prefix("/data/").filter(|l| !l.is_empty())?;
    percent_decode_str(raw).decode_utf8().ok().map(|l| l.into_owned())
}

pub fn presentation_headers(req: HttpRequest, p: &CredentialPresentation) -> HttpRequest {
    req.with_header(CREDENTIAL_ID_HEADER, p.credential_id.clone())
        .with_header(SECRET_HEADER, p.secret.clone())
        .with_header(SESSION_TOKEN_HEADER, p.session_token.clone())
}

fn presentation_from(req: &HttpRequest) -> Option<CredentialPresentation> {
    Some(CredentialPresentation {
        credential_id: req.header(CREDENTIAL_ID_HEADER)?.to_owned(),
        secret: req.header(SECRET_HEADER)?.to_owned(),
        session_token: req.header(SESSION_TOKEN_HEADER)?.to_owned(),
    })
}

/// `check` decides access; it is usually [`sts_checker`] or a direct call
/// into an in-process token service.
pub fn handle(
    req: &HttpRequest,
    check: &dyn Fn(&CredentialPresentation, &str) -> Decision,
) -> HttpResponse {
    let label = match (req.method, label_of(req)) {
        (Method::Get, Some(label)) => label,
        _ => return HttpResponse::not_found(),
    };
    let allowed = presentation_from(req).is_some_and(|p| check(&p, &label) == Decision::Allow);
    if allowed {
        HttpResponse::ok(&json!({ "resource": label, "data": format!("contents of {label}") }))
    } else {
        HttpResponse::error(403, "AccessDenied", &format!("access to {label} denied"))
    }
}

/// Asks a remote token service's check endpoint. Any failure denies.
pub fn sts_checker<'a>(
    transport: &'a dyn HttpTransport,
    sts_endpoint: &'a str,
) -> impl Fn(&CredentialPresentation, &str) -> Decision + 'a {
    move |p, label| {
        let body = CheckAccessRequest {
            credential_id: p.credential_id.clone(),
            secret: p.secret.clone(),
            session_token: p.session_token.clone(),
            resource: label.to_owned(),
        };
        transport
            .send(sts_endpoint, HttpRequest::post_json("/v1/resource/check", &body))
            .ok()
            .filter(|r| r.status == 200)
            .and_then(|r| r.parse::<CheckAccessResponse>().ok())
            .map_or(Decision::Deny, |r| r.decision)
    }
}
