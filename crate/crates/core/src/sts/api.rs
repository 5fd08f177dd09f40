//! HTTP surface of the token service.
//!
//! Exchange routes:
//! `POST /v1/assume-role`, `POST /v1/token-exchange`, `POST /v1/impersonate`,
//! `POST /v1/resource/check`.
//!
//! Admin routes: `POST /v1/admin/apply` (any trust document),
//! `DELETE /v1/admin/providers/{id}`, `GET /v1/admin/audit`.
//! The admin routes carry no authentication of their own.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{CredentialPresentation, Decision, StsError, StsService, TrustDocument};
use crate::http::{HttpRequest, HttpResponse, Method};
use crate::token::SignedJwt;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumeRoleRequest {
    pub token: SignedJwt,
    pub role: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenExchangeRequest {
    pub token: SignedJwt,
    pub pool: String,
    pub provider: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImpersonateRequest {
    pub federated_token: String,
    pub account: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckAccessRequest {
    pub credential_id: String,
    pub secret: String,
    pub session_token: String,
    pub resource: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckAccessResponse {
    pub decision: Decision,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApplyRequest {
    pub document: String,
    #[serde(default)]
    pub pool: Option<String>,
}

/// Error payload: `{"error": kind, "cause": inner kind or null, "message"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default)]
    pub cause: Option<String>,
    #[serde(default)]
    pub message: String,
}

pub fn status_for(err: &StsError) -> u16 {
    match err {
        StsError::VerificationFailed(_) | StsError::ExpiredFederatedToken => 401,
        StsError::ConditionDenied(_) | StsError::MappingFailed(_) | StsError::NotAuthorized(_) => {
            403
        }
        StsError::UnknownProvider(_) | StsError::UnknownRole(_) => 404,
        StsError::DuplicateIssuer(_) => 409,
        StsError::JwksUnreachable(_) => 502,
        StsError::InvalidConfig(_) => 400,
    }
}

pub fn error_response(err: &StsError) -> HttpResponse {
    HttpResponse::json(
        status_for(err),
        &ErrorBody {
            error: err.kind().to_owned(),
            cause: err.cause().map(str::to_owned),
            message: err.to_string(),
        },
    )
}

fn respond<T: Serialize>(result: Result<T, StsError>) -> HttpResponse {
    match result {
        Ok(v) => HttpResponse::ok(&v),
        Err(e) => error_response(&e),
    }
}

macro_rules! body {
    ($req:expr) => {
        match $req.json() {
            Ok(b) => b,
            Err(resp) => return resp,
        }
    };
}

pub fn handle(sts: &StsService, req: &HttpRequest, now: i64) -> HttpResponse {
    let path = req.path.split('?').next().unwrap_or("");
    match (req.method, path) {
        (Method::Post, "/v1/assume-role") => {
            let b: AssumeRoleRequest = body!(req);
            respond(sts.assume_role_with_web_identity(&b.token, &b.role, now))
        }
        (Method::Post, "/v1/token-exchange") => {
            let b: TokenExchangeRequest = body!(req);
            respond(sts.exchange_federated_token(&b.token, &b.pool, &b.provider, now))
        }
        (Method::Post, "/v1/impersonate") => {
            let b: ImpersonateRequest = body!(req);
            respond(sts.impersonate_service_account(&b.federated_token, &b.account, now))
        }
        (Method::Post, "/v1/resource/check") => {
            let b: CheckAccessRequest = body!(req);
            let presentation = CredentialPresentation {
                credential_id: b.credential_id,
                secret: b.secret,
                session_token: b.session_token,
            };
            HttpResponse::ok(&CheckAccessResponse {
                decision: sts.check_access(&presentation, &b.resource, now),
            })
        }
        (Method::Post, "/v1/admin/apply") => {
            let b: ApplyRequest = body!(req);
            respond(
                TrustDocument::parse(&b.document, b.pool.as_deref())
                    .and_then(|doc| sts.apply_document(doc, now))
                    .map(|summary| json!({ "applied": summary })),
            )
        }
        (Method::Get, "/v1/admin/audit") => HttpResponse::ok(&sts.audit_log()),
        // Provider ids may contain '/', so the rest of the path is the id.
        (Method::Delete, _) => match path.strip_prefix("/v1/admin/providers/") {
            Some(id) if !id.is_empty() => {
                respond(sts.revoke_provider(id).map(|()| json!({ "revoked": id })))
            }
            _ => HttpResponse::not_found(),
        },
        _ => HttpResponse::not_found(),
    }
}
