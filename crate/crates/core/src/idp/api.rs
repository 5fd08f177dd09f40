//! HTTP surface of the issuer.
//!
//! | method | path                                 | body / result                       |
//! |--------|--------------------------------------|-------------------------------------|
//! | GET    | `/.well-known/openid-configuration`  | discovery document                  |
//! | GET    | `/openid/v1/jwks`                    | public JWK set                      |
//! | POST   | `/token`                             | [`TokenRequestBody`] → [`TokenResponseBody`] |
//! | POST   | `/pods`                              | [`PodRequestBody`] → [`PodIdentity`] |
//! | DELETE | `/pods/{uid}`                        | deregisters the pod                 |
//! | POST   | `/rotate`                            | rotates the signing key             |

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{IdpError, IdpService, PodIdentity, ServiceAccount, TokenRequestSpec};
use super::{DISCOVERY_PATH, JWKS_PATH};
use crate::http::{path_segments, HttpRequest, HttpResponse, Method};
use crate::token::SignedJwt;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRequestBody {
    pub namespace: String,
    pub serviceaccount: String,
    pub pod_uid: String,
    pub audience: String,
    #[serde(default)]
    pub expiration_seconds: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenResponseBody {
    pub token: SignedJwt,
    pub expiration_timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PodRequestBody {
    pub namespace: String,
    pub serviceaccount: String,
    pub pod_name: String,
}

fn error_response(err: &IdpError) -> HttpResponse {
    let status = match err {
        IdpError::UnknownPod(_) => 404,
        IdpError::Token(_) => 500,
        _ => 400,
    };
    HttpResponse::error(status, err.kind(), &err.to_string())
}

pub fn handle(idp: &IdpService, req: &HttpRequest, now: i64) -> HttpResponse {
    let path = req.path.split('?').next().unwrap_or("");
    match (req.method, path) {
        (Method::Get, DISCOVERY_PATH) => HttpResponse::ok(&idp.serve_discovery()),
        (Method::Get, JWKS_PATH) => HttpResponse::ok(&idp.serve_jwks(now)),
        (Method::Post, "/token") => {
            let body: TokenRequestBody = match req.json() {
                Ok(b) => b,
                Err(resp) => return resp,
            };
            issue(idp, &body, now).unwrap_or_else(|e| error_response(&e))
        }
        (Method::Post, "/pods") => {
            let body: PodRequestBody = match req.json() {
                Ok(b) => b,
                Err(resp) => return resp,
            };
            ServiceAccount::new(body.namespace, body.serviceaccount)
                .and_then(|sa| idp.register_pod(sa, &body.pod_name))
                .map(|pod| HttpResponse::json(201, &pod))
                .unwrap_or_else(|e| error_response(&e))
        }
        (Method::Post, "/rotate") => match idp.rotate_key(now) {
            Ok(jwks) => HttpResponse::ok(&jwks),
            Err(e) => error_response(&e),
        },
        (Method::Delete, _) => match path_segments(path).as_slice() {
            ["pods", uid] => match idp.deregister_pod(uid) {
                Ok(pod) => HttpResponse::ok(&json!({ "deregistered": pod.pod_uid })),
                Err(e) => error_response(&e),
            },
            _ => HttpResponse::not_found(),
        },
        _ => HttpResponse::not_found(),
    }
}

/// The request names the pod and its service account; both must match the
/// registered pod, so a caller cannot mint for another account.
fn issue(idp: &IdpService, body: &TokenRequestBody, now: i64) -> Result<HttpResponse, IdpError> {
    let pod: PodIdentity = idp
        .pod(&body.pod_uid)
        .ok_or_else(|| IdpError::UnknownPod(body.pod_uid.clone()))?;
    if pod.service_account.namespace != body.namespace
        || pod.service_account.name != body.serviceaccount
    {
        return Err(IdpError::UnknownPod(body.pod_uid.clone()));
    }
    let spec = TokenRequestSpec {
        audience: body.audience.clone(),
        expiration_seconds: body.expiration_seconds,
    };
    let projected = idp.project_token(&body.pod_uid, &spec, now)?;
    Ok(HttpResponse::ok(&TokenResponseBody {
        token: projected.token,
        expiration_timestamp: projected.expiration_timestamp,
    }))
}
