//! Workload side of the federated exchange.
//!
//! The client obtains an audience-bound token from its local issuer, trades
//! it at the token service for a native credential, drops the token, and
//! uses the credential until it comes within the refresh margin of expiry.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::http::{HttpRequest, HttpResponse, HttpTransport, TransportError};
use crate::idp::api::{TokenRequestBody, TokenResponseBody};
use crate::resource::{data_path, presentation_headers};
use crate::sts::api::{
    AssumeRoleRequest, CheckAccessRequest, CheckAccessResponse, ErrorBody, ImpersonateRequest,
    TokenExchangeRequest,
};
use crate::sts::{Decision, FederatedToken, NativeCredential, MAX_CREDENTIAL_LIFETIME};
use crate::token::SignedJwt;

pub const DEFAULT_REFRESH_MARGIN: i64 = 60;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkloadError {
    #[error("Token acquisition failed: {0}")]
    TokenAcquisitionFailed(String),
    #[error("Exchange failed: {}", describe_exchange(*.status, .kind))]
    ExchangeFailed { status: Option<u16>, kind: String },
    #[error("resource unavailable: {0}")]
    ResourceUnavailable(String),
    #[error("invalid workload config: {0}")]
    InvalidConfig(String),
}

fn describe_exchange(status: Option<u16>, kind: &str) -> String {
    match status {
        Some(s) => format!("status {s}, {kind}"),
        None => format!("no response, {kind}"),
    }
}

impl WorkloadError {
    pub fn kind(&self) -> &'static str {
        match self {
            WorkloadError::TokenAcquisitionFailed(_) => "TokenAcquisitionFailed",
            WorkloadError::ExchangeFailed { .. } => "ExchangeFailed",
            WorkloadError::ResourceUnavailable(_) => "ResourceUnavailable",
            WorkloadError::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PodReference {
    pub namespace: String,
    pub serviceaccount: String,
    pub pod_uid: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowKind {
    AssumeRole {
        role: String,
    },
    /// Token exchange at a pool provider, then impersonation of
    /// `service_account`, performed as one step.
    PoolExchange {
        pool: String,
        provider: String,
        service_account: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetDescriptor {
    pub sts_endpoint: String,
    pub audience: String,
    pub flow: FlowKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub pod: PodReference,
    pub idp_endpoint: String,
    pub target: TargetDescriptor,
    #[serde(default)]
    pub token_ttl: Option<i64>,
    #[serde(default = "default_margin")]
    pub refresh_margin: i64,
    /// Resource server for `access_resource`; without one the token
    /// service's check endpoint is asked directly.
    #[serde(default)]
    pub resource_endpoint: Option<String>,
}

fn default_margin() -> i64 {
    DEFAULT_REFRESH_MARGIN
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: String| Err(WorkloadError::InvalidConfig(m));
        // Issued tokens live at least this long, so credentials do too
        // unless the token is already old when exchanged.
        let min_lifetime = self
            .token_ttl
            .unwrap_or(crate::idp::DEFAULT_TTL)
            .clamp(crate::idp::DEFAULT_MIN_TTL, MAX_CREDENTIAL_LIFETIME);
        if self.refresh_margin < 0 || self.refresh_margin >= min_lifetime {
            return bad(format!(
                "refresh_margin {} must be in [0, {min_lifetime})",
                self.refresh_margin
            ));
        }
        if self.target.audience.is_empty() {
            return bad("target audience is empty".into());
        }
        Ok(())
    }

    pub fn parse_yaml(text: &str) -> Result<Self, WorkloadError> {
        let cfg: Self = serde_yaml::from_str(text)
            .map_err(|e| WorkloadError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StateDump {
    pub config: WorkloadConfig,
    pub cached_credential: Option<NativeCredential>,
    pub exchanges: u64,
}

pub struct WorkloadClient {
    config: WorkloadConfig,
    transport: Arc<dyn HttpTransport>,
    clock: Arc<dyn Clock>,
    cache: Mutex<Option<NativeCredential>>,
    exchanges: AtomicU64,
}

fn denial_kind(resp: &HttpResponse) -> String {
    match resp.parse::<ErrorBody>() {
        Ok(ErrorBody {
            error,
            cause: Some(c),
            ..
        }) => format!("{error}:{c}"),
        Ok(body) => body.error,
        Err(_) => "Unknown".into(),
    }
}

impl WorkloadClient {
    pub fn new(
        config: WorkloadConfig,
        transport: Arc<dyn HttpTransport>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, WorkloadError> {
        config.validate()?;
        Ok(Self {
            config,
            transport,
            clock,
            cache: Mutex::new(None),
            exchanges: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &WorkloadConfig {
        &self.config
    }

    /// Number of completed or attempted exchanges.
    pub fn exchange_count(&self) -> u64 {
        self.exchanges.load(Ordering::SeqCst)
    }

    pub fn get_oidc_token(&self) -> Result<SignedJwt, WorkloadError> {
        let pod = &self.config.pod;
        let body = TokenRequestBody {
            namespace: pod.namespace.clone(),
            serviceaccount: pod.serviceaccount.clone(),
            pod_uid: pod.pod_uid.clone(),
            audience: self.config.target.audience.clone(),
            expiration_seconds: self.config.token_ttl,
        };
        let failed = |m: String| WorkloadError::TokenAcquisitionFailed(m);
        let resp = self
            .transport
            .send(&self.config.idp_endpoint, HttpRequest::post_json("/token", &body))
            .map_err(|e| failed(e.to_string()))?;
        if resp.status != 200 {
            return Err(failed(format!("issuer answered {}", resp.status)));
        }
        let token = resp
            .parse::<TokenResponseBody>()
            .map(|b| b.token)
            .map_err(|e| failed(e.to_string()))?;
        if token.as_str().is_empty() {
            return Err(failed("issuer returned no token".into()));
        }
        Ok(token)
    }

    /// One retry on transport failure; denials are returned as they come.
    fn post(&self, path: &str, body: &impl Serialize) -> Result<HttpResponse, WorkloadError> {
        let endpoint = &self.config.target.sts_endpoint;
        let send = || self.transport.send(endpoint, HttpRequest::post_json(path, body));
        let resp = send()
            .or_else(|_: TransportError| send())
            .map_err(|e| WorkloadError::ExchangeFailed {
                status: None,
                kind: format!("Transport: {e}"),
            })?;
        if resp.status != 200 {
            return Err(WorkloadError::ExchangeFailed {
                status: Some(resp.status),
                kind: denial_kind(&resp),
            });
        }
        Ok(resp)
    }

    fn parse<T: serde::de::DeserializeOwned>(resp: &HttpResponse) -> Result<T, WorkloadError> {
        resp.parse().map_err(|e| WorkloadError::ExchangeFailed {
            status: Some(resp.status),
            kind: format!("MalformedResponse: {e}"),
        })
    }

    pub fn federated_exchange(&self) -> Result<NativeCredential, WorkloadError> {
        let token = self.get_oidc_token()?;
        self.exchanges.fetch_add(1, Ordering::SeqCst);
        // The identity token is moved into the request body and dropped
        // with it.
        match &self.config.target.flow {
            FlowKind::AssumeRole { role } => {
                let resp = self.post(
                    "/v1/assume-role",
                    &AssumeRoleRequest {
                        token,
                        role: role.clone(),
                    },
                )?;
                Self::parse(&resp)
            }
            FlowKind::PoolExchange {
                pool,
                provider,
                service_account,
            } => {
                let resp = self.post(
                    "/v1/token-exchange",
                    &TokenExchangeRequest {
                        token,
                        pool: pool.clone(),
                        provider: provider.clone(),
                    },
                )?;
                let federated: FederatedToken = Self::parse(&resp)?;
                let resp = self.post(
                    "/v1/impersonate",
                    &ImpersonateRequest {
                        federated_token: federated.access_token,
                        account: service_account.clone(),
                    },
                )?;
                Self::parse(&resp)
            }
        }
    }

    /// A credential with more than the refresh margin left, exchanging for
    /// a new one when needed. Refreshes are serialized.
    pub fn credential(&self) -> Result<NativeCredential, WorkloadError> {
        let mut cache = self.cache.lock().expect("credential cache");
        let now = self.clock.now();
        if let Some(c) = cache.as_ref() {
            if now < c.expires_at - self.config.refresh_margin {
                return Ok(c.clone());
            }
        }
        *cache = None;
        let fresh = self.federated_exchange()?;
        if now < fresh.expires_at - self.config.refresh_margin {
            *cache = Some(fresh.clone());
        }
        Ok(fresh)
    }

    pub fn access_resource(&self, label: &str) -> Result<Decision, WorkloadError> {
        let cred = self.credential()?;
        let presentation = cred.presentation();
        let unavailable = |e: TransportError| WorkloadError::ResourceUnavailable(e.to_string());
        match &self.config.resource_endpoint {
            Some(endpoint) => {
                let req = presentation_headers(HttpRequest::get(data_path(label)), &presentation);
                let resp = self.transport.send(endpoint, req).map_err(unavailable)?;
                match resp.status {
                    200 => Ok(Decision::Allow),
                    403 => Ok(Decision::Deny),
                    s => Err(WorkloadError::ResourceUnavailable(format!("resource answered {s}"))),
                }
            }
            None => {
                let body = CheckAccessRequest {
                    credential_id: presentation.credential_id,
                    secret: presentation.secret,
                    session_token: presentation.session_token,
                    resource: label.to_owned(),
                };
                let resp = self
                    .transport
                    .send(
                        &self.config.target.sts_endpoint,
                        HttpRequest::post_json("/v1/resource/check", &body),
                    )
                    .map_err(unavailable)?;
                resp.parse::<CheckAccessResponse>()
                    .map(|r| r.decision)
                    .map_err(|e| WorkloadError::ResourceUnavailable(e.to_string()))
            }
        }
    }

    pub fn invalidate(&self) {
        *self.cache.lock().expect("credential cache") = None;
    }

    pub fn state_dump(&self) -> StateDump {
        StateDump {
            config: self.config.clone(),
            cached_credential: self.cache.lock().expect("credential cache").clone(),
            exchanges: self.exchange_count(),
        }
    }
}
