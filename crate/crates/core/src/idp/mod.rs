//! Source-side identity provider: issues bound, audience-scoped
//! service-account tokens and publishes OIDC discovery and JWKS documents.

pub mod api;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Mutex, RwLock};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::token::{
    Algorithm, ClaimValue, IssuerKeystore, JwkSet, JwtClaims, SignedJwt, TokenError,
};

pub const DEFAULT_MIN_TTL: i64 = 600;
pub const DEFAULT_MAX_TTL: i64 = 86_400;
pub const DEFAULT_TTL: i64 = 3600;
pub const JWKS_PATH: &str = "/openid/v1/jwks";
pub const DISCOVERY_PATH: &str = "/.well-known/openid-configuration";
pub const DEFAULT_MOUNT_PATH: &str = "/var/run/secrets/tokens";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdpError {
    #[error("invalid name {0:?}: must be a lowercase DNS label")]
    InvalidName(String),
    #[error("unknown pod {0}")]
    UnknownPod(String),
    #[error("audience is empty")]
    AudienceEmpty,
    #[error("bound tokens carry exactly one audience")]
    MultipleAudiences,
    #[error(transparent)]
    Token(#[from] TokenError),
}

impl IdpError {
    pub fn kind(&self) -> &'static str {
        match self {
            IdpError::InvalidName(_) => "InvalidName",
            IdpError::UnknownPod(_) => "UnknownPod",
            IdpError::AudienceEmpty => "AudienceEmpty",
            IdpError::MultipleAudiences => "MultipleAudiences",
            IdpError::Token(_) => "TokenError",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdpConfig {
    pub issuer: String,
    #[serde(default = "default_min_ttl")]
    pub min_ttl: i64,
    #[serde(default = "default_max_ttl")]
    pub max_ttl: i64,
    #[serde(default = "default_ttl")]
    pub default_ttl: i64,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    /// Retired keys stay published this long; defaults to twice `max_ttl`.
    #[serde(default)]
    pub key_overlap: Option<i64>,
    /// When set, pods whose service account is bound to an IAM role get
    /// `arn` and `account` claims in the style of an assumed-role session.
    #[serde(default)]
    pub aws_account_id: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

fn default_min_ttl() -> i64 {
    DEFAULT_MIN_TTL
}
fn default_max_ttl() -> i64 {
    DEFAULT_MAX_TTL
}
fn default_ttl() -> i64 {
    DEFAULT_TTL
}
fn default_algorithm() -> Algorithm {
    Algorithm::ES256
}

impl IdpConfig {
    pub fn new(issuer: impl Into<String>) -> Self {
        Self {
            issuer: issuer.into(),
            min_ttl: DEFAULT_MIN_TTL,
            max_ttl: DEFAULT_MAX_TTL,
            default_ttl: DEFAULT_TTL,
            algorithm: Algorithm::ES256,
            key_overlap: None,
            aws_account_id: None,
            seed: 0,
        }
    }

    pub fn clamp_ttl(&self, requested: Option<i64>) -> i64 {
        requested
            .unwrap_or(self.default_ttl)
            .clamp(self.min_ttl, self.max_ttl)
    }

    pub fn jwks_uri(&self) -> String {
        format!("{}{JWKS_PATH}", self.issuer.trim_end_matches('/'))
    }
}

fn is_dns_label(s: &str) -> bool {
    let bytes = s.as_bytes();
    !bytes.is_empty()
        && bytes.len() <= 63
        && bytes
            .iter()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || *b == b'-')
        && bytes[0] != b'-'
        && bytes[bytes.len() - 1] != b'-'
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ServiceAccount {
    pub namespace: String,
    pub name: String,
}

impl ServiceAccount {
    pub fn new(namespace: impl Into<String>, name: impl Into<String>) -> Result<Self, IdpError> {
        let sa = Self {
            namespace: namespace.into(),
            name: name.into(),
        };
        for part in [&sa.namespace, &sa.name] {
            if !is_dns_label(part) {
                return Err(IdpError::InvalidName(part.clone()));
            }
        }
        Ok(sa)
    }

    pub fn subject(&self) -> String {
        format!("system:serviceaccount:{}:{}", self.namespace, self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PodIdentity {
    pub service_account: ServiceAccount,
    pub pod_name: String,
    pub pod_uid: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRequestSpec {
    pub audience: String,
    #[serde(default)]
    pub expiration_seconds: Option<i64>,
}

impl TokenRequestSpec {
    pub fn new(audience: impl Into<String>, expiration_seconds: i64) -> Self {
        Self {
            audience: audience.into(),
            expiration_seconds: Some(expiration_seconds),
        }
    }
}

/// Token as handed to the pod through its projected volume.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectedToken {
    pub token: SignedJwt,
    pub path: String,
    pub expiration_timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub jwt_id: String,
    pub pod_uid: String,
    pub audience: String,
    pub issued_at: i64,
    pub expires_at: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscoveryDocument {
    pub issuer: String,
    pub jwks_uri: String,
    pub response_types_supported: Vec<String>,
    pub subject_types_supported: Vec<String>,
    pub id_token_signing_alg_values_supported: Vec<String>,
}

#[derive(Default)]
struct Registry {
    pods: BTreeMap<String, PodIdentity>,
    ever_issued_uids: BTreeSet<String>,
    role_bindings: BTreeMap<ServiceAccount, String>,
}

pub struct IdpService {
    config: IdpConfig,
    keystore: IssuerKeystore,
    registry: RwLock<Registry>,
    audit: Mutex<Vec<IssueRecord>>,
    uid_rng: Mutex<ChaCha20Rng>,
}

impl IdpService {
    /// Creates the issuer with one active signing key.
    pub fn new(config: IdpConfig, now: i64) -> Result<Self, IdpError> {
        let overlap = config.key_overlap.unwrap_or(2 * config.max_ttl);
        let keystore = IssuerKeystore::new(config.algorithm, overlap, config.seed);
        keystore.rotate(now)?;
        Ok(Self {
            uid_rng: Mutex::new(ChaCha20Rng::seed_from_u64(config.seed ^ 0x706f_6473)),
            config,
            keystore,
            registry: RwLock::new(Registry::default()),
            audit: Mutex::new(Vec::new()),
        })
    }

    pub fn config(&self) -> &IdpConfig {
        &self.config
    }

    pub fn issuer(&self) -> &str {
        &self.config.issuer
    }

    fn fresh_uid(&self, taken: &BTreeSet<String>) -> String {
        let mut rng = self.uid_rng.lock().expect("uid rng");
        loop {
            let mut b = [0u8; 16];
            rng.fill_bytes(&mut b);
            b[6] = (b[6] & 0x0f) | 0x40;
            b[8] = (b[8] & 0x3f) | 0x80;
            let h = hex::encode(b);
            let uid = format!("{}-{}-{}-{}-{}", &h[..8], &h[8..12], &h[12..16], &h[16..20], &h[20..]);
            if !taken.contains(&uid) {
                return uid;
            }
        }
    }

    pub fn register_pod(
        &self,
        service_account: ServiceAccount,
        pod_name: &str,
    ) -> Result<PodIdentity, IdpError> {
        let service_account =
            ServiceAccount::new(service_account.namespace, service_account.name)?;
        if pod_name.is_empty()
            || pod_name.len() > 253
            || !pod_name.split('.').all(is_dns_label)
        {
            return Err(IdpError::InvalidName(pod_name.to_owned()));
        }
        let mut registry = self.registry.write().expect("registry lock");
        let pod_uid = self.fresh_uid(&registry.ever_issued_uids);
        registry.ever_issued_uids.insert(pod_uid.clone());
        let pod = PodIdentity {
            service_account,
            pod_name: pod_name.to_owned(),
            pod_uid: pod_uid.clone(),
        };
        registry.pods.insert(pod_uid, pod.clone());
        Ok(pod)
    }

    /// Outstanding tokens for the pod stay valid until they expire.
    pub fn deregister_pod(&self, pod_uid: &str) -> Result<PodIdentity, IdpError> {
        self.registry
            .write()
            .expect("registry lock")
            .pods
            .remove(pod_uid)
            .ok_or_else(|| IdpError::UnknownPod(pod_uid.to_owned()))
    }

    pub fn pod(&self, pod_uid: &str) -> Option<PodIdentity> {
        self.registry
            .read()
            .expect("registry lock")
            .pods
            .get(pod_uid)
            .cloned()
    }

    /// Binds a service account to an IAM role name, surfaced as `arn` and
    /// `account` claims when the issuer has an account id configured.
    pub fn bind_role(&self, service_account: ServiceAccount, role: &str) {
        self.registry
            .write()
            .expect("registry lock")
            .role_bindings
            .insert(service_account, role.to_owned());
    }

    pub fn issue_bound_token(
        &self,
        pod_uid: &str,
        spec: &TokenRequestSpec,
        now: i64,
    ) -> Result<SignedJwt, IdpError> {
        if spec.audience.is_empty() {
            return Err(IdpError::AudienceEmpty);
        }
        // Holding the registry read lock across minting serializes issuance
        // against registration changes.
        let registry = self.registry.read().expect("registry lock");
        let pod = registry
            .pods
            .get(pod_uid)
            .ok_or_else(|| IdpError::UnknownPod(pod_uid.to_owned()))?;
        let ttl = self.config.clamp_ttl(spec.expiration_seconds);
        let sa = &pod.service_account;

        let mut sa_claim = BTreeMap::new();
        sa_claim.insert("name".to_owned(), ClaimValue::from(sa.name.as_str()));
        let mut pod_claim = BTreeMap::new();
        pod_claim.insert("name".to_owned(), ClaimValue::from(pod.pod_name.as_str()));
        pod_claim.insert("uid".to_owned(), ClaimValue::from(pod.pod_uid.as_str()));
        let mut k8s = BTreeMap::new();
        k8s.insert("namespace".to_owned(), ClaimValue::from(sa.namespace.as_str()));
        k8s.insert("serviceaccount".to_owned(), ClaimValue::Map(sa_claim));
        k8s.insert("pod".to_owned(), ClaimValue::Map(pod_claim));
        let mut extra = BTreeMap::new();
        extra.insert("kubernetes".to_owned(), ClaimValue::Map(k8s));
        if let (Some(account), Some(role)) =
            (&self.config.aws_account_id, registry.role_bindings.get(sa))
        {
            extra.insert(
                "arn".to_owned(),
                ClaimValue::String(format!(
                    "arn:aws:sts::{account}:assumed-role/{role}/{}",
                    sa.name
                )),
            );
            extra.insert("account".to_owned(), ClaimValue::from(account.as_str()));
        }

        let claims = JwtClaims {
            issuer: self.config.issuer.clone(),
            subject: sa.subject(),
            audience: vec![spec.audience.clone()],
            issued_at: now,
            expires_at: now + ttl,
            not_before: Some(now),
            jwt_id: self.keystore.fresh_jwt_id(),
            extra,
        };
        let token = self.keystore.mint(&claims)?;
        self.audit.lock().expect("audit lock").push(IssueRecord {
            jwt_id: claims.jwt_id,
            pod_uid: pod.pod_uid.clone(),
            audience: spec.audience.clone(),
            issued_at: now,
            expires_at: now + ttl,
        });
        Ok(token)
    }

    /// Token plus the file path it would be mounted at inside the pod.
    pub fn project_token(
        &self,
        pod_uid: &str,
        spec: &TokenRequestSpec,
        now: i64,
    ) -> Result<ProjectedToken, IdpError> {
        let token = self.issue_bound_token(pod_uid, spec, now)?;
        Ok(ProjectedToken {
            token,
            path: format!("{DEFAULT_MOUNT_PATH}/token"),
            expiration_timestamp: now + self.config.clamp_ttl(spec.expiration_seconds),
        })
    }

    pub fn serve_discovery(&self) -> DiscoveryDocument {
        DiscoveryDocument {
            issuer: self.config.issuer.clone(),
            jwks_uri: self.config.jwks_uri(),
            response_types_supported: vec!["id_token".into()],
            subject_types_supported: vec!["public".into()],
            id_token_signing_alg_values_supported: vec![self.config.algorithm.to_string()],
        }
    }

    pub fn serve_jwks(&self, now: i64) -> JwkSet {
        self.keystore.jwks(now)
    }

    pub fn rotate_key(&self, now: i64) -> Result<JwkSet, IdpError> {
        Ok(self.keystore.rotate(now)?.1)
    }

    pub fn active_key_id(&self) -> Option<String> {
        self.keystore.active_key_id()
    }

    pub fn audit_log(&self) -> Vec<IssueRecord> {
        self.audit.lock().expect("audit lock").clone()
    }
}
