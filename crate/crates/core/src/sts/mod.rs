//! Relying-party token service: verifies identity tokens against declared
//! trust and issues short-lived native credentials.
//!
//! Two flows are supported. Role trust (`assume_role_with_web_identity`)
//! checks a token against a role's trust policy and returns a credential
//! directly. Pool federation (`exchange_federated_token` followed by
//! `impersonate_service_account`) evaluates a provider's attribute
//! condition, maps attributes into a federated token, and trades that for a
//! credential of the provider's linked service account.

pub mod api;
mod config;
mod jwks;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex, RwLock};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;
use thiserror::Error;

pub use config::{
    default_pool_audience, provider_id_from_principal, AwsSource, OidcProviderRegistration,
    OidcSource, PolicyCondition, PolicyPrincipal, PolicyStatement, PoolDocument, ProviderConfig,
    ProviderConfigDocument, TrustDocument, TrustPolicy, TrustPolicyDocument,
    WorkloadIdentityPool, ASSUME_ROLE_ACTION,
};
pub use jwks::{
    HttpJwksFetcher, JwksCache, JwksFetcher, JwksSource, NoFetcher, DEFAULT_JWKS_CACHE_TTL,
};

use crate::condition::{
    apply_mapping, eval_condition, eval_string_equals, AssertionContext, ConditionError,
    SUBJECT_TARGET,
};
use crate::token::{
    decode_unverified, verify_with, JwtClaims, SignedJwt, TokenError, VerifyOptions,
    DEFAULT_SKEW_SECS,
};

pub const MAX_CREDENTIAL_LIFETIME: i64 = 3600;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StsError {
    #[error("unknown provider {0}")]
    UnknownProvider(String),
    #[error("issuer {0} is already registered")]
    DuplicateIssuer(String),
    #[error("JWKS unreachable: {0}")]
    JwksUnreachable(String),
    #[error("token verification failed: {0}")]
    VerificationFailed(TokenError),
    #[error("condition denied: {0}")]
    ConditionDenied(String),
    #[error("unknown role {0}")]
    UnknownRole(String),
    #[error("attribute mapping failed: {0}")]
    MappingFailed(ConditionError),
    #[error("not authorized: {0}")]
    NotAuthorized(String),
    #[error("federated token expired")]
    ExpiredFederatedToken,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl StsError {
    pub fn kind(&self) -> &'static str {
        match self {
            StsError::UnknownProvider(_) => "UnknownProvider",
            StsError::DuplicateIssuer(_) => "DuplicateIssuer",
            StsError::JwksUnreachable(_) => "JwksUnreachable",
            StsError::VerificationFailed(_) => "VerificationFailed",
            StsError::ConditionDenied(_) => "ConditionDenied",
            StsError::UnknownRole(_) => "UnknownRole",
            StsError::MappingFailed(_) => "MappingFailed",
            StsError::NotAuthorized(_) => "NotAuthorized",
            StsError::ExpiredFederatedToken => "ExpiredFederatedToken",
            StsError::InvalidConfig(_) => "InvalidConfig",
        }
    }

    /// Inner error kind for wrapped failures.
    pub fn cause(&self) -> Option<&'static str> {
        match self {
            StsError::VerificationFailed(e) => Some(e.kind()),
            StsError::MappingFailed(ConditionError::MissingAttribute(_)) => {
                Some("MissingAttribute")
            }
            StsError::MappingFailed(_) => Some("InvalidMapping"),
            _ => None,
        }
    }

    /// `Kind` or `Kind:Cause`.
    pub fn qualified_kind(&self) -> String {
        match self.cause() {
            Some(c) => format!("{}:{c}", self.kind()),
            None => self.kind().to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "name", rename_all = "snake_case")]
pub enum Principal {
    Role(String),
    ServiceAccount(String),
}

impl fmt::Display for Principal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Principal::Role(r) => write!(f, "role/{r}"),
            Principal::ServiceAccount(a) => write!(f, "serviceAccount/{a}"),
        }
    }
}

/// Credential as returned to the caller. The secret parts are only ever
/// visible here; the service keeps their hashes.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NativeCredential {
    pub credential_id: String,
    pub secret: String,
    pub session_token: String,
    pub issued_at: i64,
    pub expires_at: i64,
    pub scopes: Vec<String>,
    pub principal: Principal,
}

impl fmt::Debug for NativeCredential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NativeCredential")
            .field("credential_id", &self.credential_id)
            .field("expires_at", &self.expires_at)
            .field("scopes", &self.scopes)
            .field("principal", &self.principal)
            .finish_non_exhaustive()
    }
}

impl NativeCredential {
    pub fn presentation(&self) -> CredentialPresentation {
        CredentialPresentation {
            credential_id: self.credential_id.clone(),
            secret: self.secret.clone(),
            session_token: self.session_token.clone(),
        }
    }

    pub fn lifetime(&self) -> i64 {
        self.expires_at - self.issued_at
    }
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialPresentation {
    pub credential_id: String,
    pub secret: String,
    pub session_token: String,
}

impl fmt::Debug for CredentialPresentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CredentialPresentation")
            .field("credential_id", &self.credential_id)
            .finish_non_exhaustive()
    }
}

/// Intermediate token of the pool flow, usable only for impersonation.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FederatedToken {
    pub access_token: String,
    pub issued_at: i64,
    pub expires_at: i64,
    pub subject: String,
    pub attributes: BTreeMap<String, String>,
}

impl fmt::Debug for FederatedToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FederatedToken")
            .field("subject", &self.subject)
            .field("expires_at", &self.expires_at)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Allow,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditOperation {
    AssumeRole,
    TokenExchange,
    Impersonate,
    CheckAccess,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub at: i64,
    pub operation: AuditOperation,
    pub jwt_id: Option<String>,
    pub subject: Option<String>,
    /// Role, pool/provider, account or resource the attempt targeted.
    pub target: String,
    pub allowed: bool,
    pub error: Option<String>,
    pub credential_id: Option<String>,
}

#[derive(Debug, Clone)]
pub struct StsOptions {
    pub max_credential_lifetime: i64,
    pub skew: i64,
    pub seed: u64,
}

impl Default for StsOptions {
    fn default() -> Self {
        Self {
            max_credential_lifetime: MAX_CREDENTIAL_LIFETIME,
            skew: DEFAULT_SKEW_SECS,
            seed: 0,
        }
    }
}

/// Immutable snapshot of the trust configuration. Mutations build a new
/// snapshot and swap it in whole.
#[derive(Debug, Clone, Default)]
pub struct TrustConfig {
    pub providers: BTreeMap<String, OidcProviderRegistration>,
    pub roles: BTreeMap<String, TrustPolicy>,
    pub pools: BTreeMap<String, WorkloadIdentityPool>,
}

impl TrustConfig {
    fn provider_by_issuer(&self, issuer: &str) -> Option<&OidcProviderRegistration> {
        self.providers.values().find(|p| p.issuer == issuer)
    }

    fn check_insert(&self, reg: &OidcProviderRegistration) -> Result<(), StsError> {
        if let Some(existing) = self.provider_by_issuer(&reg.issuer) {
            if existing.provider_id != reg.provider_id {
                return Err(StsError::DuplicateIssuer(reg.issuer.clone()));
            }
        }
        Ok(())
    }
}

struct StoredCredential {
    secret_hash: [u8; 32],
    session_hash: [u8; 32],
    expires_at: i64,
    scopes: Vec<String>,
}

struct StoredFederatedToken {
    pool_id: String,
    provider_id: String,
    subject: String,
    expires_at: i64,
}

fn digest(s: &str) -> [u8; 32] {
    Sha256::digest(s.as_bytes()).into()
}

pub struct StsService {
    options: StsOptions,
    config: RwLock<Arc<TrustConfig>>,
    admin: Mutex<()>,
    jwks: JwksCache,
    credentials: Mutex<HashMap<String, StoredCredential>>,
    federated: Mutex<HashMap<[u8; 32], StoredFederatedToken>>,
    audit: Mutex<Vec<AuditEntry>>,
    rng: Mutex<ChaCha20Rng>,
}

impl StsService {
    pub fn new(options: StsOptions, fetcher: Arc<dyn JwksFetcher>) -> Self {
        Self {
            rng: Mutex::new(ChaCha20Rng::seed_from_u64(options.seed)),
            options,
            config: RwLock::new(Arc::new(TrustConfig::default())),
            admin: Mutex::new(()),
            jwks: JwksCache::new(fetcher),
            credentials: Mutex::new(HashMap::new()),
            federated: Mutex::new(HashMap::new()),
            audit: Mutex::new(Vec::new()),
        }
    }

    pub fn options(&self) -> &StsOptions {
        &self.options
    }

    pub fn snapshot(&self) -> Arc<TrustConfig> {
        self.config.read().expect("config lock").clone()
    }

    pub fn jwks_cache(&self) -> &JwksCache {
        &self.jwks
    }

    /// Runs `f` against a copy of the current config under the admin lock
    /// and publishes the result only if it succeeds.
    fn mutate<T>(
        &self,
        f: impl FnOnce(&mut TrustConfig) -> Result<T, StsError>,
    ) -> Result<T, StsError> {
        let _guard = self.admin.lock().expect("admin lock");
        let mut next = (*self.snapshot()).clone();
        let out = f(&mut next)?;
        *self.config.write().expect("config lock") = Arc::new(next);
        Ok(out)
    }

    pub fn register_provider(
        &self,
        reg: OidcProviderRegistration,
        now: i64,
    ) -> Result<String, StsError> {
        let reg = reg.normalize()?;
        self.mutate(|cfg| {
            if cfg.provider_by_issuer(&reg.issuer).is_some() {
                return Err(StsError::DuplicateIssuer(reg.issuer.clone()));
            }
            if cfg.providers.contains_key(&reg.provider_id) {
                return Err(StsError::InvalidConfig(format!(
                    "provider id {} is already registered",
                    reg.provider_id
                )));
            }
            self.jwks
                .prime(&reg.provider_id, &reg.jwks, now)
                .map_err(StsError::JwksUnreachable)?;
            let id = reg.provider_id.clone();
            cfg.providers.insert(id.clone(), reg);
            Ok(id)
        })
    }

    /// Removes the trust anchor and every pool provider with this id.
    /// Credentials already issued are left to expire on their own.
    pub fn revoke_provider(&self, provider_id: &str) -> Result<(), StsError> {
        self.mutate(|cfg| {
            let mut found = cfg.providers.remove(provider_id).is_some();
            for pool in cfg.pools.values_mut() {
                found |= pool.providers.remove(provider_id).is_some();
            }
            if found {
                self.jwks.evict(provider_id);
                Ok(())
            } else {
                Err(StsError::UnknownProvider(provider_id.to_owned()))
            }
        })
    }

    /// Adds or replaces the trust policy of `policy.role_name`.
    pub fn put_trust_policy(&self, policy: TrustPolicy) -> Result<(), StsError> {
        self.mutate(|cfg| {
            cfg.roles.insert(policy.role_name.clone(), policy);
            Ok(())
        })
    }

    pub fn remove_role(&self, role_name: &str) -> Result<(), StsError> {
        self.mutate(|cfg| {
            cfg.roles
                .remove(role_name)
                .map(|_| ())
                .ok_or_else(|| StsError::UnknownRole(role_name.to_owned()))
        })
    }

    /// Upserts providers into a pool, registering any inline trust anchors.
    /// Either every provider is applied or none is.
    pub fn apply_pool(
        &self,
        pool_id: &str,
        providers: Vec<(ProviderConfig, Option<OidcProviderRegistration>)>,
        now: i64,
    ) -> Result<(), StsError> {
        if pool_id.is_empty() {
            return Err(StsError::InvalidConfig("pool id is empty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (p, _) in &providers {
            if !seen.insert(p.provider_id.clone()) {
                return Err(StsError::InvalidConfig(format!(
                    "provider id {} repeated in pool {pool_id}",
                    p.provider_id
                )));
            }
        }
        let mut regs = Vec::new();
        for (_, reg) in &providers {
            if let Some(r) = reg {
                regs.push(r.clone().normalize()?);
            }
        }
        self.mutate(|cfg| {
            for reg in regs {
                cfg.check_insert(&reg)?;
                self.jwks
                    .prime(&reg.provider_id, &reg.jwks, now)
                    .map_err(StsError::JwksUnreachable)?;
                cfg.providers.insert(reg.provider_id.clone(), reg);
            }
            let pool = cfg
                .pools
                .entry(pool_id.to_owned())
                .or_insert_with(|| WorkloadIdentityPool {
                    pool_id: pool_id.to_owned(),
                    providers: BTreeMap::new(),
                });
            for (p, _) in providers {
                pool.providers.insert(p.provider_id.clone(), p);
            }
            Ok(())
        })
    }

    /// Applies any supported document. Returns a one-line summary.
    pub fn apply_document(&self, doc: TrustDocument, now: i64) -> Result<String, StsError> {
        match doc {
            TrustDocument::Policy(d) => {
                let policy = TrustPolicy::from_document(d, None)?;
                let summary = format!(
                    "role {} trusts {}",
                    policy.role_name, policy.federated_principal
                );
                self.put_trust_policy(policy)?;
                Ok(summary)
            }
            TrustDocument::Pool(d) => {
                let ids: Vec<String> = d.providers.iter().map(|p| p.provider_id.clone()).collect();
                let parsed = d
                    .providers
                    .into_iter()
                    .map(|p| ProviderConfig::from_document(p, &d.pool_id))
                    .collect::<Result<Vec<_>, _>>()?;
                self.apply_pool(&d.pool_id, parsed, now)?;
                Ok(format!("pool {} providers {}", d.pool_id, ids.join(",")))
            }
            TrustDocument::Provider(reg) => {
                let id = self.register_provider(reg, now)?;
                Ok(format!("provider {id} registered"))
            }
        }
    }

    fn record(&self, entry: AuditEntry) {
        self.audit.lock().expect("audit lock").push(entry);
    }

    pub fn audit_log(&self) -> Vec<AuditEntry> {
        self.audit.lock().expect("audit lock").clone()
    }

    fn random_hex(&self, bytes: usize) -> String {
        let mut buf = vec![0u8; bytes];
        self.rng.lock().expect("rng lock").fill_bytes(&mut buf);
        hex::encode(buf)
    }

    fn issue_credential(
        &self,
        principal: Principal,
        scopes: Vec<String>,
        now: i64,
        expires_at: i64,
    ) -> NativeCredential {
        let credential_id = format!("ASIA{}", self.random_hex(8).to_ascii_uppercase());
        let secret = self.random_hex(20);
        let session_token = self.random_hex(32);
        self.credentials.lock().expect("credential lock").insert(
            credential_id.clone(),
            StoredCredential {
                secret_hash: digest(&secret),
                session_hash: digest(&session_token),
                expires_at,
                scopes: scopes.clone(),
            },
        );
        NativeCredential {
            credential_id,
            secret,
            session_token,
            issued_at: now,
            expires_at,
            scopes,
            principal,
        }
    }

    /// Verifies against the provider's keys, refetching them once if the
    /// token names a key id the cache does not know.
    fn verify(
        &self,
        reg: &OidcProviderRegistration,
        token: &SignedJwt,
        now: i64,
    ) -> Result<JwtClaims, StsError> {
        let opts = VerifyOptions {
            issuer: &reg.issuer,
            audiences: &reg.audiences,
            now,
            skew: self.options.skew,
        };
        let keys = self
            .jwks
            .get(&reg.provider_id, &reg.jwks, reg.jwks_cache_ttl, now, false)
            .map_err(StsError::JwksUnreachable)?;
        match verify_with(token, &keys, &opts) {
            Err(TokenError::UnknownKeyId(_)) if matches!(reg.jwks, JwksSource::Uri(_)) => {
                let keys = self
                    .jwks
                    .get(&reg.provider_id, &reg.jwks, reg.jwks_cache_ttl, now, true)
                    .map_err(StsError::JwksUnreachable)?;
                verify_with(token, &keys, &opts).map_err(StsError::VerificationFailed)
            }
            other => other.map_err(StsError::VerificationFailed),
        }
    }

    /// Credential expiry: at most the configured maximum, never past the
    /// identity token's own expiry.
    fn bounded_expiry(&self, now: i64, token_exp: i64) -> Result<i64, StsError> {
        let expires_at = (now + self.options.max_credential_lifetime).min(token_exp);
        if expires_at <= now {
            return Err(StsError::VerificationFailed(TokenError::Expired {
                expires_at: token_exp,
                now,
            }));
        }
        Ok(expires_at)
    }

    pub fn assume_role_with_web_identity(
        &self,
        token: &SignedJwt,
        role_name: &str,
        now: i64,
    ) -> Result<NativeCredential, StsError> {
        let mut entry = AuditEntry {
            at: now,
            operation: AuditOperation::AssumeRole,
            jwt_id: None,
            subject: None,
            target: role_name.to_owned(),
            allowed: false,
            error: None,
            credential_id: None,
        };
        let result = self.assume_role_inner(token, role_name, now, &mut entry);
        match &result {
            Ok(c) => {
                entry.allowed = true;
                entry.credential_id = Some(c.credential_id.clone());
            }
            Err(e) => entry.error = Some(e.qualified_kind()),
        }
        self.record(entry);
        result
    }

    fn assume_role_inner(
        &self,
        token: &SignedJwt,
        role_name: &str,
        now: i64,
        entry: &mut AuditEntry,
    ) -> Result<NativeCredential, StsError> {
        let cfg = self.snapshot();
        let policy = cfg
            .roles
            .get(role_name)
            .ok_or_else(|| StsError::UnknownRole(role_name.to_owned()))?;
        let unverified = decode_unverified(token).map_err(StsError::VerificationFailed)?;
        entry.jwt_id = Some(unverified.claims.jwt_id.clone());
        entry.subject = Some(unverified.claims.subject.clone());
        let reg = cfg
            .provider_by_issuer(&unverified.claims.issuer)
            .ok_or_else(|| StsError::UnknownProvider(unverified.claims.issuer.clone()))?;
        let claims = self.verify(reg, token, now)?;
        if policy.federated_principal != reg.provider_id {
            if !cfg.providers.contains_key(&policy.federated_principal) {
                return Err(StsError::UnknownProvider(policy.federated_principal.clone()));
            }
            return Err(StsError::ConditionDenied(format!(
                "role {role_name} does not trust provider {}",
                reg.provider_id
            )));
        }
        if !eval_string_equals(&policy.condition, &claims) {
            return Err(StsError::ConditionDenied(format!(
                "StringEquals condition of role {role_name} not satisfied"
            )));
        }
        let expires_at = self.bounded_expiry(now, claims.expires_at)?;
        Ok(self.issue_credential(
            Principal::Role(role_name.to_owned()),
            policy.scopes.clone(),
            now,
            expires_at,
        ))
    }

    pub fn exchange_federated_token(
        &self,
        token: &SignedJwt,
        pool_id: &str,
        provider_id: &str,
        now: i64,
    ) -> Result<FederatedToken, StsError> {
        let mut entry = AuditEntry {
            at: now,
            operation: AuditOperation::TokenExchange,
            jwt_id: None,
            subject: None,
            target: format!("{pool_id}/{provider_id}"),
            allowed: false,
            error: None,
            credential_id: None,
        };
        let result = self.exchange_inner(token, pool_id, provider_id, now, &mut entry);
        match &result {
            Ok(_) => entry.allowed = true,
            Err(e) => entry.error = Some(e.qualified_kind()),
        }
        self.record(entry);
        result
    }

    fn exchange_inner(
        &self,
        token: &SignedJwt,
        pool_id: &str,
        provider_id: &str,
        now: i64,
        entry: &mut AuditEntry,
    ) -> Result<FederatedToken, StsError> {
        let cfg = self.snapshot();
        let unknown = || StsError::UnknownProvider(format!("{pool_id}/{provider_id}"));
        let provider = cfg
            .pools
            .get(pool_id)
            .and_then(|p| p.providers.get(provider_id))
            .ok_or_else(unknown)?;
        let reg = cfg.providers.get(provider_id).ok_or_else(unknown)?;
        if let Ok(u) = decode_unverified(token) {
            entry.jwt_id = Some(u.claims.jwt_id);
            entry.subject = Some(u.claims.subject);
        }
        let claims = self.verify(reg, token, now)?;
        if let Some(account) = &provider.account_id {
            if claims.lookup("account").as_deref() != Some(account.as_str()) {
                return Err(StsError::ConditionDenied(format!(
                    "token is not from account {account}"
                )));
            }
        }
        let ctx = AssertionContext::from_claims(&claims);
        // Any evaluation error denies.
        match eval_condition(&provider.attribute_condition, &ctx) {
            Ok(true) => {}
            Ok(false) => {
                return Err(StsError::ConditionDenied(format!(
                    "attribute_condition of {provider_id} is false"
                )))
            }
            Err(e) => {
                return Err(StsError::ConditionDenied(format!(
                    "attribute_condition of {provider_id}: {e}"
                )))
            }
        }
        let attributes =
            apply_mapping(&provider.attribute_mapping, &ctx).map_err(StsError::MappingFailed)?;
        let subject = attributes
            .get(SUBJECT_TARGET)
            .cloned()
            .ok_or_else(|| {
                StsError::MappingFailed(ConditionError::InvalidMapping(format!(
                    "{SUBJECT_TARGET} not produced"
                )))
            })?;
        let expires_at = self.bounded_expiry(now, claims.expires_at)?;
        let access_token = format!("fedtok-{}", self.random_hex(32));
        self.federated.lock().expect("federated lock").insert(
            digest(&access_token),
            StoredFederatedToken {
                pool_id: pool_id.to_owned(),
                provider_id: provider_id.to_owned(),
                subject: subject.clone(),
                expires_at,
            },
        );
        Ok(FederatedToken {
            access_token,
            issued_at: now,
            expires_at,
            subject,
            attributes,
        })
    }

    pub fn impersonate_service_account(
        &self,
        federated_token: &str,
        account: &str,
        now: i64,
    ) -> Result<NativeCredential, StsError> {
        let mut entry = AuditEntry {
            at: now,
            operation: AuditOperation::Impersonate,
            jwt_id: None,
            subject: None,
            target: account.to_owned(),
            allowed: false,
            error: None,
            credential_id: None,
        };
        let result = self.impersonate_inner(federated_token, account, now, &mut entry);
        match &result {
            Ok(c) => {
                entry.allowed = true;
                entry.credential_id = Some(c.credential_id.clone());
            }
            Err(e) => entry.error = Some(e.qualified_kind()),
        }
        self.record(entry);
        result
    }

    fn impersonate_inner(
        &self,
        federated_token: &str,
        account: &str,
        now: i64,
        entry: &mut AuditEntry,
    ) -> Result<NativeCredential, StsError> {
        let (pool_id, provider_id, expires_at) = {
            let store = self.federated.lock().expect("federated lock");
            let stored = store
                .get(&digest(federated_token))
                .ok_or_else(|| StsError::NotAuthorized("unknown federated token".into()))?;
            entry.subject = Some(stored.subject.clone());
            (
                stored.pool_id.clone(),
                stored.provider_id.clone(),
                stored.expires_at,
            )
        };
        if now >= expires_at {
            return Err(StsError::ExpiredFederatedToken);
        }
        let cfg = self.snapshot();
        let provider = cfg
            .pools
            .get(&pool_id)
            .and_then(|p| p.providers.get(&provider_id))
            .ok_or_else(|| {
                StsError::NotAuthorized(format!("provider {pool_id}/{provider_id} was removed"))
            })?;
        if provider.service_account.as_deref() != Some(account) {
            return Err(StsError::NotAuthorized(format!(
                "{pool_id}/{provider_id} may not impersonate {account}"
            )));
        }
        Ok(self.issue_credential(
            Principal::ServiceAccount(account.to_owned()),
            provider.scopes.clone(),
            now,
            expires_at,
        ))
    }

    pub fn check_access(
        &self,
        presentation: &CredentialPresentation,
        resource: &str,
        now: i64,
    ) -> Decision {
        let reason = {
            let store = self.credential_lookup(presentation);
            match store {
                None => Some("UnknownCredential"),
                Some((expires_at, _)) if now >= expires_at => Some("CredentialExpired"),
                Some((_, scopes)) if !scopes.iter().any(|s| s == resource) => Some("OutOfScope"),
                Some(_) => None,
            }
        };
        self.record(AuditEntry {
            at: now,
            operation: AuditOperation::CheckAccess,
            jwt_id: None,
            subject: None,
            target: resource.to_owned(),
            allowed: reason.is_none(),
            error: reason.map(str::to_owned),
            credential_id: Some(presentation.credential_id.clone()),
        });
        if reason.is_none() {
            Decision::Allow
        } else {
            Decision::Deny
        }
    }

    fn credential_lookup(&self, p: &CredentialPresentation) -> Option<(i64, Vec<String>)> {
        let store = self.credentials.lock().expect("credential lock");
        let stored = store.get(&p.credential_id)?;
        let secret_ok = stored.secret_hash.ct_eq(&digest(&p.secret));
        let session_ok = stored.session_hash.ct_eq(&digest(&p.session_token));
        if bool::from(secret_ok & session_ok) {
            Some((stored.expires_at, stored.scopes.clone()))
        } else {
            None
        }
    }

    pub fn credential_count(&self) -> usize {
        self.credentials.lock().expect("credential lock").len()
    }
}
