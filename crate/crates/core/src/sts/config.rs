//! Trust configuration: provider registrations, role trust policies and
//! workload identity pools, plus the document formats they are loaded from.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::jwks::{JwksSource, DEFAULT_JWKS_CACHE_TTL};
use super::StsError;
use crate::condition::{
    issuer_key_prefix, parse_condition, AttributeMapping, ConditionExpr, StringEqualsCondition,
    SUBJECT_TARGET,
};
use crate::token::JwkSet;

pub const ASSUME_ROLE_ACTION: &str = "sts:AssumeRoleWithWebIdentity";
pub const POLICY_VERSION: &str = "2012-10-17";

fn default_cache_ttl() -> i64 {
    DEFAULT_JWKS_CACHE_TTL
}

/// A trusted OIDC issuer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OidcProviderRegistration {
    /// Defaults to the issuer without its scheme.
    #[serde(default)]
    pub provider_id: String,
    pub issuer: String,
    pub audiences: Vec<String>,
    pub jwks: JwksSource,
    #[serde(default = "default_cache_ttl")]
    pub jwks_cache_ttl: i64,
}

impl OidcProviderRegistration {
    pub fn new(issuer: impl Into<String>, audience: impl Into<String>, jwks: JwksSource) -> Self {
        let issuer = issuer.into();
        Self {
            provider_id: issuer_key_prefix(&issuer).to_owned(),
            issuer,
            audiences: vec![audience.into()],
            jwks,
            jwks_cache_ttl: DEFAULT_JWKS_CACHE_TTL,
        }
    }

    pub(crate) fn normalize(mut self) -> Result<Self, StsError> {
        if self.issuer.is_empty() {
            return Err(StsError::InvalidConfig("issuer is empty".into()));
        }
        if self.provider_id.is_empty() {
            self.provider_id = issuer_key_prefix(&self.issuer).to_owned();
        }
        if self.audiences.is_empty() || self.audiences.iter().any(String::is_empty) {
            return Err(StsError::InvalidConfig(format!(
                "provider {} needs at least one non-empty audience",
                self.provider_id
            )));
        }
        if self.jwks_cache_ttl < 0 {
            return Err(StsError::InvalidConfig("negative JWKS cache TTL".into()));
        }
        Ok(self)
    }
}

/// Who may assume a role, and what the resulting credential may touch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrustPolicy {
    pub role_name: String,
    pub federated_principal: String,
    pub condition: StringEqualsCondition,
    pub scopes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "PascalCase")]
pub struct TrustPolicyDocument {
    #[serde(default)]
    pub version: Option<String>,
    pub statement: Vec<PolicyStatement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role_name: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scopes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "PascalCase")]
pub struct PolicyStatement {
    pub effect: String,
    pub principal: PolicyPrincipal,
    pub action: String,
    #[serde(default)]
    pub condition: PolicyCondition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "PascalCase")]
pub struct PolicyPrincipal {
    pub federated: String,
}

/// Only `StringEquals` is understood; any other operator is rejected at
/// load time rather than silently ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyCondition {
    #[serde(rename = "StringEquals", default)]
    pub string_equals: StringEqualsCondition,
}

/// `arn:aws:iam::<account>:oidc-provider/<provider_id>` or a bare id.
pub fn provider_id_from_principal(principal: &str) -> &str {
    match principal.split_once(":oidc-provider/") {
        Some((_, id)) => id,
        None => principal,
    }
}

impl TrustPolicy {
    pub fn from_document(
        doc: TrustPolicyDocument,
        role_name: Option<&str>,
    ) -> Result<Self, StsError> {
        let invalid = |m: &str| StsError::InvalidConfig(m.to_owned());
        let role_name = role_name
            .map(str::to_owned)
            .or(doc.role_name)
            .filter(|r| !r.is_empty())
            .ok_or_else(|| invalid("trust policy has no role name"))?;
        if let Some(v) = &doc.version {
            if v != POLICY_VERSION {
                return Err(invalid(&format!("unsupported policy version {v}")));
            }
        }
        let [statement] = <[PolicyStatement; 1]>::try_from(doc.statement)
            .map_err(|_| invalid("trust policy must have exactly one statement"))?;
        if statement.effect != "Allow" {
            return Err(invalid("statement effect must be Allow"));
        }
        if statement.action != ASSUME_ROLE_ACTION {
            return Err(invalid(&format!("statement action must be {ASSUME_ROLE_ACTION}")));
        }
        let federated_principal =
            provider_id_from_principal(&statement.principal.federated).to_owned();
        if federated_principal.is_empty() {
            return Err(invalid("federated principal is empty"));
        }
        Ok(Self {
            role_name,
            federated_principal,
            condition: statement.condition.string_equals,
            scopes: doc.scopes,
        })
    }

    pub fn parse_json(text: &str, role_name: Option<&str>) -> Result<Self, StsError> {
        let doc: TrustPolicyDocument = serde_json::from_str(text)
            .map_err(|e| StsError::InvalidConfig(format!("trust policy: {e}")))?;
        Self::from_document(doc, role_name)
    }

    pub fn to_document(&self, account_id: &str) -> TrustPolicyDocument {
        TrustPolicyDocument {
            version: Some(POLICY_VERSION.into()),
            statement: vec![PolicyStatement {
                effect: "Allow".into(),
                principal: PolicyPrincipal {
                    federated: format!(
                        "arn:aws:iam::{account_id}:oidc-provider/{}",
                        self.federated_principal
                    ),
                },
                action: ASSUME_ROLE_ACTION.into(),
                condition: PolicyCondition {
                    string_equals: self.condition.clone(),
                },
            }],
            role_name: Some(self.role_name.clone()),
            scopes: self.scopes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AwsSource {
    pub account_id: String,
}

/// Trust anchor declared inline with a pool provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OidcSource {
    pub issuer_uri: String,
    #[serde(default)]
    pub allowed_audiences: Vec<String>,
    #[serde(default)]
    pub jwks_uri: Option<String>,
    #[serde(default)]
    pub jwks: Option<JwkSet>,
    #[serde(default)]
    pub jwks_cache_ttl: Option<i64>,
}

/// One entry of a pool's provider list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderConfigDocument {
    pub provider_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aws: Option<AwsSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oidc: Option<OidcSource>,
    pub attribute_condition: String,
    pub attribute_mapping: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_account: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scopes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderConfig {
    pub provider_id: String,
    /// Source-account discriminator: the token's `account` claim must match.
    pub account_id: Option<String>,
    pub attribute_condition: ConditionExpr,
    pub attribute_mapping: AttributeMapping,
    /// Service account this provider's identities may impersonate.
    pub service_account: Option<String>,
    pub scopes: Vec<String>,
}

pub fn default_pool_audience(pool_id: &str, provider_id: &str) -> String {
    format!("//iam.googleapis.com/locations/global/workloadIdentityPools/{pool_id}/providers/{provider_id}")
}

impl ProviderConfig {
    /// Parses the condition and mapping. Returns the provider plus the trust
    /// anchor registration when the document declares one inline.
    pub fn from_document(
        doc: ProviderConfigDocument,
        pool_id: &str,
    ) -> Result<(Self, Option<OidcProviderRegistration>), StsError> {
        let bad = |e: crate::condition::ConditionError| {
            StsError::InvalidConfig(format!("provider {}: {e}", doc.provider_id))
        };
        if doc.provider_id.is_empty() {
            return Err(StsError::InvalidConfig("provider_id is empty".into()));
        }
        let attribute_condition = parse_condition(&doc.attribute_condition).map_err(bad)?;
        let attribute_mapping = AttributeMapping::parse(
            doc.attribute_mapping
                .iter()
                .map(|(k, v)| (k.as_str(), v.as_str())),
        )
        .map_err(bad)?;
        if !attribute_mapping.has_target(SUBJECT_TARGET) {
            return Err(StsError::InvalidConfig(format!(
                "provider {}: attribute_mapping must define {SUBJECT_TARGET}",
                doc.provider_id
            )));
        }
        let registration = match doc.oidc {
            None => None,
            Some(src) => {
                let jwks = match (src.jwks, src.jwks_uri) {
                    (Some(keys), _) => JwksSource::Inline(keys),
                    (None, Some(uri)) => JwksSource::Uri(uri),
                    (None, None) => JwksSource::Uri(format!(
                        "{}/openid/v1/jwks",
                        src.issuer_uri.trim_end_matches('/')
                    )),
                };
                let audiences = if src.allowed_audiences.is_empty() {
                    vec![default_pool_audience(pool_id, &doc.provider_id)]
                } else {
                    src.allowed_audiences
                };
                Some(OidcProviderRegistration {
                    provider_id: doc.provider_id.clone(),
                    issuer: src.issuer_uri,
                    audiences,
                    jwks,
                    jwks_cache_ttl: src.jwks_cache_ttl.unwrap_or(DEFAULT_JWKS_CACHE_TTL),
                })
            }
        };
        Ok((
            Self {
                provider_id: doc.provider_id,
                account_id: doc.aws.map(|a| a.account_id),
                attribute_condition,
                attribute_mapping,
                service_account: doc.service_account,
                scopes: doc.scopes,
            },
            registration,
        ))
    }

    /// Parses a YAML list of provider entries.
    pub fn parse_yaml_list(text: &str, pool_id: &str) -> Result<Vec<Self>, StsError> {
        let docs: Vec<ProviderConfigDocument> = serde_yaml::from_str(text)
            .map_err(|e| StsError::InvalidConfig(format!("provider config: {e}")))?;
        docs.into_iter()
            .map(|d| Self::from_document(d, pool_id).map(|(p, _)| p))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkloadIdentityPool {
    pub pool_id: String,
    pub providers: BTreeMap<String, ProviderConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolDocument {
    pub pool_id: String,
    pub providers: Vec<ProviderConfigDocument>,
}

/// Anything `trust apply` accepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrustDocument {
    Policy(TrustPolicyDocument),
    Pool(PoolDocument),
    Provider(OidcProviderRegistration),
}

impl TrustDocument {
    /// Detects the document kind from its shape. JSON is accepted anywhere
    /// YAML is. A bare provider list needs `pool` to say where it goes.
    pub fn parse(text: &str, pool: Option<&str>) -> Result<Self, StsError> {
        let invalid = |m: String| StsError::InvalidConfig(m);
        let value: serde_json::Value =
            serde_yaml::from_str(text).map_err(|e| invalid(format!("unparseable document: {e}")))?;
        let has = |k: &str| value.get(k).is_some();
        if has("Statement") {
            serde_json::from_value(value)
                .map(TrustDocument::Policy)
                .map_err(|e| invalid(format!("trust policy: {e}")))
        } else if value.is_array() {
            let pool_id = pool
                .ok_or_else(|| invalid("provider list needs a pool id".into()))?
                .to_owned();
            let providers = serde_json::from_value(value)
                .map_err(|e| invalid(format!("provider config: {e}")))?;
            Ok(TrustDocument::Pool(PoolDocument { pool_id, providers }))
        } else if has("providers") {
            serde_json::from_value(value)
                .map(TrustDocument::Pool)
                .map_err(|e| invalid(format!("pool: {e}")))
        } else if has("issuer") {
            serde_json::from_value(value)
                .map(TrustDocument::Provider)
                .map_err(|e| invalid(format!("provider registration: {e}")))
        } else {
            Err(invalid(
                "unrecognized document: expected a trust policy, pool, provider list or provider registration"
                    .into(),
            ))
        }
    }
}
