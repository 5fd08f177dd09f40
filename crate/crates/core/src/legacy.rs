//! Static-key request signing in the SigV4 shape.
//!
//! This is the baseline the federated flow replaces: a long-lived secret
//! signs each request and the verifier recomputes the signature. Nothing
//! here expires.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::RwLock;

use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;
use thiserror::Error;

pub const ALGORITHM: &str = "AWS4-HMAC-SHA256";
pub const TERMINATOR: &str = "aws4_request";
pub const DATE_HEADER: &str = "x-amz-date";

type HmacSha256 = Hmac<Sha256>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LegacyError {
    #[error("missing required header {0}")]
    MissingRequiredHeader(String),
    #[error("unknown access key {0}")]
    UnknownKey(String),
    #[error("access key {0} already exists")]
    DuplicateKey(String),
    #[error("malformed authorization header: {0}")]
    MalformedAuthorization(String),
}

impl LegacyError {
    pub fn kind(&self) -> &'static str {
        match self {
            LegacyError::MissingRequiredHeader(_) => "MissingRequiredHeader",
            LegacyError::UnknownKey(_) => "UnknownKey",
            LegacyError::DuplicateKey(_) => "DuplicateKey",
            LegacyError::MalformedAuthorization(_) => "MalformedAuthorization",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LegacyDecision {
    Accept,
    Reject,
}

/// Long-lived access key. There is deliberately no expiry.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticKey {
    pub access_key_id: String,
    pub secret_key: String,
    pub created_at: i64,
    pub permissions: Vec<String>,
}

impl fmt::Debug for StaticKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StaticKey")
            .field("access_key_id", &self.access_key_id)
            .field("created_at", &self.created_at)
            .field("permissions", &self.permissions)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Default)]
pub struct LegacyKeystore {
    keys: RwLock<BTreeMap<String, StaticKey>>,
}

impl LegacyKeystore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, key: StaticKey) -> Result<(), LegacyError> {
        let mut keys = self.keys.write().expect("keystore lock");
        if keys.contains_key(&key.access_key_id) {
            return Err(LegacyError::DuplicateKey(key.access_key_id));
        }
        keys.insert(key.access_key_id.clone(), key);
        Ok(())
    }

    pub fn get(&self, access_key_id: &str) -> Option<StaticKey> {
        self.keys
            .read()
            .expect("keystore lock")
            .get(access_key_id)
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.keys.read().expect("keystore lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignableRequest {
    pub method: String,
    pub path: String,
    #[serde(default)]
    pub query: Vec<(String, String)>,
    #[serde(default)]
    pub headers: Vec<(String, String)>,
    #[serde(default)]
    pub payload: Vec<u8>,
}

impl SignableRequest {
    pub fn new(method: &str, path: &str) -> Self {
        Self {
            method: method.to_owned(),
            path: path.to_owned(),
            query: Vec::new(),
            headers: Vec::new(),
            payload: Vec::new(),
        }
    }

    pub fn header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_owned(), value.to_owned()));
        self
    }

    pub fn query_param(mut self, key: &str, value: &str) -> Self {
        self.query.push((key.to_owned(), value.to_owned()));
        self
    }

    fn header_value(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalRequest {
    pub method: String,
    pub path: String,
    pub query: String,
    /// Lowercased names, sorted, values trimmed with inner runs of spaces
    /// collapsed; repeated headers joined with commas.
    pub headers: Vec<(String, String)>,
    pub signed_headers: Vec<String>,
    pub payload_hash: String,
}

impl fmt::Display for CanonicalRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.method)?;
        writeln!(f, "{}", self.path)?;
        writeln!(f, "{}", self.query)?;
        for (name, value) in &self.headers {
            writeln!(f, "{name}:{value}")?;
        }
        writeln!(f)?;
        writeln!(f, "{}", self.signed_headers.join(";"))?;
        write!(f, "{}", self.payload_hash)
    }
}

/// RFC 3986 percent-encoding, leaving only unreserved characters.
fn uri_encode(s: &str, keep_slash: bool) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(b as char)
            }
            b'/' if keep_slash => out.push('/'),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

fn normalize_value(v: &str) -> String {
    v.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

fn canonicalize_with(
    req: &SignableRequest,
    only: Option<&[String]>,
) -> Result<CanonicalRequest, LegacyError> {
    for required in ["host", DATE_HEADER] {
        if req.header_value(required).is_none() {
            return Err(LegacyError::MissingRequiredHeader(required.to_owned()));
        }
    }
    let mut headers: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (name, value) in &req.headers {
        let name = name.to_ascii_lowercase();
        if only.is_some_and(|o| !o.contains(&name)) {
            continue;
        }
        headers.entry(name).or_default().push(normalize_value(value));
    }
    if let Some(o) = only {
        if let Some(missing) = o.iter().find(|n| !headers.contains_key(*n)) {
            return Err(LegacyError::MissingRequiredHeader(missing.clone()));
        }
    }
    let mut query: Vec<(String, String)> = req
        .query
        .iter()
        .map(|(k, v)| (uri_encode(k, false), uri_encode(v, false)))
        .collect();
    query.sort();
    let path = if req.path.is_empty() {
        "/".to_owned()
    } else {
        uri_encode(&req.path, true)
    };
    Ok(CanonicalRequest {
        method: req.method.to_ascii_uppercase(),
        path,
        query: query
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("&"),
        signed_headers: headers.keys().cloned().collect(),
        headers: headers
            .into_iter()
            .map(|(k, v)| (k, v.join(",")))
            .collect(),
        payload_hash: sha256_hex(&req.payload),
    })
}

/// Signs over every header present on the request.
pub fn canonicalize(req: &SignableRequest) -> Result<CanonicalRequest, LegacyError> {
    canonicalize_with(req, None)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CredentialScope {
    pub date: String,
    pub region: String,
    pub service: String,
}

impl fmt::Display for CredentialScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}/{TERMINATOR}", self.date, self.region, self.service)
    }
}

pub fn string_to_sign(timestamp: &str, scope: &CredentialScope, canonical: &CanonicalRequest) -> String {
    format!(
        "{ALGORITHM}\n{timestamp}\n{scope}\n{}",
        sha256_hex(canonical.to_string().as_bytes())
    )
}

fn hmac(key: &[u8], data: &[u8]) -> Vec<u8> {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(data);
    mac.finalize().into_bytes().to_vec()
}

pub fn signing_key(secret: &str, scope: &CredentialScope) -> Vec<u8> {
    let k_date = hmac(format!("AWS4{secret}").as_bytes(), scope.date.as_bytes());
    let k_region = hmac(&k_date, scope.region.as_bytes());
    let k_service = hmac(&k_region, scope.service.as_bytes());
    hmac(&k_service, TERMINATOR.as_bytes())
}

fn signature(
    secret: &str,
    scope: &CredentialScope,
    timestamp: &str,
    canonical: &CanonicalRequest,
) -> String {
    hex::encode(hmac(
        &signing_key(secret, scope),
        string_to_sign(timestamp, scope, canonical).as_bytes(),
    ))
}

/// Returns the `Authorization` header value.
pub fn sign(
    req: &SignableRequest,
    key: &StaticKey,
    date: &str,
    region: &str,
    service: &str,
) -> Result<String, LegacyError> {
    let canonical = canonicalize(req)?;
    let scope = CredentialScope {
        date: date.to_owned(),
        region: region.to_owned(),
        service: service.to_owned(),
    };
    let timestamp = req.header_value(DATE_HEADER).expect("checked by canonicalize");
    Ok(format!(
        "{ALGORITHM} Credential={}/{scope}, SignedHeaders={}, Signature={}",
        key.access_key_id,
        canonical.signed_headers.join(";"),
        signature(&key.secret_key, &scope, timestamp, &canonical)
    ))
}

/// Looks the key up in `keystore` and signs.
pub fn sign_with_keystore(
    req: &SignableRequest,
    keystore: &LegacyKeystore,
    access_key_id: &str,
    date: &str,
    region: &str,
    service: &str,
) -> Result<String, LegacyError> {
    let key = keystore
        .get(access_key_id)
        .ok_or_else(|| LegacyError::UnknownKey(access_key_id.to_owned()))?;
    sign(req, &key, date, region, service)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAuthorization {
    pub access_key_id: String,
    pub scope: CredentialScope,
    pub signed_headers: Vec<String>,
    pub signature: String,
}

pub fn parse_authorization(header: &str) -> Result<ParsedAuthorization, LegacyError> {
    let bad = |m: &str| LegacyError::MalformedAuthorization(m.to_owned());
    let rest = header
        .strip_prefix(ALGORITHM)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| bad("unsupported algorithm"))?;
    let mut fields = BTreeMap::new();
    for part in rest.split(',') {
        let (k, v) = part.trim().split_once('=').ok_or_else(|| bad("expected key=value"))?;
        fields.insert(k, v);
    }
    let credential = fields.get("Credential").ok_or_else(|| bad("no Credential"))?;
    let parts: Vec<&str> = credential.split('/').collect();
    let [id, date, region, service, TERMINATOR] = parts.as_slice() else {
        return Err(bad("credential scope must be id/date/region/service/aws4_request"));
    };
    let signed_headers: Vec<String> = fields
        .get("SignedHeaders")
        .ok_or_else(|| bad("no SignedHeaders"))?
        .split(';')
        .map(str::to_owned)
        .collect();
    for required in ["host", DATE_HEADER] {
        if !signed_headers.iter().any(|h| h == required) {
            return Err(bad(&format!("{required} must be signed")));
        }
    }
    Ok(ParsedAuthorization {
        access_key_id: (*id).to_owned(),
        scope: CredentialScope {
            date: (*date).to_owned(),
            region: (*region).to_owned(),
            service: (*service).to_owned(),
        },
        signed_headers,
        signature: fields
            .get("Signature")
            .ok_or_else(|| bad("no Signature"))?
            .to_string(),
    })
}

/// Recomputes the signature with the stored secret. `now` is accepted for
/// symmetry with the federated verifier and ignored: a static key is valid
/// for as long as it exists.
pub fn verify(
    req: &SignableRequest,
    authorization: &str,
    keystore: &LegacyKeystore,
    _now: i64,
) -> LegacyDecision {
    let Ok(parsed) = parse_authorization(authorization) else {
        return LegacyDecision::Reject;
    };
    let Some(key) = keystore.get(&parsed.access_key_id) else {
        return LegacyDecision::Reject;
    };
    let Ok(canonical) = canonicalize_with(req, Some(&parsed.signed_headers)) else {
        return LegacyDecision::Reject;
    };
    let timestamp = req.header_value(DATE_HEADER).unwrap_or_default();
    let expected = signature(&key.secret_key, &parsed.scope, timestamp, &canonical);
    if bool::from(expected.as_bytes().ct_eq(parsed.signature.as_bytes())) {
        LegacyDecision::Accept
    } else {
        LegacyDecision::Reject
    }
}
