use std::collections::BTreeMap;
use std::fmt;

use serde_json::{Map, Number, Value};

use super::TokenError;

const REGISTERED: [&str; 7] = ["iss", "sub", "aud", "exp", "iat", "nbf", "jti"];

/// Value of a non-registered claim. Workload-binding claims (pod uid,
/// namespace) use nested maps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClaimValue {
    String(String),
    Number(Number),
    Map(BTreeMap<String, ClaimValue>),
}

impl ClaimValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            ClaimValue::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&BTreeMap<String, ClaimValue>> {
        match self {
            ClaimValue::Map(m) => Some(m),
            _ => None,
        }
    }

    pub(crate) fn to_json(&self) -> Value {
        match self {
            ClaimValue::String(s) => Value::String(s.clone()),
            ClaimValue::Number(n) => Value::Number(n.clone()),
            ClaimValue::Map(m) => {
                Value::Object(m.iter().map(|(k, v)| (k.clone(), v.to_json())).collect())
            }
        }
    }

    pub(crate) fn from_json(value: &Value) -> Result<Self, TokenError> {
        match value {
            Value::String(s) => Ok(ClaimValue::String(s.clone())),
            Value::Number(n) => Ok(ClaimValue::Number(n.clone())),
            Value::Object(m) => m
                .iter()
                .map(|(k, v)| Ok((k.clone(), ClaimValue::from_json(v)?)))
                .collect::<Result<_, _>>()
                .map(ClaimValue::Map),
            other => Err(TokenError::Malformed(format!(
                "unsupported claim value {other}"
            ))),
        }
    }
}

impl From<&str> for ClaimValue {
    fn from(s: &str) -> Self {
        ClaimValue::String(s.to_owned())
    }
}

impl From<String> for ClaimValue {
    fn from(s: String) -> Self {
        ClaimValue::String(s)
    }
}

impl From<i64> for ClaimValue {
    fn from(n: i64) -> Self {
        ClaimValue::Number(n.into())
    }
}

/// Which claims invariant a claim set broke.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClaimsViolation {
    EmptyIssuer,
    EmptySubject,
    EmptyAudience,
    BlankAudienceEntry,
    ExpiryNotAfterIssue,
    EmptyJwtId,
    ReservedExtraClaim(String),
}

impl fmt::Display for ClaimsViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClaimsViolation::EmptyIssuer => f.write_str("issuer is empty"),
            ClaimsViolation::EmptySubject => f.write_str("subject is empty"),
            ClaimsViolation::EmptyAudience => f.write_str("audience list is empty"),
            ClaimsViolation::BlankAudienceEntry => f.write_str("audience entry is empty"),
            ClaimsViolation::ExpiryNotAfterIssue => f.write_str("exp must be later than iat"),
            ClaimsViolation::EmptyJwtId => f.write_str("jti is empty"),
            ClaimsViolation::ReservedExtraClaim(k) => {
                write!(f, "extra claim {k:?} shadows a registered claim")
            }
        }
    }
}

/// Identity assertion carried by a token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JwtClaims {
    pub issuer: String,
    pub subject: String,
    pub audience: Vec<String>,
    pub expires_at: i64,
    pub issued_at: i64,
    pub not_before: Option<i64>,
    pub jwt_id: String,
    pub extra: BTreeMap<String, ClaimValue>,
}

impl JwtClaims {
    pub fn validate(&self) -> Result<(), ClaimsViolation> {
        if self.issuer.trim().is_empty() {
            return Err(ClaimsViolation::EmptyIssuer);
        }
        if self.subject.is_empty() {
            return Err(ClaimsViolation::EmptySubject);
        }
        if self.audience.is_empty() {
            return Err(ClaimsViolation::EmptyAudience);
        }
        if self.audience.iter().any(String::is_empty) {
            return Err(ClaimsViolation::BlankAudienceEntry);
        }
        if self.expires_at <= self.issued_at {
            return Err(ClaimsViolation::ExpiryNotAfterIssue);
        }
        if self.jwt_id.is_empty() {
            return Err(ClaimsViolation::EmptyJwtId);
        }
        if let Some(k) = self.extra.keys().find(|k| REGISTERED.contains(&k.as_str())) {
            return Err(ClaimsViolation::ReservedExtraClaim(k.clone()));
        }
        Ok(())
    }

    /// Looks up a claim by dotted path, descending into nested maps of the
    /// extra claims. `aud` is not addressable here since it is list-valued.
    pub fn lookup(&self, path: &str) -> Option<String> {
        match path {
            "iss" => return Some(self.issuer.clone()),
            "sub" => return Some(self.subject.clone()),
            "jti" => return Some(self.jwt_id.clone()),
            "exp" => return Some(self.expires_at.to_string()),
            "iat" => return Some(self.issued_at.to_string()),
            "nbf" => return self.not_before.map(|n| n.to_string()),
            _ => {}
        }
        let mut segments = path.split('.');
        let mut current = self.extra.get(segments.next()?)?;
        for seg in segments {
            current = current.as_map()?.get(seg)?;
        }
        match current {
            ClaimValue::String(s) => Some(s.clone()),
            ClaimValue::Number(n) => Some(n.to_string()),
            ClaimValue::Map(_) => None,
        }
    }

    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        for (k, v) in &self.extra {
            obj.insert(k.clone(), v.to_json());
        }
        obj.insert("iss".into(), Value::String(self.issuer.clone()));
        obj.insert("sub".into(), Value::String(self.subject.clone()));
        obj.insert(
            "aud".into(),
            Value::Array(self.audience.iter().cloned().map(Value::String).collect()),
        );
        obj.insert("exp".into(), self.expires_at.into());
        obj.insert("iat".into(), self.issued_at.into());
        if let Some(nbf) = self.not_before {
            obj.insert("nbf".into(), nbf.into());
        }
        obj.insert("jti".into(), Value::String(self.jwt_id.clone()));
        Value::Object(obj)
    }

    pub fn from_json(value: &Value) -> Result<Self, TokenError> {
        let obj = value
            .as_object()
            .ok_or_else(|| TokenError::Malformed("claims are not a JSON object".into()))?;
        let string = |key: &str| -> Result<String, TokenError> {
            obj.get(key)
                .and_then(Value::as_str)
                .map(str::to_owned)
                .ok_or_else(|| TokenError::Malformed(format!("missing string claim {key}")))
        };
        let int = |key: &str| -> Result<Option<i64>, TokenError> {
            match obj.get(key) {
                None => Ok(None),
                Some(v) => v
                    .as_i64()
                    .map(Some)
                    .ok_or_else(|| TokenError::Malformed(format!("claim {key} is not an integer"))),
            }
        };
        // aud may be a single string or a list
        let audience = match obj.get("aud") {
            Some(Value::String(s)) => vec![s.clone()],
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(str::to_owned)
                        .ok_or_else(|| TokenError::Malformed("non-string audience".into()))
                })
                .collect::<Result<_, _>>()?,
            _ => return Err(TokenError::Malformed("missing aud claim".into())),
        };
        let extra = obj
            .iter()
            .filter(|(k, _)| !REGISTERED.contains(&k.as_str()))
            .map(|(k, v)| Ok((k.clone(), ClaimValue::from_json(v)?)))
            .collect::<Result<_, TokenError>>()?;
        Ok(JwtClaims {
            issuer: string("iss")?,
            subject: string("sub")?,
            audience,
            expires_at: int("exp")?.ok_or_else(|| TokenError::Malformed("missing exp".into()))?,
            issued_at: int("iat")?.ok_or_else(|| TokenError::Malformed("missing iat".into()))?,
            not_before: int("nbf")?,
            jwt_id: string("jti")?,
            extra,
        })
    }

    /// Sorted-key JSON encoding used as the token payload.
    pub fn canonical_json(&self) -> String {
        canonical_json(&self.to_json())
    }
}

/// Serializes JSON with object keys in byte order, independent of how the
/// `serde_json` map type is configured.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<_> = map.iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            out.push('{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(v, out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}
