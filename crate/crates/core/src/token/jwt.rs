use std::fmt;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::claims::{canonical_json, JwtClaims};
use super::keys::{Algorithm, JwkSet, SigningKey};
use super::TokenError;

/// Default tolerance for clock disagreement between issuer and verifier.
pub const DEFAULT_SKEW_SECS: i64 = 30;

/// Compact serialization `header.payload.signature`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignedJwt(String);

impl SignedJwt {
    /// Wraps a string received from elsewhere. No validation happens here.
    pub fn new(compact: impl Into<String>) -> Self {
        Self(compact.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    fn segments(&self) -> Result<(&str, &str, &str), TokenError> {
        let mut parts = self.0.split('.');
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(h), Some(p), Some(s), None) => Ok((h, p, s)),
            _ => Err(TokenError::Malformed(
                "expected three dot-separated segments".into(),
            )),
        }
    }
}

// Token strings are bearer credentials; keep them out of logs.
impl fmt::Debug for SignedJwt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SignedJwt({} bytes)", self.0.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JwtHeader {
    pub alg: String,
    pub kid: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub typ: Option<String>,
}

/// Header and claims read without any signature or claim checks. Only
/// suitable for routing (e.g. picking a trust anchor by `iss`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnverifiedJwt {
    pub header: JwtHeader,
    pub claims: JwtClaims,
}

/// Expected values for [`verify_with`]. The token passes the audience check
/// if any entry of `audiences` is literally present in its `aud` list.
#[derive(Debug, Clone)]
pub struct VerifyOptions<'a> {
    pub issuer: &'a str,
    pub audiences: &'a [String],
    pub now: i64,
    pub skew: i64,
}

fn b64(data: &[u8]) -> String {
    URL_SAFE_NO_PAD.encode(data)
}

fn unb64(segment: &str, what: &str) -> Result<Vec<u8>, TokenError> {
    URL_SAFE_NO_PAD
        .decode(segment)
        .map_err(|_| TokenError::Malformed(format!("{what} segment is not base64url")))
}

pub fn mint_jwt(claims: &JwtClaims, key: &SigningKey) -> Result<SignedJwt, TokenError> {
    claims.validate().map_err(TokenError::InvalidClaims)?;
    let header = JwtHeader {
        alg: key.algorithm().as_str().to_owned(),
        kid: key.key_id().to_owned(),
        typ: Some("JWT".into()),
    };
    let header_json = canonical_json(&serde_json::to_value(&header).expect("header serializes"));
    let signing_input = format!(
        "{}.{}",
        b64(header_json.as_bytes()),
        b64(claims.canonical_json().as_bytes())
    );
    let signature = key.sign(signing_input.as_bytes());
    Ok(SignedJwt(format!("{signing_input}.{}", b64(&signature))))
}

fn parse_header(segment: &str) -> Result<JwtHeader, TokenError> {
    serde_json::from_slice(&unb64(segment, "header")?)
        .map_err(|e| TokenError::Malformed(format!("header: {e}")))
}

fn parse_claims(segment: &str) -> Result<JwtClaims, TokenError> {
    let value: Value = serde_json::from_slice(&unb64(segment, "payload")?)
        .map_err(|e| TokenError::Malformed(format!("payload: {e}")))?;
    JwtClaims::from_json(&value)
}

pub fn decode_unverified(token: &SignedJwt) -> Result<UnverifiedJwt, TokenError> {
    let (h, p, s) = token.segments()?;
    unb64(s, "signature")?;
    Ok(UnverifiedJwt {
        header: parse_header(h)?,
        claims: parse_claims(p)?,
    })
}

/// Single-audience verification.
pub fn verify_jwt(
    token: &SignedJwt,
    keys: &JwkSet,
    expected_issuer: &str,
    expected_audience: &str,
    now: i64,
    skew: i64,
) -> Result<JwtClaims, TokenError> {
    let audiences = [expected_audience.to_owned()];
    verify_with(
        token,
        keys,
        &VerifyOptions {
            issuer: expected_issuer,
            audiences: &audiences,
            now,
            skew,
        },
    )
}

/// Checks, in order: key id resolves, signature, issuer, audience, time
/// window. The first failing check is reported.
pub fn verify_with(
    token: &SignedJwt,
    keys: &JwkSet,
    opts: &VerifyOptions<'_>,
) -> Result<JwtClaims, TokenError> {
    let (h, p, s) = token.segments()?;
    let header = parse_header(h)?;
    let jwk = keys
        .find(&header.kid)
        .ok_or_else(|| TokenError::UnknownKeyId(header.kid.clone()))?;
    let alg: Algorithm = header.alg.parse()?;
    // The header alg is attacker-controlled; the key's own alg decides.
    if alg != jwk.alg {
        return Err(TokenError::BadSignature);
    }
    let signature = unb64(s, "signature").map_err(|_| TokenError::BadSignature)?;
    let signing_input = &token.as_str()[..h.len() + 1 + p.len()];
    jwk.verify(signing_input.as_bytes(), &signature)?;

    let claims = parse_claims(p)?;
    if claims.issuer != opts.issuer {
        return Err(TokenError::IssuerMismatch {
            expected: opts.issuer.to_owned(),
            found: claims.issuer,
        });
    }
    if !opts.audiences.iter().any(|a| claims.audience.contains(a)) {
        return Err(TokenError::AudienceMismatch {
            expected: opts.audiences.to_vec(),
            found: claims.audience,
        });
    }
    if opts.now >= claims.expires_at.saturating_add(opts.skew) {
        return Err(TokenError::Expired {
            expires_at: claims.expires_at,
            now: opts.now,
        });
    }
    if let Some(nbf) = claims.not_before {
        if opts.now < nbf.saturating_sub(opts.skew) {
            return Err(TokenError::NotYetValid {
                not_before: nbf,
                now: opts.now,
            });
        }
    }
    Ok(claims)
}
