//! JWT minting and verification, JWK sets, and issuer key rotation.
//!
//! Only RS256 and ES256 are supported. Claims are serialized with sorted
//! keys, so minting with a fixed key is deterministic.

mod claims;
mod jwt;
mod keys;
mod keystore;

use thiserror::Error;

pub use claims::{canonical_json, ClaimValue, ClaimsViolation, JwtClaims};
pub use jwt::{
    decode_unverified, mint_jwt, verify_jwt, verify_with, JwtHeader, SignedJwt, UnverifiedJwt,
    VerifyOptions, DEFAULT_SKEW_SECS,
};
pub use keys::{Algorithm, Jwk, JwkSet, SigningKey};
pub use keystore::IssuerKeystore;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("unsupported algorithm {0}")]
    UnsupportedAlgorithm(String),
    #[error("invalid claims: {0}")]
    InvalidClaims(ClaimsViolation),
    #[error("malformed token: {0}")]
    Malformed(String),
    #[error("unknown key id {0}")]
    UnknownKeyId(String),
    #[error("signature verification failed")]
    BadSignature,
    #[error("issuer mismatch: expected {expected}, found {found}")]
    IssuerMismatch { expected: String, found: String },
    #[error("audience mismatch: expected one of {expected:?}, token has {found:?}")]
    AudienceMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("token expired at {expires_at} (now {now})")]
    Expired { expires_at: i64, now: i64 },
    #[error("token not valid before {not_before} (now {now})")]
    NotYetValid { not_before: i64, now: i64 },
    #[error("keystore has no active signing key")]
    NoActiveKey,
    #[error("crypto failure: {0}")]
    Crypto(String),
}

impl TokenError {
    /// Stable variant name, used in audit logs and wire responses.
    pub fn kind(&self) -> &'static str {
        match self {
            TokenError::UnsupportedAlgorithm(_) => "UnsupportedAlgorithm",
            TokenError::InvalidClaims(_) => "InvalidClaims",
            TokenError::Malformed(_) => "Malformed",
            TokenError::UnknownKeyId(_) => "UnknownKeyId",
            TokenError::BadSignature => "BadSignature",
            TokenError::IssuerMismatch { .. } => "IssuerMismatch",
            TokenError::AudienceMismatch { .. } => "AudienceMismatch",
            TokenError::Expired { .. } => "Expired",
            TokenError::NotYetValid { .. } => "NotYetValid",
            TokenError::NoActiveKey => "NoActiveKey",
            TokenError::Crypto(_) => "Crypto",
        }
    }
}
