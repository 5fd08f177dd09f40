use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use p256::ecdsa::signature::{Signer, Verifier};
use rand::{CryptoRng, RngCore};
use rsa::pkcs1v15;
use rsa::traits::PublicKeyParts;
use rsa::{BigUint, RsaPrivateKey, RsaPublicKey};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use super::TokenError;

const RSA_BITS: usize = 2048;

/// Asymmetric JWS algorithms. Symmetric algorithms are deliberately absent:
/// a verifier must never hold material that can mint tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    RS256,
    ES256,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::RS256 => "RS256",
            Algorithm::ES256 => "ES256",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = TokenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "RS256" => Ok(Algorithm::RS256),
            "ES256" => Ok(Algorithm::ES256),
            other => Err(TokenError::UnsupportedAlgorithm(other.to_owned())),
        }
    }
}

enum PrivateMaterial {
    Rsa(Box<pkcs1v15::SigningKey<Sha256>>, RsaPublicKey),
    Ec(p256::ecdsa::SigningKey),
}

/// Private signing key with its key id. Not serializable and redacted in
/// `Debug` output; only [`SigningKey::public_jwk`] leaves this type.
pub struct SigningKey {
    key_id: String,
    material: PrivateMaterial,
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SigningKey")
            .field("key_id", &self.key_id)
            .field("algorithm", &self.algorithm())
            .finish_non_exhaustive()
    }
}

impl SigningKey {
    pub fn generate<R: RngCore + CryptoRng>(
        key_id: impl Into<String>,
        algorithm: Algorithm,
        rng: &mut R,
    ) -> Result<Self, TokenError> {
        let material = match algorithm {
            Algorithm::RS256 => {
                let private = RsaPrivateKey::new(rng, RSA_BITS)
                    .map_err(|e| TokenError::Crypto(e.to_string()))?;
                let public = private.to_public_key();
                PrivateMaterial::Rsa(Box::new(pkcs1v15::SigningKey::new(private)), public)
            }
            Algorithm::ES256 => PrivateMaterial::Ec(p256::ecdsa::SigningKey::random(rng)),
        };
        Ok(Self {
            key_id: key_id.into(),
            material,
        })
    }

    pub fn key_id(&self) -> &str {
        &self.key_id
    }

    pub fn algorithm(&self) -> Algorithm {
        match self.material {
            PrivateMaterial::Rsa(..) => Algorithm::RS256,
            PrivateMaterial::Ec(_) => Algorithm::ES256,
        }
    }

    pub(crate) fn sign(&self, message: &[u8]) -> Vec<u8> {
        match &self.material {
            PrivateMaterial::Rsa(key, _) => {
                let sig: pkcs1v15::Signature = key.sign(message);
                rsa::signature::SignatureEncoding::to_vec(&sig)
            }
            PrivateMaterial::Ec(key) => {
                let sig: p256::ecdsa::Signature = key.sign(message);
                sig.to_bytes().to_vec()
            }
        }
    }

    pub fn public_jwk(&self) -> Jwk {
        match &self.material {
            PrivateMaterial::Rsa(_, public) => Jwk {
                kty: "RSA".into(),
                kid: self.key_id.clone(),
                alg: Algorithm::RS256,
                key_use: Some("sig".into()),
                n: Some(URL_SAFE_NO_PAD.encode(public.n().to_bytes_be())),
                e: Some(URL_SAFE_NO_PAD.encode(public.e().to_bytes_be())),
                crv: None,
                x: None,
                y: None,
            },
            PrivateMaterial::Ec(key) => {
                let point = key.verifying_key().to_encoded_point(false);
                Jwk {
                    kty: "EC".into(),
                    kid: self.key_id.clone(),
                    alg: Algorithm::ES256,
                    key_use: Some("sig".into()),
                    n: None,
                    e: None,
                    crv: Some("P-256".into()),
                    x: point.x().map(|x| URL_SAFE_NO_PAD.encode(x)),
                    y: point.y().map(|y| URL_SAFE_NO_PAD.encode(y)),
                }
            }
        }
    }
}

/// Public key in JWK form. Only public parameters have fields here, so a
/// serialized set cannot carry private material.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Jwk {
    pub kty: String,
    pub kid: String,
    pub alg: Algorithm,
    #[serde(rename = "use", default, skip_serializing_if = "Option::is_none")]
    pub key_use: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<String>,
}

fn b64_param(value: &Option<String>, name: &str) -> Result<Vec<u8>, TokenError> {
    let raw = value
        .as_deref()
        .ok_or_else(|| TokenError::Malformed(format!("jwk missing {name}")))?;
    URL_SAFE_NO_PAD
        .decode(raw)
        .map_err(|_| TokenError::Malformed(format!("jwk parameter {name} is not base64url")))
}

impl Jwk {
    /// Checks a signature over `message`. Any decoding problem with the
    /// signature bytes is reported as [`TokenError::BadSignature`].
    pub(crate) fn verify(&self, message: &[u8], signature: &[u8]) -> Result<(), TokenError> {
        match self.alg {
            Algorithm::RS256 => {
                if self.kty != "RSA" {
                    return Err(TokenError::Malformed("RS256 key is not an RSA jwk".into()));
                }
                let n = BigUint::from_bytes_be(&b64_param(&self.n, "n")?);
                let e = BigUint::from_bytes_be(&b64_param(&self.e, "e")?);
                let public = RsaPublicKey::new(n, e)
                    .map_err(|e| TokenError::Malformed(format!("bad RSA jwk: {e}")))?;
                let key = pkcs1v15::VerifyingKey::<Sha256>::new(public);
                let sig = pkcs1v15::Signature::try_from(signature)
                    .map_err(|_| TokenError::BadSignature)?;
                key.verify(message, &sig).map_err(|_| TokenError::BadSignature)
            }
            Algorithm::ES256 => {
                if self.kty != "EC" || self.crv.as_deref() != Some("P-256") {
                    return Err(TokenError::Malformed("ES256 key is not a P-256 jwk".into()));
                }
                let x = b64_param(&self.x, "x")?;
                let y = b64_param(&self.y, "y")?;
                if x.len() != 32 || y.len() != 32 {
                    return Err(TokenError::Malformed("bad P-256 coordinate length".into()));
                }
                let mut sec1 = Vec::with_capacity(65);
                sec1.push(0x04);
                sec1.extend_from_slice(&x);
                sec1.extend_from_slice(&y);
                let key = p256::ecdsa::VerifyingKey::from_sec1_bytes(&sec1)
                    .map_err(|_| TokenError::Malformed("P-256 point not on curve".into()))?;
                let sig = p256::ecdsa::Signature::from_slice(signature)
                    .map_err(|_| TokenError::BadSignature)?;
                key.verify(message, &sig).map_err(|_| TokenError::BadSignature)
            }
        }
    }
}

/// Published verification keys, serialized as `{"keys":[...]}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JwkSet {
    pub keys: Vec<Jwk>,
}

impl JwkSet {
    pub fn find(&self, key_id: &str) -> Option<&Jwk> {
        self.keys.iter().find(|k| k.kid == key_id)
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn key_ids(&self) -> Vec<&str> {
        self.keys.iter().map(|k| k.kid.as_str()).collect()
    }
}
