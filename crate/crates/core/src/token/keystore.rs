use std::sync::{Arc, Mutex, RwLock};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::claims::JwtClaims;
use super::jwt::{mint_jwt, SignedJwt};
use super::keys::{Algorithm, Jwk, JwkSet, SigningKey};
use super::TokenError;

struct RetiredKey {
    jwk: Jwk,
    retired_at: i64,
}

#[derive(Default)]
struct KeyState {
    active: Option<Arc<SigningKey>>,
    retired: Vec<RetiredKey>,
    generation: u64,
}

/// Signing keys of one issuer.
///
/// Minting holds a read lock for the duration of the signature and rotation
/// swaps keys under the write lock, so every token is signed by a key that
/// is published in [`IssuerKeystore::jwks`] at that moment. Retired keys stay
/// published for `overlap_secs` after rotation so in-flight tokens keep
/// verifying.
pub struct IssuerKeystore {
    algorithm: Algorithm,
    overlap_secs: i64,
    state: RwLock<KeyState>,
    rotation: Mutex<()>,
    rng: Mutex<ChaCha20Rng>,
}

impl IssuerKeystore {
    /// An empty keystore. Call [`IssuerKeystore::rotate`] before minting.
    pub fn new(algorithm: Algorithm, overlap_secs: i64, seed: u64) -> Self {
        Self {
            algorithm,
            overlap_secs: overlap_secs.max(0),
            state: RwLock::new(KeyState::default()),
            rotation: Mutex::new(()),
            rng: Mutex::new(ChaCha20Rng::seed_from_u64(seed)),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn overlap_secs(&self) -> i64 {
        self.overlap_secs
    }

    /// Generates a new active key and retires the previous one.
    pub fn rotate(&self, now: i64) -> Result<(Arc<SigningKey>, JwkSet), TokenError> {
        // Rotations are serialized; keygen runs outside the state lock.
        let _rotation = self.rotation.lock().expect("rotation lock");
        let generation = self.state.read().expect("keystore lock").generation + 1;
        let key = {
            let mut rng = self.rng.lock().expect("keystore rng");
            let mut tag = [0u8; 4];
            rng.fill_bytes(&mut tag);
            let kid = format!("k{generation}-{}", hex::encode(tag));
            Arc::new(SigningKey::generate(kid, self.algorithm, &mut *rng)?)
        };
        let mut state = self.state.write().expect("keystore lock");
        if let Some(previous) = state.active.replace(key.clone()) {
            state.retired.push(RetiredKey {
                jwk: previous.public_jwk(),
                retired_at: now,
            });
        }
        state.generation = generation;
        let overlap = self.overlap_secs;
        state.retired.retain(|r| now < r.retired_at + overlap);
        let jwks = Self::published(&state, now, overlap);
        Ok((key, jwks))
    }

    fn published(state: &KeyState, now: i64, overlap: i64) -> JwkSet {
        let mut keys: Vec<Jwk> = state.active.iter().map(|k| k.public_jwk()).collect();
        keys.extend(
            state
                .retired
                .iter()
                .rev()
                .filter(|r| now < r.retired_at + overlap)
                .map(|r| r.jwk.clone()),
        );
        JwkSet { keys }
    }

    /// Active key first, then retired keys still inside the overlap window.
    pub fn jwks(&self, now: i64) -> JwkSet {
        let state = self.state.read().expect("keystore lock");
        Self::published(&state, now, self.overlap_secs)
    }

    pub fn active_key_id(&self) -> Option<String> {
        let state = self.state.read().expect("keystore lock");
        state.active.as_ref().map(|k| k.key_id().to_owned())
    }

    pub fn mint(&self, claims: &JwtClaims) -> Result<SignedJwt, TokenError> {
        let state = self.state.read().expect("keystore lock");
        let key = state.active.as_ref().ok_or(TokenError::NoActiveKey)?;
        mint_jwt(claims, key)
    }

    /// 128-bit random identifier, hex encoded.
    pub fn fresh_jwt_id(&self) -> String {
        let mut id = [0u8; 16];
        self.rng.lock().expect("keystore rng").fill_bytes(&mut id);
        hex::encode(id)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, HashSet};

    use super::*;
    use crate::token::verify_jwt;

    fn claims(ks: &IssuerKeystore, iat: i64) -> JwtClaims {
        JwtClaims {
            issuer: "https://idp.local".into(),
            subject: "s".into(),
            audience: vec!["a".into()],
            issued_at: iat,
            expires_at: iat + 3600,
            not_before: None,
            jwt_id: ks.fresh_jwt_id(),
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn empty_keystore_cannot_mint() {
        let ks = IssuerKeystore::new(Algorithm::ES256, 100, 1);
        assert!(ks.jwks(0).is_empty());
        assert!(matches!(ks.mint(&claims(&ks, 0)), Err(TokenError::NoActiveKey)));
    }

    #[test]
    fn overlap_keeps_old_key_published() {
        let ks = IssuerKeystore::new(Algorithm::ES256, 7200, 1);
        ks.rotate(0).unwrap();
        let c = claims(&ks, 10);
        let t = ks.mint(&c).unwrap();
        let (_, jwks) = ks.rotate(20).unwrap();
        assert_eq!(jwks.len(), 2);
        verify_jwt(&t, &jwks, "https://idp.local", "a", 30, 30).unwrap();
        // Window closes 7200 s after retirement.
        assert_eq!(ks.jwks(7219).len(), 2);
        assert_eq!(ks.jwks(7220).len(), 1);
    }

    #[test]
    fn zero_overlap_drops_old_key() {
        let ks = IssuerKeystore::new(Algorithm::ES256, 0, 1);
        ks.rotate(0).unwrap();
        let c = claims(&ks, 10);
        let t = ks.mint(&c).unwrap();
        let (_, jwks) = ks.rotate(20).unwrap();
        assert_eq!(jwks.len(), 1);
        assert!(matches!(
            verify_jwt(&t, &jwks, "https://idp.local", "a", 30, 30),
            Err(TokenError::UnknownKeyId(_))
        ));
    }

    #[test]
    fn rotated_key_ids_are_distinct() {
        let ks = IssuerKeystore::new(Algorithm::ES256, 1_000_000, 9);
        for i in 0..5 {
            ks.rotate(i).unwrap();
        }
        let jwks = ks.jwks(5);
        let ids: HashSet<_> = jwks.key_ids().into_iter().collect();
        assert_eq!(ids.len(), 5);
    }

    #[test]
    fn jwt_ids_are_unique() {
        let ks = IssuerKeystore::new(Algorithm::ES256, 0, 3);
        let ids: HashSet<_> = (0..1000).map(|_| ks.fresh_jwt_id()).collect();
        assert_eq!(ids.len(), 1000);
        assert!(ids.iter().all(|id| id.len() == 32));
    }

    #[test]
    fn concurrent_minting_during_rotation() {
        let ks = Arc::new(IssuerKeystore::new(Algorithm::ES256, 0, 4));
        ks.rotate(0).unwrap();
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let ks = ks.clone();
                std::thread::spawn(move || {
                    (0..50)
                        .map(|_| {
                            // Snapshot the set right after minting: the signing
                            // key must be in it unless a rotation happened since.
                            let t = ks.mint(&claims(&ks, 0)).unwrap();
                            (t, ks.jwks(0))
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for i in 1..20 {
            ks.rotate(i).unwrap();
        }
        let mut verified = 0;
        for h in handles {
            for (t, jwks) in h.join().unwrap() {
                match verify_jwt(&t, &jwks, "https://idp.local", "a", 0, 30) {
                    Ok(_) => verified += 1,
                    Err(TokenError::UnknownKeyId(_)) => {}
                    Err(e) => panic!("unexpected {e}"),
                }
            }
        }
        assert!(verified > 0);
    }
}
