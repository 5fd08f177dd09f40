//! Fetching and caching of trust-anchor key sets.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::http::{split_url, HttpRequest, HttpTransport};
use crate::token::JwkSet;

pub const DEFAULT_JWKS_CACHE_TTL: i64 = 300;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JwksSource {
    Uri(String),
    Inline(JwkSet),
}

pub trait JwksFetcher: Send + Sync {
    fn fetch(&self, uri: &str) -> Result<JwkSet, String>;
}

/// Fetches over any [`HttpTransport`].
pub struct HttpJwksFetcher {
    transport: Arc<dyn HttpTransport>,
}

impl HttpJwksFetcher {
    pub fn new(transport: Arc<dyn HttpTransport>) -> Self {
        Self { transport }
    }
}

impl JwksFetcher for HttpJwksFetcher {
    fn fetch(&self, uri: &str) -> Result<JwkSet, String> {
        let (base, path) = split_url(uri).ok_or_else(|| format!("not an absolute URL: {uri}"))?;
        let resp = self
            .transport
            .send(base, HttpRequest::get(path))
            .map_err(|e| e.to_string())?;
        if resp.status != 200 {
            return Err(format!("{uri} returned {}", resp.status));
        }
        resp.parse().map_err(|e| format!("{uri}: {e}"))
    }
}

/// Fetcher for deployments where every provider is registered inline.
pub struct NoFetcher;

impl JwksFetcher for NoFetcher {
    fn fetch(&self, uri: &str) -> Result<JwkSet, String> {
        Err(format!("no fetcher configured for {uri}"))
    }
}

#[derive(Clone)]
struct Entry {
    keys: JwkSet,
    fetched_at: i64,
}

/// Per-provider key cache. Entries older than the provider's TTL are
/// refetched; a failed refetch falls back to the stale keys.
pub struct JwksCache {
    fetcher: Arc<dyn JwksFetcher>,
    entries: Mutex<HashMap<String, Entry>>,
    fetches: Mutex<u64>,
}

impl JwksCache {
    pub fn new(fetcher: Arc<dyn JwksFetcher>) -> Self {
        Self {
            fetcher,
            entries: Mutex::new(HashMap::new()),
            fetches: Mutex::new(0),
        }
    }

    fn fetch(&self, uri: &str) -> Result<JwkSet, String> {
        *self.fetches.lock().expect("fetch counter") += 1;
        self.fetcher.fetch(uri)
    }

    /// Number of remote fetches performed so far.
    pub fn fetch_count(&self) -> u64 {
        *self.fetches.lock().expect("fetch counter")
    }

    /// Fetches and stores keys unconditionally.
    pub fn prime(
        &self,
        provider_id: &str,
        source: &JwksSource,
        now: i64,
    ) -> Result<JwkSet, String> {
        let keys = match source {
            JwksSource::Inline(keys) => keys.clone(),
            JwksSource::Uri(uri) => self.fetch(uri)?,
        };
        self.entries.lock().expect("jwks cache").insert(
            provider_id.to_owned(),
            Entry {
                keys: keys.clone(),
                fetched_at: now,
            },
        );
        Ok(keys)
    }

    /// Cached keys when fresh; otherwise a refetch, falling back to stale
    /// keys if the fetch fails. `force` skips the freshness check.
    pub fn get(
        &self,
        provider_id: &str,
        source: &JwksSource,
        ttl: i64,
        now: i64,
        force: bool,
    ) -> Result<JwkSet, String> {
        if let JwksSource::Inline(keys) = source {
            return Ok(keys.clone());
        }
        let cached = self
            .entries
            .lock()
            .expect("jwks cache")
            .get(provider_id)
            .cloned();
        match cached {
            Some(e) if !force && now < e.fetched_at + ttl => Ok(e.keys),
            Some(e) => self.prime(provider_id, source, now).or(Ok(e.keys)),
            None => self.prime(provider_id, source, now),
        }
    }

    pub fn evict(&self, provider_id: &str) {
        self.entries.lock().expect("jwks cache").remove(provider_id);
    }
}
