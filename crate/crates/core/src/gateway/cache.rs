use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{ChatClient, ChatRequest, ChatResponse, GatewayError, Message};

/// On-disk response cache laid out as `<dir>/<first-2-hex>/<hash>.json`.
///
/// Reads are lock-free; inserts are serialized and land through an atomic
/// rename, so a reader never observes a half-written record.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    endpoint: &'a str,
    model_id: &'a str,
    messages: &'a [Message],
    temperature: f64,
    max_tokens: u32,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(endpoint: &str, req: &ChatRequest) -> String {
        let material = KeyMaterial {
            endpoint,
            model_id: &req.model_id,
            messages: &req.messages,
            temperature: req.temperature,
            max_tokens: req.max_tokens,
        };
        let bytes = serde_json::to_vec(&material).expect("key material serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<ChatResponse> {
        let text = fs::read_to_string(self.path_for(key)).ok()?;
        match serde_json::from_str(&text) {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("ignoring unreadable cache record {key}: {e}");
                None
            }
        }
    }

    pub fn put(&self, key: &str, response: &ChatResponse) -> Result<(), GatewayError> {
        let path = self.path_for(key);
        let parent = path.parent().expect("cache path has a parent");
        let _guard = self.write_lock.lock();
        fs::create_dir_all(parent)?;
        let tmp = parent.join(format!(".{key}.tmp"));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&serde_json::to_vec(response).expect("response serializes"))?;
        f.sync_all()?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}

/// Serves repeated requests from a [`ResponseCache`]; a hit makes no call to
/// the wrapped client and reports `usage.cached = true`.
pub struct CachingClient<C> {
    inner: C,
    cache: ResponseCache,
}

impl<C: ChatClient> CachingClient<C> {
    pub fn new(inner: C, cache: ResponseCache) -> Self {
        Self { inner, cache }
    }

    pub fn inner(&self) -> &C {
        &self.inner
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }
}

impl<C: ChatClient> ChatClient for CachingClient<C> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        req.validate()?;
        let key = ResponseCache::key(self.inner.endpoint(), req);
        if let Some(mut hit) = self.cache.get(&key) {
            hit.usage.cached = true;
            return Ok(hit);
        }
        let mut response = self.inner.complete(req)?;
        response.usage.cached = false;
        self.cache.put(&key, &response)?;
        Ok(response)
    }

    fn endpoint(&self) -> &str {
        self.inner.endpoint()
    }
}
