//! Content-addressed response cache: one JSON file per request digest.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::provider::{complete, CompletionRequest, Provider, ProviderError, RetryPolicy};

/// SHA-256 over the canonical JSON of (model_id, temperature, top_p, prompt).
pub fn cache_key(request: &CompletionRequest) -> String {
    let canonical = serde_json::to_string(&(
        &request.model_id,
        request.temperature,
        request.top_p,
        &request.prompt,
    ))
    .expect("tuple of strings and floats serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Entry {
    key: String,
    model_id: String,
    temperature: f64,
    top_p: f64,
    prompt: String,
    reply: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CacheLookup {
    Hit(String),
    Miss,
    /// The file exists but could not be used; treated as a miss.
    Corrupt(String),
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<ResponseCache> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, request: &CompletionRequest) -> CacheLookup {
        let key = cache_key(request);
        let path = self.path(&key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return CacheLookup::Miss,
            Err(e) => return CacheLookup::Corrupt(format!("{}: {e}", path.display())),
        };
        match serde_json::from_str::<Entry>(&text) {
            Ok(entry) if entry.key == key && entry.prompt == request.prompt => {
                CacheLookup::Hit(entry.reply)
            }
            Ok(_) => CacheLookup::Corrupt(format!("{}: entry does not match its key", path.display())),
            Err(e) => CacheLookup::Corrupt(format!("{}: {e}", path.display())),
        }
    }

    /// Writes through a temporary file and a rename, so concurrent writers
    /// of the same key never leave a torn file behind.
    pub fn put(&self, request: &CompletionRequest, reply: &str) -> io::Result<()> {
        let key = cache_key(request);
        let entry = Entry {
            key: key.clone(),
            model_id: request.model_id.clone(),
            temperature: request.temperature,
            top_p: request.top_p,
            prompt: request.prompt.clone(),
            reply: reply.to_string(),
        };
        let tmp = self.dir.join(format!(
            ".{key}.{}.{}.tmp",
            std::process::id(),
            TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(serde_json::to_string_pretty(&entry)?.as_bytes())?;
            f.write_all(b"\n")?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.path(&key))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CachedReply {
    pub reply: String,
    pub digest: String,
    pub cached: bool,
    pub duration_ms: u64,
    pub warnings: Vec<String>,
}

/// One line of a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogEntry {
    pub pair_id: String,
    pub step: String,
    pub digest: String,
    pub duration_ms: u64,
    pub cached: bool,
}

/// Returns the cached reply when present; otherwise calls the provider (with
/// retries) and stores the result.
pub fn cached_complete(
    request: &CompletionRequest,
    provider: &dyn Provider,
    cache: &ResponseCache,
    policy: &RetryPolicy,
) -> Result<CachedReply, ProviderError> {
    let started = Instant::now();
    let digest = cache_key(request);
    let mut warnings = Vec::new();
    match cache.get(request) {
        CacheLookup::Hit(reply) => {
            return Ok(CachedReply {
                reply,
                digest,
                cached: true,
                duration_ms: started.elapsed().as_millis() as u64,
                warnings,
            })
        }
        CacheLookup::Corrupt(why) => warnings.push(format!("ignoring cache entry {why}")),
        CacheLookup::Miss => {}
    }
    let reply = complete(request, provider, policy)?;
    if let Err(e) = cache.put(request, &reply) {
        warnings.push(format!("could not write cache entry {digest}: {e}"));
    }
    Ok(CachedReply {
        reply,
        digest,
        cached: false,
        duration_ms: started.elapsed().as_millis() as u64,
        warnings,
    })
}
