use super::{CheckMode, CheckResult};
use crate::fingerprint::{state_fingerprint, Fingerprint};
use lru::LruCache;
use parking_lot::Mutex;
use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::Arc;

pub const DEFAULT_GLOBAL_CAPACITY: usize = 50_000;

/// `(fingerprint of the joined prefix, candidate, mode)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub prefix_fp: Fingerprint,
    pub candidate: String,
    pub mode: CheckMode,
}

impl CacheKey {
    pub fn new(prefix: &[String], candidate: &str, mode: CheckMode) -> Self {
        CacheKey {
            prefix_fp: prefix_fingerprint(prefix),
            candidate: candidate.trim().to_string(),
            mode,
        }
    }
}

pub fn prefix_fingerprint(prefix: &[String]) -> Fingerprint {
    state_fingerprint(&prefix.join("\n"))
}

/// Bounded LRU cache shared across runs.
pub struct GlobalCache {
    inner: Mutex<LruCache<CacheKey, CheckResult>>,
    capacity: usize,
}

impl GlobalCache {
    pub fn new(capacity: usize) -> Self {
        let cap = NonZeroUsize::new(capacity.max(1)).unwrap();
        GlobalCache {
            inner: Mutex::new(LruCache::new(cap)),
            capacity: cap.get(),
        }
    }

    pub fn shared(capacity: usize) -> Arc<Self> {
        Arc::new(Self::new(capacity))
    }

    pub fn get(&self, key: &CacheKey) -> Option<CheckResult> {
        self.inner.lock().get(key).cloned()
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.inner.lock().contains(key)
    }

    pub fn insert(&self, key: CacheKey, value: CheckResult) {
        self.inner.lock().put(key, value);
    }

    pub fn len(&self) -> usize {
        self.inner.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

impl Default for GlobalCache {
    fn default() -> Self {
        Self::new(DEFAULT_GLOBAL_CAPACITY)
    }
}

/// Per-run map in front of the shared global cache.
pub struct StepCache {
    per_run: Mutex<HashMap<CacheKey, CheckResult>>,
    global: Arc<GlobalCache>,
}

impl StepCache {
    pub fn new(global: Arc<GlobalCache>) -> Self {
        StepCache {
            per_run: Mutex::new(HashMap::new()),
            global,
        }
    }

    /// A cache with a private global level, for one-off checks.
    pub fn isolated() -> Self {
        Self::new(GlobalCache::shared(DEFAULT_GLOBAL_CAPACITY))
    }

    pub fn global(&self) -> &Arc<GlobalCache> {
        &self.global
    }

    /// Per-run first, then global (promoting global hits into the run map).
    pub fn lookup(&self, key: &CacheKey) -> Option<CheckResult> {
        if let Some(hit) = self.per_run.lock().get(key) {
            return Some(hit.clone());
        }
        let hit = self.global.get(key)?;
        self.per_run.lock().insert(key.clone(), hit.clone());
        Some(hit)
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.per_run.lock().contains_key(key) || self.global.contains(key)
    }

    pub fn store(&self, key: CacheKey, result: &CheckResult) {
        let mut stored = result.clone();
        stored.cache_hit = false;
        self.per_run.lock().insert(key.clone(), stored.clone());
        self.global.insert(key, stored);
    }

    pub fn run_len(&self) -> usize {
        self.per_run.lock().len()
    }
}
