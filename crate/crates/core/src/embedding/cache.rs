use std::num::NonZeroUsize;
use std::sync::Mutex;

use lru::LruCache;

use super::Embedding;

pub const DEFAULT_CACHE_CAPACITY: usize = 100_000;

/// Bounded LRU cache from exact text to embedding, shared across threads.
#[derive(Debug)]
pub struct EmbeddingCache {
    inner: Mutex<LruCache<String, Embedding>>,
}

impl EmbeddingCache {
    pub fn new(capacity: usize) -> Self {
        let cap = NonZeroUsize::new(capacity).unwrap_or(NonZeroUsize::MIN);
        EmbeddingCache {
            inner: Mutex::new(LruCache::new(cap)),
        }
    }

    pub fn get(&self, text: &str) -> Option<Embedding> {
        self.lock().get(text).cloned()
    }

    pub fn put(&self, text: String, vector: Embedding) {
        self.lock().put(text, vector);
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, LruCache<String, Embedding>> {
        // A poisoned cache only ever holds complete entries.
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl Default for EmbeddingCache {
    fn default() -> Self {
        EmbeddingCache::new(DEFAULT_CACHE_CAPACITY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evicts_least_recently_used() {
        let cache = EmbeddingCache::new(2);
        cache.put("a".into(), Embedding::zeros(1));
        cache.put("b".into(), Embedding::zeros(1));
        cache.get("a");
        cache.put("c".into(), Embedding::zeros(1));
        assert!(cache.get("a").is_some());
        assert!(cache.get("b").is_none());
        assert_eq!(cache.len(), 2);
    }
}
