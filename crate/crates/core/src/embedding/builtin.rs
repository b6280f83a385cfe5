use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{Embedding, EmbeddingCache, EmbeddingProvider};
use crate::error::{Error, Result};

pub const DEFAULT_DIMENSION: usize = 256;

/// Stable 64-bit token hash: the first eight bytes of SHA-256.
fn token_hash(token: &str) -> u64 {
    let digest = Sha256::digest(token.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

/// Deterministic pseudo-random unit vector for one token.
///
/// Components are drawn uniformly from `[-1, 1]` by a ChaCha8 stream keyed on
/// `(seed, hash(token))`, then the vector is normalized. Output is identical
/// across runs and platforms.
pub fn builtin_token_vector(token: &str, dimension: usize, seed: u64) -> Result<Embedding> {
    if token.is_empty() {
        return Err(Error::InvalidArgument("cannot embed an empty token".into()));
    }
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&token_hash(token).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    let components = (0..dimension)
        .map(|_| {
            // 53 random mantissa bits -> [0, 1) -> [-1, 1)
            let unit = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            2.0 * unit - 1.0
        })
        .collect();
    Ok(Embedding(components).normalized())
}

/// Offline provider: a text embeds as the normalized mean of its whitespace
/// tokens' pseudo-random vectors. Token order does not matter.
#[derive(Debug)]
pub struct BuiltinProvider {
    dimension: usize,
    seed: u64,
    cache: EmbeddingCache,
}

impl BuiltinProvider {
    pub fn new(dimension: usize, seed: u64) -> Self {
        BuiltinProvider {
            dimension,
            seed,
            cache: EmbeddingCache::default(),
        }
    }

    pub fn with_cache_capacity(mut self, capacity: usize) -> Self {
        self.cache = EmbeddingCache::new(capacity);
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn embed_text(&self, text: &str) -> Result<Embedding> {
        if let Some(hit) = self.cache.get(text) {
            return Ok(hit);
        }
        // Summing in sorted token order makes pooling exactly order-free.
        let mut tokens: Vec<&str> = text.split_whitespace().collect();
        tokens.sort_unstable();
        let vectors = tokens
            .into_iter()
            .map(|t| self.token(t))
            .collect::<Result<Vec<_>>>()?;
        let pooled = match vectors.len() {
            0 => return Err(Error::InvalidArgument("cannot embed an empty text".into())),
            // Token vectors are already unit norm; renormalizing could move the last bit.
            1 => vectors.into_iter().next().expect("one vector"),
            _ => Embedding::mean(&vectors).expect("non-empty").normalized(),
        };
        self.cache.put(text.to_string(), pooled.clone());
        Ok(pooled)
    }

    fn token(&self, token: &str) -> Result<Embedding> {
        // Single tokens share the text cache.
        if let Some(hit) = self.cache.get(token) {
            return Ok(hit);
        }
        let v = builtin_token_vector(token, self.dimension, self.seed)?;
        self.cache.put(token.to_string(), v.clone());
        Ok(v)
    }
}

impl Default for BuiltinProvider {
    fn default() -> Self {
        BuiltinProvider::new(DEFAULT_DIMENSION, 0)
    }
}

impl EmbeddingProvider for BuiltinProvider {
    fn name(&self) -> String {
        format!("builtin:dim={},seed={}", self.dimension, self.seed)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        texts.iter().map(|t| self.embed_text(t)).collect()
    }
}
