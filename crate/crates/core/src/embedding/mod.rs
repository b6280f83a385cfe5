//! Sentence and phrase embeddings.
//!
//! Label expansion and featurization only see the [`EmbeddingProvider`]
//! trait. [`BuiltinProvider`] is a deterministic offline stand-in built from
//! pseudo-random token vectors; [`RemoteProvider`] talks to an HTTP service
//! hosting a real sentence-embedding model.

mod builtin;
mod cache;
mod remote;

pub use builtin::{builtin_token_vector, BuiltinProvider, DEFAULT_DIMENSION};
pub use cache::{EmbeddingCache, DEFAULT_CACHE_CAPACITY};
pub use remote::{RemoteProvider, DEFAULT_BATCH_SIZE, DEFAULT_TIMEOUT};

use crate::error::{Error, Result};

/// A finite real vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Rejects NaN and infinite components.
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("embedding".into()));
        }
        Ok(Embedding(components))
    }

    pub fn zeros(dimension: usize) -> Self {
        Embedding(vec![0.0; dimension])
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Scales to unit Euclidean norm. The zero vector stays zero.
    pub fn normalized(mut self) -> Self {
        let norm = self.norm();
        if norm > 0.0 {
            self.0.iter_mut().for_each(|x| *x /= norm);
        }
        self
    }

    /// Component-wise mean of equally sized vectors.
    pub fn mean<'a>(vectors: impl IntoIterator<Item = &'a Embedding>) -> Option<Embedding> {
        let mut iter = vectors.into_iter();
        let first = iter.next()?;
        let mut acc = first.0.clone();
        let mut count = 1usize;
        for v in iter {
            debug_assert_eq!(v.dimension(), acc.len());
            acc.iter_mut().zip(&v.0).for_each(|(a, b)| *a += b);
            count += 1;
        }
        let inv = 1.0 / count as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        Some(Embedding(acc))
    }
}

/// Cosine similarity clamped to `[-1, 1]`; zero when either vector is zero.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dimension() != b.dimension() {
        return Err(Error::DimensionMismatch {
            expected: a.dimension(),
            actual: b.dimension(),
        });
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / denom).clamp(-1.0, 1.0))
}

/// Turns texts into unit-norm embeddings.
///
/// Implementations must be deterministic: the same text always yields the
/// same vector from one provider instance.
pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier recorded in output artifacts.
    fn name(&self) -> String;

    fn dimension(&self) -> usize;

    /// One unit-norm vector per input, in input order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>>;

    fn embed(&self, text: &str) -> Result<Embedding> {
        let mut out = self.embed_batch(&[text.to_string()])?;
        out.pop()
            .ok_or_else(|| Error::Provider("provider returned no vector".into()))
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        (**self).embed_batch(texts)
    }
}
