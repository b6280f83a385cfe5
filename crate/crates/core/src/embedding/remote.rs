use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Embedding, EmbeddingCache, EmbeddingProvider};
use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_BATCH_SIZE: usize = 64;
const MAX_IN_FLIGHT: usize = 4;

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dimension: usize,
}

#[derive(Deserialize)]
struct HealthResponse {
    status: String,
    dimension: usize,
}

/// Client for an embedding service speaking
/// `POST /embed {"texts": [...]}` and `GET /health`.
///
/// Vectors are cached by exact text. Uncached texts are sent in batches of
/// at most `batch_size`, several batches in flight at once; results are
/// reassembled in request order.
#[derive(Debug)]
pub struct RemoteProvider {
    base_url: String,
    agent: ureq::Agent,
    dimension: usize,
    batch_size: usize,
    cache: EmbeddingCache,
}

impl RemoteProvider {
    /// Probes `GET /health` and records the reported dimension.
    pub fn connect(base_url: &str, timeout: Duration) -> Result<Self> {
        let base_url = base_url.trim_end_matches('/').to_string();
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        let health: HealthResponse = agent
            .get(&format!("{base_url}/health"))
            .call()
            .map_err(|e| Error::Provider(format!("{base_url}/health: {e}")))?
            .into_json()
            .map_err(|e| Error::Provider(format!("{base_url}/health: bad response: {e}")))?;
        if health.status != "ok" {
            return Err(Error::Provider(format!(
                "{base_url}/health reported status {:?}",
                health.status
            )));
        }
        if health.dimension == 0 {
            return Err(Error::Provider("service reported dimension 0".into()));
        }
        Ok(RemoteProvider {
            base_url,
            agent,
            dimension: health.dimension,
            batch_size: DEFAULT_BATCH_SIZE,
            cache: EmbeddingCache::default(),
        })
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        let url = format!("{}/embed", self.base_url);
        let resp: EmbedResponse = self
            .agent
            .post(&url)
            .send_json(EmbedRequest { texts })
            .map_err(|e| Error::Provider(format!("{url}: {e}")))?
            .into_json()
            .map_err(|e| Error::Provider(format!("{url}: bad response: {e}")))?;
        if resp.dimension != self.dimension {
            return Err(Error::Provider(format!(
                "dimension changed from {} to {}",
                self.dimension, resp.dimension
            )));
        }
        if resp.vectors.len() != texts.len() {
            return Err(Error::Provider(format!(
                "sent {} texts, received {} vectors",
                texts.len(),
                resp.vectors.len()
            )));
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dimension {
                    return Err(Error::Provider(format!(
                        "vector of length {} from a {}-dimensional model",
                        v.len(),
                        self.dimension
                    )));
                }
                Embedding::new(v)
                    .map(Embedding::normalized)
                    .map_err(|_| Error::Provider("non-finite vector component".into()))
            })
            .collect()
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn name(&self) -> String {
        format!("remote:{}", self.base_url)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        if let Some(t) = texts.iter().find(|t| t.trim().is_empty()) {
            return Err(Error::InvalidArgument(format!("cannot embed empty text {t:?}")));
        }
        let mut out: Vec<Option<Embedding>> = texts.iter().map(|t| self.cache.get(t)).collect();
        let mut missing: Vec<String> = texts
            .iter()
            .zip(&out)
            .filter(|(_, hit)| hit.is_none())
            .map(|(t, _)| t.clone())
            .collect();
        missing.sort();
        missing.dedup();

        let batches: Vec<&[String]> = missing.chunks(self.batch_size).collect();
        let mut fetched: Vec<Embedding> = Vec::with_capacity(missing.len());
        for wave in batches.chunks(MAX_IN_FLIGHT) {
            let results: Vec<Result<Vec<Embedding>>> = std::thread::scope(|s| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|batch| s.spawn(move || self.post_batch(batch)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| {
                        h.join()
                            .unwrap_or_else(|_| Err(Error::Provider("request thread panicked".into())))
                    })
                    .collect()
            });
            for r in results {
                fetched.extend(r?);
            }
        }

        for (text, vector) in missing.into_iter().zip(fetched) {
            self.cache.put(text, vector);
        }
        for (slot, text) in out.iter_mut().zip(texts) {
            if slot.is_none() {
                *slot = self.cache.get(text);
            }
        }
        out.into_iter()
            .map(|v| v.ok_or_else(|| Error::Provider("embedding evicted before use".into())))
            .collect()
    }
}
