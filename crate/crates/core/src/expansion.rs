//! Label expansion: grow each label name into a scored phrase vocabulary.
//!
//! Every corpus n-gram is scored by cosine similarity to the label name.
//! Each label keeps the phrases scoring at least `tau` (never fewer than
//! `min_k`, never more than `max_k`), and each kept phrase's score is then
//! discounted by how many labels share it:
//!
//! ```text
//! score = raw * ln(n / LF(phrase))
//! ```
//!
//! where `n` is the number of labels and `LF` counts the post-cut
//! vocabularies containing the phrase.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::LabelSet;
use crate::embedding::{cosine, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::ngram::NGramIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpansionConfig {
    /// Minimum raw similarity for a phrase to enter a vocabulary.
    pub tau: f64,
    pub min_k: usize,
    pub max_k: usize,
    /// Drop pool n-grams seen fewer than `min_frequency` times once the
    /// corpus exceeds `prune_above_documents` documents.
    pub prune_rare: bool,
    pub min_frequency: usize,
    pub prune_above_documents: usize,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig {
            tau: 0.7,
            min_k: 2,
            max_k: 100,
            prune_rare: true,
            min_frequency: 2,
            prune_above_documents: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabularyEntry {
    pub phrase: String,
    /// Cosine similarity to the label name.
    pub raw: f64,
    /// Discounted score used for matching.
    pub score: f64,
}

/// Scored phrases for one label, sorted by raw score (descending) with
/// lexicographic tie-break.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelVocabulary {
    pub id: usize,
    pub name: String,
    pub entries: Vec<VocabularyEntry>,
}

impl LabelVocabulary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Phrase -> number of label vocabularies containing it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelFrequencyTable(BTreeMap<String, usize>);

impl LabelFrequencyTable {
    pub fn get(&self, phrase: &str) -> usize {
        self.0.get(phrase).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Discounted phrase score `raw * ln(n / lf)`.
pub fn discount(raw: f64, n: usize, label_frequency: usize) -> f64 {
    raw * (n as f64 / label_frequency as f64).ln()
}

fn by_score_then_phrase(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// Scores every candidate phrase against one label name, best first.
pub fn rank_candidates(
    label: &str,
    pool: &[String],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<(String, f64)>> {
    let mut ranked = rank_all(&[label.to_string()], pool, provider)?;
    Ok(ranked.pop().unwrap_or_default())
}

/// Ranks the pool for several labels at once, embedding the pool only once.
pub fn rank_all(
    labels: &[String],
    pool: &[String],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Vec<(String, f64)>>> {
    if pool.is_empty() {
        return Err(Error::InvalidArgument("empty candidate pool".into()));
    }
    let label_vectors = provider.embed_batch(labels)?;
    let pool_vectors = provider.embed_batch(pool)?;
    label_vectors
        .par_iter()
        .map(|lv| {
            let mut scored = pool
                .iter()
                .zip(&pool_vectors)
                .map(|(phrase, pv)| Ok((phrase.clone(), cosine(lv, pv)?)))
                .collect::<Result<Vec<_>>>()?;
            scored.sort_by(by_score_then_phrase);
            Ok(scored)
        })
        .collect()
}

/// Applies the threshold and size limits to each ranked list, then
/// discounts the surviving phrases by label frequency.
///
/// `ranked[i]` is label `i`'s candidate list; it is re-sorted here so callers
/// may pass lists in any order.
pub fn preprocess_vocabularies(
    ranked: &[Vec<(String, f64)>],
    names: &[String],
    config: &ExpansionConfig,
) -> Result<(Vec<LabelVocabulary>, LabelFrequencyTable)> {
    let n = ranked.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "discounting needs at least 2 labels, got {n}"
        )));
    }
    if names.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} label names for {n} ranked lists",
            names.len()
        )));
    }
    if config.min_k > config.max_k {
        return Err(Error::InvalidArgument(format!(
            "min_k {} exceeds max_k {}",
            config.min_k, config.max_k
        )));
    }

    let mut cut: Vec<Vec<(String, f64)>> = Vec::with_capacity(n);
    for (i, list) in ranked.iter().enumerate() {
        if list.is_empty() {
            return Err(Error::InvalidArgument(format!("label {i} has no candidates")));
        }
        let mut sorted = list.clone();
        sorted.sort_by(by_score_then_phrase);
        let passing = sorted.iter().take_while(|(_, s)| *s >= config.tau).count();
        let keep = passing.max(config.min_k).min(config.max_k).min(sorted.len());
        sorted.truncate(keep);
        cut.push(sorted);
    }

    let mut lf = BTreeMap::new();
    for list in &cut {
        for (phrase, _) in list {
            *lf.entry(phrase.clone()).or_insert(0usize) += 1;
        }
    }

    let vocabularies = cut
        .into_iter()
        .zip(names)
        .enumerate()
        .map(|(id, (list, name))| LabelVocabulary {
            id,
            name: name.clone(),
            entries: list
                .into_iter()
                .map(|(phrase, raw)| {
                    let score = discount(raw, n, lf[&phrase]);
                    VocabularyEntry { phrase, raw, score }
                })
                .collect(),
        })
        .collect();
    Ok((vocabularies, LabelFrequencyTable(lf)))
}

/// The expanded vocabularies for a label set, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabularySet {
    pub labels: Vec<LabelVocabulary>,
    pub n: usize,
    pub provider: String,
}

impl VocabularySet {
    pub fn label_frequencies(&self) -> LabelFrequencyTable {
        let mut lf = BTreeMap::new();
        for v in &self.labels {
            for e in &v.entries {
                *lf.entry(e.phrase.clone()).or_insert(0) += 1;
            }
        }
        LabelFrequencyTable(lf)
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let set: VocabularySet = serde_json::from_str(s)?;
        if set.labels.len() != set.n {
            return Err(Error::InvalidArgument(format!(
                "vocabulary file declares n={} but has {} labels",
                set.n,
                set.labels.len()
            )));
        }
        Ok(set)
    }

    /// Vocabularies built from surface names alone: each label's vocabulary
    /// is its own name with raw score 1.
    pub fn surface_names(labels: &LabelSet) -> Result<Self> {
        let ranked: Vec<Vec<(String, f64)>> = labels
            .names()
            .iter()
            .map(|name| vec![(name.clone(), 1.0)])
            .collect();
        let config = ExpansionConfig {
            min_k: 1,
            ..ExpansionConfig::default()
        };
        let (labels_out, _) = preprocess_vocabularies(&ranked, labels.names(), &config)?;
        Ok(VocabularySet {
            n: labels_out.len(),
            labels: labels_out,
            provider: "surface-names".into(),
        })
    }
}

/// Full expansion: candidate pool from the index, ranking, preprocessing.
pub fn expand_labels(
    labels: &LabelSet,
    index: &NGramIndex,
    provider: &dyn EmbeddingProvider,
    config: &ExpansionConfig,
) -> Result<VocabularySet> {
    let min_frequency = if config.prune_rare && index.len() > config.prune_above_documents {
        config.min_frequency
    } else {
        1
    };
    let pool = index.candidates(min_frequency);
    let ranked = rank_all(labels.names(), &pool, provider)?;
    let (vocabularies, _) = preprocess_vocabularies(&ranked, labels.names(), config)?;
    Ok(VocabularySet {
        n: vocabularies.len(),
        labels: vocabularies,
        provider: provider.name(),
    })
}
