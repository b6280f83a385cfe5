//! Word n-gram mining over normalized documents.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use crate::corpus::Dataset;
use crate::error::{Error, Result};

/// Longest n-gram width mined.
pub const MAX_N: usize = 3;

/// Documents are truncated to this many tokens before mining.
pub const MAX_TOKENS: usize = 512;

/// Every contiguous window of width `1..=n_max` over `tokens`, joined by a
/// single space. Windows overlap and slide by one token; duplicates are kept.
pub fn token_windows<'a>(tokens: &'a [&'a str], n_max: usize) -> impl Iterator<Item = String> + 'a {
    (1..=n_max).flat_map(move |n| tokens.windows(n).map(|w| w.join(" ")))
}

/// Distinct n-grams of a normalized text (the set `G_j` for one document).
pub fn document_ngrams(text: &str, n_max: usize) -> BTreeSet<String> {
    let tokens: Vec<&str> = text.split_whitespace().take(MAX_TOKENS).collect();
    token_windows(&tokens, n_max).collect()
}

/// Per-document n-gram sets plus the corpus-wide pool with occurrence counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramIndex {
    n_max: usize,
    ids: Vec<String>,
    per_document: Vec<BTreeSet<String>>,
    global_pool: BTreeMap<String, usize>,
}

impl NGramIndex {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn len(&self) -> usize {
        self.per_document.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_document.is_empty()
    }

    /// N-gram set of the document at `position` (dataset order).
    pub fn document(&self, position: usize) -> &BTreeSet<String> {
        &self.per_document[position]
    }

    pub fn by_id(&self, id: &str) -> Option<&BTreeSet<String>> {
        self.ids
            .iter()
            .position(|d| d == id)
            .map(|i| &self.per_document[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.ids.iter().map(String::as_str).zip(&self.per_document)
    }

    /// Corpus pool: n-gram -> number of occurrences across all documents.
    pub fn global_pool(&self) -> &BTreeMap<String, usize> {
        &self.global_pool
    }

    pub fn frequency(&self, ngram: &str) -> usize {
        self.global_pool.get(ngram).copied().unwrap_or(0)
    }

    /// Pool n-grams occurring at least `min_frequency` times, in lexicographic order.
    pub fn candidates(&self, min_frequency: usize) -> Vec<String> {
        self.global_pool
            .iter()
            .filter(|(_, &c)| c >= min_frequency)
            .map(|(g, _)| g.clone())
            .collect()
    }
}

/// Builds the n-gram index for a dataset. Documents are processed in
/// parallel and merged in dataset order, so the result is deterministic.
pub fn extract_ngrams(dataset: &Dataset, n_max: usize) -> Result<NGramIndex> {
    if !(1..=MAX_N).contains(&n_max) {
        return Err(Error::InvalidArgument(format!(
            "n_max must be in 1..={MAX_N}, got {n_max}"
        )));
    }
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot index an empty dataset".into()));
    }

    let mined: Vec<(BTreeSet<String>, HashMap<String, usize>)> = dataset
        .documents()
        .par_iter()
        .map(|doc| {
            let tokens: Vec<&str> = doc.tokens().take(MAX_TOKENS).collect();
            let mut counts: HashMap<String, usize> = HashMap::new();
            for g in token_windows(&tokens, n_max) {
                *counts.entry(g).or_default() += 1;
            }
            let set = counts.keys().cloned().collect();
            (set, counts)
        })
        .collect();

    let mut global_pool = BTreeMap::new();
    let mut per_document = Vec::with_capacity(mined.len());
    for (set, counts) in mined {
        for (g, c) in counts {
            *global_pool.entry(g).or_default() += c;
        }
        per_document.push(set);
    }

    Ok(NGramIndex {
        n_max,
        ids: dataset.documents().iter().map(|d| d.id.clone()).collect(),
        per_document,
        global_pool,
    })
}
