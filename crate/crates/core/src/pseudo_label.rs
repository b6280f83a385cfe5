//! Pseudo-label assignment by cumulative vocabulary matching.
//!
//! A document's score for a label is the sum of discounted scores of that
//! label's phrases present among the document's n-grams. Documents whose
//! score clears `epsilon` are pseudo-labelled; the rest form the residual
//! pool.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, TaskMode};
use crate::error::{Error, Result};
use crate::expansion::LabelVocabulary;
use crate::ngram::NGramIndex;

/// Vocabularies smaller than this trigger the halved threshold.
pub const SMALL_VOCABULARY: usize = 10;

/// Sum of discounted scores of the vocabulary phrases present in `doc_ngrams`.
pub fn match_score(doc_ngrams: &BTreeSet<String>, vocab: &LabelVocabulary) -> f64 {
    vocab
        .entries
        .iter()
        .filter(|e| doc_ngrams.contains(&e.phrase))
        .map(|e| e.score)
        .sum()
}

/// `ln(n)`, halved when the smallest vocabulary has fewer than 10 phrases.
pub fn compute_epsilon(vocabularies: &[LabelVocabulary], n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "threshold needs at least 2 labels, got {n}"
        )));
    }
    let base = (n as f64).ln();
    let smallest = vocabularies.iter().map(LabelVocabulary::len).min().unwrap_or(0);
    Ok(if smallest < SMALL_VOCABULARY { base / 2.0 } else { base })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchScoreRow {
    pub id: String,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabeledExample {
    pub id: String,
    pub labels: BTreeSet<usize>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelOutcome {
    pub epsilon: f64,
    pub labelled: Vec<PseudoLabeledExample>,
    pub residual: Vec<MatchScoreRow>,
}

impl PseudoLabelOutcome {
    pub fn coverage(&self) -> f64 {
        let total = self.labelled.len() + self.residual.len();
        if total == 0 {
            0.0
        } else {
            self.labelled.len() as f64 / total as f64
        }
    }

    /// Pseudo-label file body: one JSON object per labelled document.
    pub fn labelled_jsonl(&self) -> Result<String> {
        jsonl(&self.labelled)
    }

    /// Residual pool in the same layout with an empty label list.
    pub fn residual_jsonl(&self) -> Result<String> {
        let rows: Vec<PseudoLabeledExample> = self
            .residual
            .iter()
            .map(|r| PseudoLabeledExample {
                id: r.id.clone(),
                labels: BTreeSet::new(),
                scores: r.scores.clone(),
            })
            .collect();
        jsonl(&rows)
    }
}

fn jsonl<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses a pseudo-label (or residual) JSONL file.
pub fn read_pseudo_labels(body: &str) -> Result<Vec<PseudoLabeledExample>> {
    body.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Match scores of every indexed document against every vocabulary.
pub fn score_corpus(index: &NGramIndex, vocabularies: &[LabelVocabulary]) -> Vec<MatchScoreRow> {
    let docs: Vec<(&str, &BTreeSet<String>)> = index.iter().collect();
    docs.par_iter()
        .map(|(id, grams)| MatchScoreRow {
            id: id.to_string(),
            scores: vocabularies.iter().map(|v| match_score(grams, v)).collect(),
        })
        .collect()
}

/// Labels assigned to one score row, or `None` when nothing clears `epsilon`.
///
/// Single-label: the argmax (lowest id on ties) if it exceeds `epsilon`.
/// Multi-label: every label strictly above `epsilon`.
pub fn assign(scores: &[f64], epsilon: f64, mode: TaskMode) -> Option<BTreeSet<usize>> {
    match mode {
        TaskMode::SingleLabel => {
            let (best, &max) = scores
                .iter()
                .enumerate()
                .fold(None, |acc: Option<(usize, &f64)>, (i, s)| match acc {
                    Some((_, m)) if *s <= *m => acc,
                    _ => Some((i, s)),
                })?;
            (max > epsilon).then(|| BTreeSet::from([best]))
        }
        TaskMode::MultiLabel => {
            let set: BTreeSet<usize> = scores
                .iter()
                .enumerate()
                .filter(|(_, &s)| s > epsilon)
                .map(|(i, _)| i)
                .collect();
            (!set.is_empty()).then_some(set)
        }
    }
}

/// Splits scored rows into pseudo-labelled examples and the residual pool.
pub fn split_rows(rows: Vec<MatchScoreRow>, epsilon: f64, mode: TaskMode) -> PseudoLabelOutcome {
    let mut labelled = Vec::new();
    let mut residual = Vec::new();
    for row in rows {
        match assign(&row.scores, epsilon, mode) {
            Some(labels) => labelled.push(PseudoLabeledExample {
                id: row.id,
                labels,
                scores: row.scores,
            }),
            None => residual.push(row),
        }
    }
    PseudoLabelOutcome {
        epsilon,
        labelled,
        residual,
    }
}

/// Pseudo-labels a corpus. `epsilon` defaults to [`compute_epsilon`].
pub fn pseudo_label_corpus(
    dataset: &Dataset,
    index: &NGramIndex,
    vocabularies: &[LabelVocabulary],
    epsilon: Option<f64>,
) -> Result<PseudoLabelOutcome> {
    let n = dataset.labels().len();
    if vocabularies.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} vocabularies for {n} labels",
            vocabularies.len()
        )));
    }
    if index.len() != dataset.len() {
        return Err(Error::InvalidArgument(
            "n-gram index does not belong to this dataset".into(),
        ));
    }
    let epsilon = match epsilon {
        Some(e) => e,
        None => compute_epsilon(vocabularies, n)?,
    };
    let rows = score_corpus(index, vocabularies);
    Ok(split_rows(rows, epsilon, dataset.mode()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::VocabularyEntry;
    use crate::ngram::document_ngrams;
    use proptest::prelude::*;

    fn vocab(entries: &[(&str, f64)]) -> LabelVocabulary {
        LabelVocabulary {
            id: 0,
            name: "l".into(),
            entries: entries
                .iter()
                .map(|(p, s)| VocabularyEntry { phrase: p.to_string(), raw: 1.0, score: *s })
                .collect(),
        }
    }

    fn sized(k: usize) -> LabelVocabulary {
        vocab(&vec![("p", 1.0); k])
    }

    #[test]
    fn match_score_examples() {
        let v = vocab(&[("water", 1.2), ("food", 0.9)]);
        assert_eq!(match_score(&document_ngrams("need water now", 3), &v), 1.2);
        assert_eq!(match_score(&document_ngrams("nothing here", 3), &v), 0.0);
        assert!((match_score(&document_ngrams("food and water", 3), &v) - 2.1).abs() < 1e-12);
        // repeated phrase counts once
        assert_eq!(match_score(&document_ngrams("water water water", 3), &v), 1.2);
        // multi-word phrase needs an exact contiguous match
        let v2 = vocab(&[("clean water", 1.0)]);
        assert_eq!(match_score(&document_ngrams("clean the water", 3), &v2), 0.0);
        assert_eq!(match_score(&document_ngrams("we need clean water", 3), &v2), 1.0);
    }

    #[test]
    fn epsilon_rule() {
        let eleven: Vec<_> = (0..11).map(|_| sized(10)).collect();
        assert!((compute_epsilon(&eleven, 11).unwrap() - 2.397_895).abs() < 1e-6);
        let mut eight: Vec<_> = (0..8).map(|_| sized(20)).collect();
        eight[3] = sized(3);
        assert!((compute_epsilon(&eight, 8).unwrap() - 1.039_721).abs() < 1e-6);
        let two = vec![sized(10), sized(12)];
        assert_eq!(compute_epsilon(&two, 2).unwrap(), 2f64.ln());
        assert!(compute_epsilon(&two, 1).is_err());
    }

    #[test]
    fn assignment_examples() {
        assert_eq!(assign(&[0.0, 0.0], 0.5, TaskMode::SingleLabel), None);
        assert_eq!(
            assign(&[3.1, 0.2, 0.0], 3f64.ln(), TaskMode::SingleLabel),
            Some(BTreeSet::from([0]))
        );
        assert_eq!(
            assign(&[2.5, 2.5, 0.1], 1.19, TaskMode::MultiLabel),
            Some(BTreeSet::from([0, 1]))
        );
        // ties go to the lowest id
        assert_eq!(
            assign(&[1.0, 2.0, 2.0], 0.5, TaskMode::SingleLabel),
            Some(BTreeSet::from([1]))
        );
        // strict inequality at the boundary
        assert_eq!(assign(&[1.0, 0.0], 1.0, TaskMode::SingleLabel), None);
        assert_eq!(assign(&[1.0, 0.0], 1.0, TaskMode::MultiLabel), None);
    }

    proptest! {
        #[test]
        fn raising_epsilon_only_removes(
            rows in proptest::collection::vec(proptest::collection::vec(0.0f64..4.0, 3), 1..30),
            e1 in 0.0f64..3.0, de in 0.0f64..2.0, multi in any::<bool>(),
        ) {
            let mode = if multi { TaskMode::MultiLabel } else { TaskMode::SingleLabel };
            for r in &rows {
                let lo = assign(r, e1, mode);
                let hi = assign(r, e1 + de, mode);
                if let Some(h) = hi {
                    let l = lo.expect("higher threshold kept a document the lower one dropped");
                    prop_assert!(h.is_subset(&l));
                }
            }
        }

        #[test]
        fn scaling_scores_and_epsilon_together_is_neutral(
            rows in proptest::collection::vec(proptest::collection::vec(0.0f64..4.0, 3), 1..30),
            eps in 0.1f64..3.0, c in prop_oneof![Just(0.5f64), Just(2.0), Just(4.0), Just(0.25)],
            multi in any::<bool>(),
        ) {
            let mode = if multi { TaskMode::MultiLabel } else { TaskMode::SingleLabel };
            for r in &rows {
                let scaled: Vec<f64> = r.iter().map(|s| s * c).collect();
                prop_assert_eq!(assign(r, eps, mode), assign(&scaled, eps * c, mode));
            }
        }
    }
}
