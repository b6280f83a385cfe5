//! Seeded generator for a small three-topic corpus with known labels.
//!
//! Each label owns a pool of topical tokens that includes the words of its
//! name. Documents mix tokens from their own pool with generic filler and a
//! little noise from the other pools; some contain the full label name.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Document, LabelSet, TaskMode};
use crate::error::Result;

pub const LABELS: [&str; 3] = ["clean water", "food supplies", "medical care"];

const TOPICS: [[&str; 12]; 3] = [
    [
        "water", "clean", "drinking", "bottled", "wells", "purification", "tanks", "thirsty",
        "contaminated", "pipes", "filters", "hydration",
    ],
    [
        "food", "supplies", "rice", "meals", "hungry", "rations", "bread", "grain", "canned",
        "kitchen", "flour", "groceries",
    ],
    [
        "medical", "care", "doctors", "injured", "hospital", "medicine", "nurses", "wounds",
        "clinic", "ambulance", "treatment", "patients",
    ],
];

const GENERIC: [&str; 30] = [
    "we", "need", "the", "in", "our", "area", "people", "please", "help", "urgent", "now",
    "families", "many", "after", "flood", "storm", "village", "today", "there", "is", "no", "are",
    "more", "send", "still", "waiting", "for", "of", "and", "here",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub unlabelled: usize,
    pub test: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Chance that a document contains its label's full name.
    pub name_rate: f64,
    /// Share of remaining tokens drawn from the document's own pool.
    pub topic_share: f64,
    /// Share drawn from the generic pool; the rest come from other pools.
    pub generic_share: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 0,
            unlabelled: 300,
            test: 300,
            min_len: 6,
            max_len: 12,
            name_rate: 0.4,
            topic_share: 0.6,
            generic_share: 0.35,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub labels: LabelSet,
    /// Gold labels are kept so pseudo-label precision can be measured;
    /// training stages ignore them.
    pub unlabelled: Dataset,
    pub test: Dataset,
}

fn document(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, topic: usize) -> String {
    let len = rng.random_range(spec.min_len..=spec.max_len);
    let mut tokens: Vec<&str> = Vec::with_capacity(len + 2);
    for _ in 0..len {
        let r: f64 = rng.random();
        let pool: &[&str] = if r < spec.topic_share {
            &TOPICS[topic]
        } else if r < spec.topic_share + spec.generic_share {
            &GENERIC
        } else {
            let other = (topic + rng.random_range(1..TOPICS.len())) % TOPICS.len();
            &TOPICS[other]
        };
        tokens.push(pool[rng.random_range(0..pool.len())]);
    }
    if rng.random_bool(spec.name_rate) {
        let at = rng.random_range(0..=tokens.len());
        let name: Vec<&str> = LABELS[topic].split(' ').collect();
        tokens.splice(at..at, name);
    }
    tokens.join(" ")
}

fn split(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, labels: &LabelSet, prefix: &str, n: usize) -> Result<Dataset> {
    let docs = (0..n)
        .map(|i| {
            let topic = rng.random_range(0..LABELS.len());
            Ok(Document::new(format!("{prefix}{i:04}"), document(rng, spec, topic))?.with_labels([topic]))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(docs, labels.clone(), TaskMode::SingleLabel)
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    let labels = LabelSet::new(LABELS)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unlabelled = split(&mut rng, spec, &labels, "u", spec.unlabelled)?;
    let test = split(&mut rng, spec, &labels, "t", spec.test)?;
    Ok(SyntheticCorpus {
        labels,
        unlabelled,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_balanced() {
        let a = generate(&SyntheticSpec::default()).unwrap();
        let b = generate(&SyntheticSpec::default()).unwrap();
        assert_eq!(a.unlabelled.documents(), b.unlabelled.documents());
        assert_eq!(a.test.len(), 300);
        let mut counts = [0usize; 3];
        for d in a.unlabelled.documents() {
            counts[*d.gold_labels.as_ref().unwrap().first().unwrap()] += 1;
        }
        assert!(counts.iter().all(|&c| c > 70), "{counts:?}");
        let c = generate(&SyntheticSpec { seed: 1, ..Default::default() }).unwrap();
        assert_ne!(a.unlabelled.documents(), c.unlabelled.documents());
    }

    #[test]
    fn pools_are_disjoint_and_hold_the_names() {
        for (i, t) in TOPICS.iter().enumerate() {
            for w in LABELS[i].split(' ') {
                assert!(t.contains(&w));
            }
            for (j, u) in TOPICS.iter().enumerate() {
                if i != j {
                    assert!(t.iter().all(|w| !u.contains(w) && !GENERIC.contains(w)));
                }
            }
        }
    }
}
