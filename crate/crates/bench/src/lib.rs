//! Shared inputs for the criterion benchmarks.

use weaklab::synthetic::{generate, SyntheticCorpus, SyntheticSpec};

/// The default synthetic corpus scaled to `documents` unlabelled documents.
pub fn corpus(documents: usize, seed: u64) -> SyntheticCorpus {
    generate(&SyntheticSpec {
        seed,
        unlabelled: documents,
        test: documents / 2,
        ..SyntheticSpec::default()
    })
    .expect("synthetic corpus")
}
