//! Weakly-supervised text triage.
//!
//! Classifies documents into a label set without annotated examples:
//!
//! 1. [`expansion`] grows each label's surface name into a scored vocabulary
//!    of corpus n-grams using an [`embedding`] provider.
//! 2. [`pseudo_label`] matches the unlabelled corpus against those
//!    vocabularies and keeps the confident assignments.
//! 3. [`classifier`] fits a linear softmax/sigmoid head on the pseudo-labels,
//!    and [`self_training`] refines it on the whole corpus with sharpened
//!    soft targets.
//!
//! [`triage`] merges several predictors' information-type and priority
//! outputs, and [`metrics`] scores predictions. [`pipeline`] wires the stages
//! to files for the command-line driver.

pub mod classifier;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod expansion;
pub mod io;
pub mod metrics;
pub mod ngram;
pub mod pipeline;
pub mod pseudo_label;
pub mod self_training;
pub mod synthetic;
pub mod triage;

pub use classifier::{
    Classifier, LinearClassifier, OutputMode, ProbabilityDistribution, Target, TrainConfig,
};
pub use corpus::{CorpusFormat, Dataset, Document, LabelSet, TaskMode};
pub use embedding::{BuiltinProvider, Embedding, EmbeddingProvider, RemoteProvider};
pub use error::{Error, ErrorKind, Result};
pub use expansion::{ExpansionConfig, LabelFrequencyTable, LabelVocabulary, VocabularySet};
pub use metrics::EvalReport;
pub use ngram::NGramIndex;
pub use pipeline::{PipelineConfig, Prediction};
pub use pseudo_label::{PseudoLabelOutcome, PseudoLabeledExample};
pub use self_training::SelfTrainConfig;
pub use triage::{EnsembleConfig, PriorityLevel, TriagePrediction};
