//! End-to-end stages over files.
//!
//! Every stage reads its inputs, checks them, computes its outputs in
//! memory and only then writes them, together with a `<stage>.manifest.json`
//! recording the effective configuration, its hash, the seed and the
//! digests of inputs and outputs. A failing stage writes nothing.
//!
//! Output layout under `out`:
//!
//! | stage | files |
//! |---|---|
//! | expand | `vocabulary.json` |
//! | pseudo-label | `pseudo_labels.jsonl`, `residual.jsonl` |
//! | train | `model.json` |
//! | selftrain | `model_selftrained.json`, `selftrain_loss.csv` |
//! | predict | `predictions.jsonl` |
//! | evaluate | `report.json`, `report.txt` |
//! | merge | `merged.jsonl` |

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::classifier::{
    featurize, labels_above, train, Classifier, LinearClassifier, ModelFile, OutputMode, Target,
    TrainConfig,
};
use crate::corpus::{load_corpus, write_corpus, CorpusFormat, Dataset, LabelSet, TaskMode};
use crate::embedding::{cosine, BuiltinProvider, EmbeddingProvider, RemoteProvider, DEFAULT_DIMENSION, DEFAULT_TIMEOUT};
use crate::error::{Error, Result};
use crate::expansion::{expand_labels, ExpansionConfig, VocabularySet};
use crate::io::{read_string, sha256_hex, StagedWrites};
use crate::metrics::{accuracy, EvalReport};
use crate::ngram::{extract_ngrams, MAX_N};
use crate::pseudo_label::{pseudo_label_corpus, read_pseudo_labels, PseudoLabelOutcome, PseudoLabeledExample};
use crate::self_training::{loss_trace_csv, self_train, PortionLoss, SelfTrainConfig};
use crate::synthetic::{SyntheticCorpus, SyntheticSpec};
use crate::triage::{merge_prediction_sets, read_predictions, write_predictions, EnsembleConfig};

pub const VOCABULARY_FILE: &str = "vocabulary.json";
pub const PSEUDO_LABEL_FILE: &str = "pseudo_labels.jsonl";
pub const RESIDUAL_FILE: &str = "residual.jsonl";
pub const MODEL_FILE: &str = "model.json";
pub const SELFTRAINED_MODEL_FILE: &str = "model_selftrained.json";
pub const LOSS_TRACE_FILE: &str = "selftrain_loss.csv";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const MERGED_FILE: &str = "merged.jsonl";

/// Threshold on sigmoid outputs for multi-label predictions.
pub const MULTI_LABEL_THRESHOLD: f64 = 0.5;

fn default_mode() -> TaskMode {
    TaskMode::SingleLabel
}

fn default_provider() -> String {
    "builtin".into()
}

fn default_dimension() -> usize {
    DEFAULT_DIMENSION
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Pipeline configuration, read from JSON. Relative paths are resolved
/// against the directory holding the config file.
///
/// `seed` drives the builtin provider, training shuffles and self-training
/// order; the `seed` fields of the nested stage configs are overwritten by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub labels: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(default = "default_mode")]
    pub mode: TaskMode,
    /// `builtin` or the base URL of an embedding service.
    #[serde(default = "default_provider")]
    pub provider: String,
    /// Builtin provider dimension.
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub expansion: ExpansionConfig,
    #[serde(default)]
    pub classifier: TrainConfig,
    #[serde(default)]
    pub self_training: SelfTrainConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn new(corpus: impl Into<PathBuf>, labels: impl Into<PathBuf>, seed: u64) -> Self {
        PipelineConfig {
            corpus: corpus.into(),
            labels: labels.into(),
            test: None,
            mode: default_mode(),
            provider: default_provider(),
            dimension: default_dimension(),
            seed,
            epsilon: None,
            expansion: ExpansionConfig::default(),
            classifier: TrainConfig::default(),
            self_training: SelfTrainConfig::default(),
            ensemble: EnsembleConfig::default(),
            out: default_out(),
            base_dir: PathBuf::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_string(path)?;
        let mut config: PipelineConfig = serde_json::from_str(&text).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out)
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.out_dir().join(name)
    }

    /// Applies the global seed to the nested stage configs and checks ranges.
    pub fn validate(&mut self) -> Result<()> {
        self.classifier.seed = self.seed;
        self.self_training.seed = self.seed;
        self.ensemble.validate()?;
        if let Some(e) = self.epsilon {
            if !e.is_finite() || e < 0.0 {
                return Err(Error::InvalidArgument(format!("epsilon {e} must be a non-negative number")));
            }
        }
        if !(-1.0..=1.0).contains(&self.expansion.tau) {
            return Err(Error::InvalidArgument(format!("tau {} outside [-1, 1]", self.expansion.tau)));
        }
        if self.dimension == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        Ok(())
    }

    /// The configuration as recorded in manifests. The output directory is
    /// left out so runs into different directories hash the same.
    pub fn recorded(&self) -> Result<Value> {
        let mut v = serde_json::to_value(self)?;
        if let Value::Object(map) = &mut v {
            map.remove("out");
        }
        Ok(v)
    }

    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(serde_json::to_string(&self.recorded()?)?.as_bytes()))
    }

    /// Connects to the configured provider.
    pub fn provider(&self) -> Result<Box<dyn EmbeddingProvider>> {
        if self.provider == "builtin" {
            Ok(Box::new(BuiltinProvider::new(self.dimension, self.seed)))
        } else if self.provider.starts_with("http://") || self.provider.starts_with("https://") {
            Ok(Box::new(RemoteProvider::connect(&self.provider, DEFAULT_TIMEOUT)?))
        } else {
            Err(Error::InvalidArgument(format!(
                "provider must be \"builtin\" or an http(s) URL, got {:?}",
                self.provider
            )))
        }
    }

    fn require(&self, path: &Path) -> Result<PathBuf> {
        let full = self.resolve(path);
        if !full.is_file() {
            return Err(Error::file(
                &full,
                std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
            ));
        }
        Ok(full)
    }

    fn load_labels(&self) -> Result<LabelSet> {
        LabelSet::load(&self.require(&self.labels)?)
    }

    fn load_dataset(&self, path: &Path, labels: &LabelSet) -> Result<Dataset> {
        let full = self.require(path)?;
        load_corpus(&full, CorpusFormat::from_path(&full)?, labels, self.mode)
    }
}

/// A stage's provenance record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub stats: BTreeMap<String, Value>,
}

struct Stage<'a> {
    config: &'a PipelineConfig,
    name: &'static str,
    inputs: BTreeMap<String, String>,
    writes: StagedWrites,
    outputs: BTreeMap<String, String>,
    stats: BTreeMap<String, Value>,
}

impl<'a> Stage<'a> {
    fn new(config: &'a PipelineConfig, name: &'static str) -> Self {
        Stage {
            config,
            name,
            inputs: BTreeMap::new(),
            writes: StagedWrites::new(),
            outputs: BTreeMap::new(),
            stats: BTreeMap::new(),
        }
    }

    /// Reads an input file and records its digest under its file name.
    fn read(&mut self, path: &Path) -> Result<String> {
        let full = self.config.require(path)?;
        let body = read_string(&full)?;
        let key = full
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| full.display().to_string());
        self.inputs.insert(key, sha256_hex(body.as_bytes()));
        Ok(body)
    }

    fn note(&mut self, path: &Path) -> Result<()> {
        self.read(path).map(|_| ())
    }

    fn stat(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.stats.insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }

    fn header(&self) -> Result<Value> {
        Ok(json!({
            "stage": self.name,
            "config_hash": self.config.hash()?,
            "seed": self.config.seed,
            "inputs": self.inputs,
        }))
    }

    fn write(&mut self, name: &str, body: impl Into<Vec<u8>>) {
        let body = body.into();
        self.outputs.insert(name.into(), sha256_hex(&body));
        self.writes.add(self.config.output(name), body);
    }

    fn commit(mut self) -> Result<StageOutcome> {
        let manifest = Manifest {
            stage: self.name.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: self.config.seed,
            config_hash: self.config.hash()?,
            config: self.config.recorded()?,
            inputs: self.inputs,
            outputs: self.outputs,
            stats: self.stats.clone(),
        };
        let manifest_name = format!("{}.manifest.json", self.name);
        self.writes.add(
            self.config.output(&manifest_name),
            serde_json::to_string_pretty(&manifest)? + "\n",
        );
        let written = self.writes.commit()?;
        Ok(StageOutcome {
            stage: self.name,
            written,
            stats: self.stats,
        })
    }
}

/// What a stage wrote, plus headline numbers for display.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub stage: &'static str,
    pub written: Vec<PathBuf>,
    pub stats: BTreeMap<String, Value>,
}

/// Predicted labels for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    #[serde(alias = "types")]
    pub labels: BTreeSet<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probabilities: Vec<f64>,
}

pub fn read_prediction_file(body: &str) -> Result<Vec<Prediction>> {
    body.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

fn jsonl<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

// In-memory stages.

pub fn expand(corpus: &Dataset, provider: &dyn EmbeddingProvider, config: &ExpansionConfig) -> Result<VocabularySet> {
    let index = extract_ngrams(corpus, MAX_N)?;
    expand_labels(corpus.labels(), &index, provider, config)
}

pub fn pseudo_label(corpus: &Dataset, vocabulary: &VocabularySet, epsilon: Option<f64>) -> Result<PseudoLabelOutcome> {
    if vocabulary.n != corpus.labels().len() {
        return Err(Error::InvalidArgument(format!(
            "vocabulary has {} labels, label file has {}",
            vocabulary.n,
            corpus.labels().len()
        )));
    }
    for (v, name) in vocabulary.labels.iter().zip(corpus.labels().names()) {
        if v.name != *name {
            return Err(Error::InvalidArgument(format!(
                "vocabulary label {:?} does not match label {name:?}",
                v.name
            )));
        }
    }
    let index = extract_ngrams(corpus, MAX_N)?;
    pseudo_label_corpus(corpus, &index, &vocabulary.labels, epsilon)
}

/// Share of pseudo-label assignments that agree with gold labels, over
/// documents that carry gold labels. `None` when no document does.
pub fn pseudo_label_precision(corpus: &Dataset, labelled: &[PseudoLabeledExample]) -> Option<f64> {
    let index = corpus.id_index();
    let (mut hit, mut total) = (0usize, 0usize);
    for ex in labelled {
        let gold = index.get(ex.id.as_str()).and_then(|&i| corpus.documents()[i].gold_labels.as_ref());
        if let Some(gold) = gold {
            hit += ex.labels.intersection(gold).count();
            total += ex.labels.len();
        }
    }
    (total > 0).then(|| hit as f64 / total as f64)
}

/// Trains the linear head on the pseudo-labelled documents of `corpus`.
pub fn train_on_pseudo_labels(
    corpus: &Dataset,
    labelled: &[PseudoLabeledExample],
    provider: &dyn EmbeddingProvider,
    config: &TrainConfig,
) -> Result<LinearClassifier> {
    if labelled.is_empty() {
        return Err(Error::InvalidArgument("no pseudo-labelled documents to train on".into()));
    }
    let index = corpus.id_index();
    let mode = OutputMode::from(corpus.mode());
    let docs = labelled
        .iter()
        .map(|ex| {
            index
                .get(ex.id.as_str())
                .map(|&i| corpus.documents()[i].clone())
                .ok_or_else(|| Error::InvalidArgument(format!("pseudo-labelled id {:?} is not in the corpus", ex.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let features = featurize(&docs, provider)?;
    let examples: Vec<(Vec<f64>, Target)> = features
        .into_iter()
        .zip(labelled)
        .map(|(h, ex)| {
            let target = match (corpus.mode(), ex.labels.len()) {
                (TaskMode::SingleLabel, 1) => Target::Class(*ex.labels.first().expect("one label")),
                _ => Target::Classes(ex.labels.clone()),
            };
            (h, target)
        })
        .collect();
    Ok(train(&examples, corpus.labels().len(), mode, config)?.0)
}

pub fn self_train_on(
    model: LinearClassifier,
    corpus: &Dataset,
    provider: &dyn EmbeddingProvider,
    config: &SelfTrainConfig,
) -> Result<(LinearClassifier, Vec<PortionLoss>)> {
    let features = featurize(corpus.documents(), provider)?;
    self_train(model, &features, config)
}

pub fn predict(model: &dyn Classifier, docs: &Dataset, provider: &dyn EmbeddingProvider) -> Result<Vec<Prediction>> {
    if model.n_labels() != docs.labels().len() {
        return Err(Error::InvalidArgument(format!(
            "model predicts {} labels, label file has {}",
            model.n_labels(),
            docs.labels().len()
        )));
    }
    let features = featurize(docs.documents(), provider)?;
    docs.documents()
        .iter()
        .zip(&features)
        .map(|(d, h)| {
            let p = model.predict_proba(h)?;
            let labels = match model.mode() {
                OutputMode::Softmax => BTreeSet::from([p.argmax()]),
                OutputMode::Sigmoid => labels_above(&p.values, MULTI_LABEL_THRESHOLD),
            };
            Ok(Prediction {
                id: d.id.clone(),
                labels,
                probabilities: p.values,
            })
        })
        .collect()
}

/// Classifies each document by its most similar label name, with no
/// expansion and no training.
pub fn predict_by_label_similarity(docs: &Dataset, provider: &dyn EmbeddingProvider) -> Result<Vec<Prediction>> {
    let names = docs.labels().names().to_vec();
    let label_vectors = provider.embed_batch(&names)?;
    let texts: Vec<String> = docs.documents().iter().map(|d| d.text.clone()).collect();
    let doc_vectors = provider.embed_batch(&texts)?;
    docs.documents()
        .iter()
        .zip(&doc_vectors)
        .map(|(d, v)| {
            let sims = label_vectors.iter().map(|l| cosine(v, l)).collect::<Result<Vec<_>>>()?;
            Ok(Prediction {
                id: d.id.clone(),
                labels: BTreeSet::from([crate::classifier::argmax(&sims)]),
                probabilities: Vec::new(),
            })
        })
        .collect()
}

/// Scores predictions against the gold labels of `gold`, matched by id.
pub fn evaluate(predictions: &[Prediction], gold: &Dataset) -> Result<EvalReport> {
    let by_id: BTreeMap<&str, &Prediction> = predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut pred_sets = Vec::with_capacity(gold.len());
    let mut gold_sets = Vec::with_capacity(gold.len());
    for doc in gold.documents() {
        let g = doc
            .gold_labels
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("document {:?} has no gold labels", doc.id)))?;
        let p = by_id
            .get(doc.id.as_str())
            .ok_or_else(|| Error::InvalidArgument(format!("no prediction for document {:?}", doc.id)))?;
        pred_sets.push(p.labels.clone());
        gold_sets.push(g.clone());
    }
    EvalReport::from_sets(
        &pred_sets,
        &gold_sets,
        gold.labels().names(),
        gold.mode() == TaskMode::MultiLabel,
    )
}

fn test_accuracy(predictions: &[Prediction], gold: &Dataset) -> Result<f64> {
    let pred: Vec<_> = predictions.iter().map(|p| p.labels.clone()).collect();
    let gold: Vec<_> = gold
        .documents()
        .iter()
        .map(|d| d.gold_labels.clone().unwrap_or_default())
        .collect();
    accuracy(&pred, &gold)
}

/// Headline numbers of one in-memory run on a labelled benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchmarkResult {
    pub coverage: f64,
    pub precision: f64,
    /// Test accuracy of the classifier before self-training.
    pub accuracy_pretrained: f64,
    /// Test accuracy after self-training.
    pub accuracy: f64,
    /// Test accuracy of label-name similarity alone.
    pub accuracy_label_similarity: f64,
}

/// Runs every stage in memory. Gold labels of `corpus` are used only to
/// measure pseudo-label precision.
pub fn run_benchmark(corpus: &Dataset, test: &Dataset, config: &PipelineConfig) -> Result<BenchmarkResult> {
    let mut config = config.clone();
    config.validate()?;
    let provider = config.provider()?;
    let vocabulary = expand(corpus, provider.as_ref(), &config.expansion)?;
    let outcome = pseudo_label(corpus, &vocabulary, config.epsilon)?;
    let precision = pseudo_label_precision(corpus, &outcome.labelled).unwrap_or(0.0);
    let unlabelled = corpus.without_labels();
    let model = train_on_pseudo_labels(&unlabelled, &outcome.labelled, provider.as_ref(), &config.classifier)?;
    let accuracy_pretrained = test_accuracy(&predict(&model, test, provider.as_ref())?, test)?;
    let (refined, _) = self_train_on(model, &unlabelled, provider.as_ref(), &config.self_training)?;
    let accuracy = test_accuracy(&predict(&refined, test, provider.as_ref())?, test)?;
    let accuracy_label_similarity = test_accuracy(&predict_by_label_similarity(test, provider.as_ref())?, test)?;
    Ok(BenchmarkResult {
        coverage: outcome.coverage(),
        precision,
        accuracy_pretrained,
        accuracy,
        accuracy_label_similarity,
    })
}

// File-level stages.

pub fn cmd_expand(config: &PipelineConfig) -> Result<StageOutcome> {
    let mut stage = Stage::new(config, "expand");
    let labels = config.load_labels()?;
    let corpus = config.load_dataset(&config.corpus, &labels)?;
    stage.note(&config.labels)?;
    stage.note(&config.corpus)?;
    let provider = config.provider()?;
    let vocabulary = expand(&corpus, provider.as_ref(), &config.expansion)?;
    stage.stat(
        "vocabulary_sizes",
        vocabulary.labels.iter().map(|v| v.len()).collect::<Vec<_>>(),
    )?;
    stage.write(VOCABULARY_FILE, vocabulary.to_json()?);
    stage.commit()
}

pub fn cmd_pseudo_label(config: &PipelineConfig) -> Result<StageOutcome> {
    let mut stage = Stage::new(config, "pseudo_label");
    let vocab_path = config.out.join(VOCABULARY_FILE);
    config.require(&vocab_path)?;
    let labels = config.load_labels()?;
    let corpus = config.load_dataset(&config.corpus, &labels)?;
    stage.note(&config.labels)?;
    stage.note(&config.corpus)?;
    let vocabulary = VocabularySet::from_json(&stage.read(&vocab_path)?)?;
    let outcome = pseudo_label(&corpus, &vocabulary, config.epsilon)?;
    stage.stat("epsilon", outcome.epsilon)?;
    stage.stat("labelled", outcome.labelled.len())?;
    stage.stat("residual", outcome.residual.len())?;
    stage.stat("coverage", outcome.coverage())?;
    if let Some(p) = pseudo_label_precision(&corpus, &outcome.labelled) {
        stage.stat("precision_against_gold", p)?;
    }
    stage.write(PSEUDO_LABEL_FILE, outcome.labelled_jsonl()?);
    stage.write(RESIDUAL_FILE, outcome.residual_jsonl()?);
    stage.commit()
}

fn model_file(stage: &Stage, model: &LinearClassifier, provider: &dyn EmbeddingProvider) -> Result<String> {
    let file = model.to_model_file(&provider.name(), stage.header()?);
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

fn load_model(stage: &mut Stage, path: &Path, provider: &dyn EmbeddingProvider) -> Result<LinearClassifier> {
    let file: ModelFile = serde_json::from_str(&stage.read(path)?)?;
    if file.provider != provider.name() {
        return Err(Error::InvalidArgument(format!(
            "model was trained with provider {:?} but {:?} is configured",
            file.provider,
            provider.name()
        )));
    }
    file.to_classifier()
}

pub fn cmd_train(config: &PipelineConfig) -> Result<StageOutcome> {
    let mut stage = Stage::new(config, "train");
    let pl_path = config.out.join(PSEUDO_LABEL_FILE);
    config.require(&pl_path)?;
    let labels = config.load_labels()?;
    let corpus = config.load_dataset(&config.corpus, &labels)?.without_labels();
    stage.note(&config.labels)?;
    stage.note(&config.corpus)?;
    let labelled = read_pseudo_labels(&stage.read(&pl_path)?)?;
    let provider = config.provider()?;
    let model = train_on_pseudo_labels(&corpus, &labelled, provider.as_ref(), &config.classifier)?;
    stage.stat("training_documents", labelled.len())?;
    let body = model_file(&stage, &model, provider.as_ref())?;
    stage.write(MODEL_FILE, body);
    stage.commit()
}

pub fn cmd_selftrain(config: &PipelineConfig, model: Option<&Path>) -> Result<StageOutcome> {
    let mut stage = Stage::new(config, "selftrain");
    let model_path = model.map(Path::to_path_buf).unwrap_or_else(|| config.out.join(MODEL_FILE));
    config.require(&model_path)?;
    let labels = config.load_labels()?;
    let corpus = config.load_dataset(&config.corpus, &labels)?.without_labels();
    stage.note(&config.labels)?;
    stage.note(&config.corpus)?;
    let provider = config.provider()?;
    let model = load_model(&mut stage, &model_path, provider.as_ref())?;
    let (refined, trace) = self_train_on(model, &corpus, provider.as_ref(), &config.self_training)?;
    stage.stat("portions", trace.len())?;
    if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
        stage.stat("kl_first_portion_before", first.before)?;
        stage.stat("kl_last_portion_after", last.after)?;
    }
    let body = model_file(&stage, &refined, provider.as_ref())?;
    stage.write(SELFTRAINED_MODEL_FILE, body);
    stage.write(LOSS_TRACE_FILE, loss_trace_csv(&trace));
    stage.commit()
}

/// Predicts labels for `input` (default: the test set, else the corpus)
/// with `model` (default: the self-trained model if present, else the
/// pre-trained one).
pub fn cmd_predict(config: &PipelineConfig, model: Option<&Path>, input: Option<&Path>) -> Result<StageOutcome> {
    let mut stage = Stage::new(config, "predict");
    let model_path = match model {
        Some(m) => m.to_path_buf(),
        None => {
            let refined = config.out.join(SELFTRAINED_MODEL_FILE);
            if config.resolve(&refined).is_file() {
                refined
            } else {
                config.out.join(MODEL_FILE)
            }
        }
    };
    config.require(&model_path)?;
    let input = input
        .map(Path::to_path_buf)
        .or_else(|| config.test.clone())
        .unwrap_or_else(|| config.corpus.clone());
    let labels = config.load_labels()?;
    let docs = config.load_dataset(&input, &labels)?;
    stage.note(&config.labels)?;
    stage.note(&input)?;
    let provider = config.provider()?;
    let model = load_model(&mut stage, &model_path, provider.as_ref())?;
    let predictions = predict(&model, &docs, provider.as_ref())?;
    stage.stat("documents", predictions.len())?;
    stage.write(PREDICTIONS_FILE, jsonl(&predictions)?);
    stage.commit()
}

/// Scores `input` (default: the predictions file) against the gold labels
/// of the test set.
pub fn cmd_evaluate(config: &PipelineConfig, input: Option<&Path>) -> Result<StageOutcome> {
    let mut stage = Stage::new(config, "evaluate");
    let pred_path = input.map(Path::to_path_buf).unwrap_or_else(|| config.out.join(PREDICTIONS_FILE));
    config.require(&pred_path)?;
    let gold_path = config
        .test
        .clone()
        .ok_or_else(|| Error::InvalidArgument("evaluation needs a test set with gold labels".into()))?;
    let labels = config.load_labels()?;
    let gold = config.load_dataset(&gold_path, &labels)?;
    stage.note(&config.labels)?;
    stage.note(&gold_path)?;
    let predictions = read_prediction_file(&stage.read(&pred_path)?)?;
    let report = evaluate(&predictions, &gold)?;
    stage.stat("accuracy", report.accuracy)?;
    stage.stat("macro_f1", report.macro_f1)?;
    stage.write(REPORT_JSON_FILE, report.to_json()?);
    stage.write(REPORT_TEXT_FILE, report.to_text());
    stage.commit()
}

/// Merges prediction exchange files with the configured strategies.
pub fn cmd_merge(config: &PipelineConfig, inputs: &[PathBuf]) -> Result<StageOutcome> {
    let mut stage = Stage::new(config, "merge");
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("merge needs at least one input file".into()));
    }
    for p in inputs {
        config.require(p)?;
    }
    let mut sets = Vec::with_capacity(inputs.len());
    for p in inputs {
        let full = config.resolve(p);
        let body = stage.read(p)?;
        sets.push(read_predictions(&body).map_err(|e| match e {
            Error::MalformedRecord { line, reason, .. } => Error::MalformedRecord { path: full, line, reason },
            other => other,
        })?);
    }
    let merged = merge_prediction_sets(&sets, &config.ensemble)?;
    stage.stat("documents", merged.len())?;
    stage.write(MERGED_FILE, write_predictions(&merged)?);
    stage.commit()
}

/// Writes a generated corpus as a ready-to-run fixture: `labels.txt`,
/// `unlabelled.jsonl`, `test.jsonl` and `config.json`.
pub fn write_fixture(dir: &Path, spec: &SyntheticSpec) -> Result<Vec<PathBuf>> {
    let SyntheticCorpus { labels, unlabelled, test } = crate::synthetic::generate(spec)?;
    let mut config = PipelineConfig::new("unlabelled.jsonl", "labels.txt", spec.seed);
    config.test = Some(PathBuf::from("test.jsonl"));
    let mut w = StagedWrites::new();
    w.add(dir.join("labels.txt"), labels.names().join("\n") + "\n");
    w.add(dir.join("unlabelled.jsonl"), write_corpus(&unlabelled, CorpusFormat::Jsonl)?);
    w.add(dir.join("test.jsonl"), write_corpus(&test, CorpusFormat::Jsonl)?);
    w.add(dir.join("config.json"), serde_json::to_string_pretty(&config)? + "\n");
    w.commit()
}
