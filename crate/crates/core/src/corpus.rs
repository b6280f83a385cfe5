//! Corpus loading and text normalization.
//!
//! Two on-disk formats are accepted:
//!
//! * JSONL, one object per line:
//!   `{"id": "1", "text": "...", "labels": ["shelter"], "event": "..."}`
//!   where `labels` and `event` are optional.
//! * TSV with a mandatory header `id\ttext\tlabels\tevent_id`; `labels` is a
//!   comma-separated list of label names and may be empty.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

const TSV_HEADER: [&str; 4] = ["id", "text", "labels", "event_id"];

/// Single-label or multi-label classification task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskMode {
    SingleLabel,
    MultiLabel,
}

impl fmt::Display for TaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskMode::SingleLabel => f.write_str("single-label"),
            TaskMode::MultiLabel => f.write_str("multi-label"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl CorpusFormat {
    /// Guess the format from a file extension (`.tsv` or `.jsonl`/`.json`).
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => Ok(CorpusFormat::Tsv),
            Some("jsonl") | Some("json") => Ok(CorpusFormat::Jsonl),
            _ => Err(Error::InvalidArgument(format!(
                "cannot infer corpus format from {}",
                path.display()
            ))),
        }
    }
}

/// Ordered label names. A label's id is its position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    names: Vec<String>,
}

impl LabelSet {
    /// Builds a label set from surface names, normalizing each one.
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for raw in names {
            let name = normalize_text(raw.as_ref());
            if name.is_empty() {
                return Err(Error::InvalidLabelSet(format!(
                    "label {:?} is empty after normalization",
                    raw.as_ref()
                )));
            }
            if !seen.insert(name.clone()) {
                return Err(Error::InvalidLabelSet(format!("duplicate label {name:?}")));
            }
            out.push(name);
        }
        if out.is_empty() {
            return Err(Error::InvalidLabelSet("no labels".into()));
        }
        Ok(LabelSet { names: out })
    }

    /// Reads one label name per line; blank lines and `#` comments are skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        LabelSet::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Looks up a label id by surface name (normalized before comparison).
    pub fn id_of(&self, name: &str) -> Option<usize> {
        let key = normalize_text(name);
        self.names.iter().position(|n| *n == key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &str)> {
        self.names.iter().map(String::as_str).enumerate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    /// Text as it appeared in the input.
    pub raw: String,
    /// Normalized text; never empty.
    pub text: String,
    pub gold_labels: Option<BTreeSet<usize>>,
    pub event_id: Option<String>,
}

impl Document {
    /// Creates a document, normalizing `raw`. Fails if nothing survives normalization.
    pub fn new(id: impl Into<String>, raw: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let raw = raw.into();
        let text = normalize_text(&raw);
        if text.is_empty() {
            return Err(Error::EmptyDocument(id));
        }
        Ok(Document {
            id,
            raw,
            text,
            gold_labels: None,
            event_id: None,
        })
    }

    pub fn with_labels(mut self, labels: impl IntoIterator<Item = usize>) -> Self {
        self.gold_labels = Some(labels.into_iter().collect());
        self
    }

    pub fn with_event(mut self, event: impl Into<String>) -> Self {
        self.event_id = Some(event.into());
        self
    }

    /// Whitespace tokens of the normalized text.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.text.split_whitespace()
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    documents: Vec<Document>,
    labels: LabelSet,
    mode: TaskMode,
}

impl Dataset {
    /// Validates id uniqueness and gold labels against `labels` and `mode`.
    pub fn new(documents: Vec<Document>, labels: LabelSet, mode: TaskMode) -> Result<Self> {
        let mut ids = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if !ids.insert(doc.id.as_str()) {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
            if doc.text.is_empty() {
                return Err(Error::EmptyDocument(doc.id.clone()));
            }
            if let Some(gold) = &doc.gold_labels {
                if let Some(bad) = gold.iter().find(|&&l| l >= labels.len()) {
                    return Err(Error::UnknownLabel(format!("#{bad}")));
                }
                if mode == TaskMode::SingleLabel && gold.len() != 1 {
                    return Err(Error::InvalidArgument(format!(
                        "document {:?} has {} gold labels in a single-label task",
                        doc.id,
                        gold.len()
                    )));
                }
            }
        }
        Ok(Dataset {
            documents,
            labels,
            mode,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn mode(&self) -> TaskMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Position of each document id.
    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.documents
            .iter()
            .enumerate()
            .map(|(i, d)| (d.id.as_str(), i))
            .collect()
    }

    /// Copy of the dataset with every gold label removed.
    pub fn without_labels(&self) -> Dataset {
        let documents = self
            .documents
            .iter()
            .cloned()
            .map(|mut d| {
                d.gold_labels = None;
                d
            })
            .collect();
        Dataset {
            documents,
            labels: self.labels.clone(),
            mode: self.mode,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRecord {
    id: String,
    text: String,
    #[serde(default)]
    labels: Option<Vec<String>>,
    #[serde(default)]
    event: Option<String>,
}

#[derive(Serialize)]
struct JsonRecordOut<'a> {
    id: &'a str,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<&'a str>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    event: Option<&'a str>,
}

/// Reads a corpus file. Input order is preserved.
pub fn load_corpus(
    path: &Path,
    format: CorpusFormat,
    labels: &LabelSet,
    mode: TaskMode,
) -> Result<Dataset> {
    let content = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let malformed = |line: usize, reason: String| Error::MalformedRecord {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let mut documents = Vec::new();
    let mut lines = content.lines().enumerate().map(|(i, l)| (i + 1, l));
    if format == CorpusFormat::Tsv {
        let (lineno, header) = lines
            .next()
            .ok_or_else(|| malformed(1, "missing TSV header".into()))?;
        let cols: Vec<&str> = header.trim_end_matches('\r').split('\t').collect();
        if cols != TSV_HEADER {
            return Err(malformed(
                lineno,
                format!("expected header {:?}, found {cols:?}", TSV_HEADER.join("\t")),
            ));
        }
    }

    for (lineno, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (id, text, label_names, event) = match format {
            CorpusFormat::Jsonl => {
                let rec: JsonRecord =
                    serde_json::from_str(line).map_err(|e| malformed(lineno, e.to_string()))?;
                (rec.id, rec.text, rec.labels, rec.event)
            }
            CorpusFormat::Tsv => {
                let cols: Vec<&str> = line.split('\t').collect();
                if cols.len() != 4 {
                    return Err(malformed(
                        lineno,
                        format!("expected 4 tab-separated columns, found {}", cols.len()),
                    ));
                }
                let labels = if cols[2].trim().is_empty() {
                    None
                } else {
                    Some(cols[2].split(',').map(|s| s.trim().to_string()).collect())
                };
                let event = (!cols[3].is_empty()).then(|| cols[3].to_string());
                (cols[0].to_string(), cols[1].to_string(), labels, event)
            }
        };
        if id.is_empty() {
            return Err(malformed(lineno, "empty id".into()));
        }
        let mut doc = Document::new(id, text)?;
        if let Some(names) = label_names {
            let mut gold = BTreeSet::new();
            for name in names {
                let lid = labels
                    .id_of(&name)
                    .ok_or_else(|| Error::UnknownLabel(name.clone()))?;
                gold.insert(lid);
            }
            doc.gold_labels = Some(gold);
        }
        doc.event_id = event;
        documents.push(doc);
    }
    Dataset::new(documents, labels.clone(), mode)
}

/// Serializes a dataset in the same formats `load_corpus` reads.
pub fn write_corpus(dataset: &Dataset, format: CorpusFormat) -> Result<String> {
    let labels = dataset.labels();
    let names_of = |gold: &BTreeSet<usize>| -> Vec<&str> {
        gold.iter().filter_map(|&l| labels.name(l)).collect()
    };
    let mut out = String::new();
    match format {
        CorpusFormat::Jsonl => {
            for doc in dataset.documents() {
                let rec = JsonRecordOut {
                    id: &doc.id,
                    text: &doc.raw,
                    labels: doc.gold_labels.as_ref().map(names_of),
                    event: doc.event_id.as_deref(),
                };
                out.push_str(&serde_json::to_string(&rec)?);
                out.push('\n');
            }
        }
        CorpusFormat::Tsv => {
            out.push_str(&TSV_HEADER.join("\t"));
            out.push('\n');
            for doc in dataset.documents() {
                if doc.raw.contains(['\t', '\n']) || doc.id.contains(['\t', '\n']) {
                    return Err(Error::InvalidArgument(format!(
                        "document {:?} cannot be written as TSV",
                        doc.id
                    )));
                }
                let labels = doc
                    .gold_labels
                    .as_ref()
                    .map(|g| names_of(g).join(","))
                    .unwrap_or_default();
                let event = doc.event_id.as_deref().unwrap_or("");
                out.push_str(&format!("{}\t{}\t{}\t{}\n", doc.id, doc.raw, labels, event));
            }
        }
    }
    Ok(out)
}

fn url_pattern() -> &'static Regex {
    static URL: OnceLock<Regex> = OnceLock::new();
    URL.get_or_init(|| Regex::new(r"(?:https?://|www\.)\S*").expect("valid url regex"))
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c)
}

/// Lowercases, NFC-normalizes, removes URLs and punctuation, and collapses
/// whitespace. Apostrophes and hyphens survive only between word characters.
pub fn normalize_text(raw: &str) -> String {
    let lowered: String = raw.to_lowercase().nfc().collect();
    let without_urls = url_pattern().replace_all(&lowered, " ");
    let chars: Vec<char> = without_urls.chars().collect();

    let mut out = String::with_capacity(chars.len());
    let mut pending_space = false;
    for (i, &c) in chars.iter().enumerate() {
        let keep = if is_word_char(c) {
            true
        } else if matches!(c, '\'' | '-' | '\u{2019}') {
            i > 0
                && i + 1 < chars.len()
                && is_word_char(chars[i - 1])
                && is_word_char(chars[i + 1])
        } else {
            false
        };
        if keep {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        } else {
            pending_space = true;
        }
    }
    out
}
