//! Merging several predictors' information types and priorities.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Urgency level, ordered `Low < Medium < High < Critical`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PriorityLevel {
    Low,
    Medium,
    High,
    Critical,
}

impl PriorityLevel {
    pub const ALL: [PriorityLevel; 4] = [
        PriorityLevel::Low,
        PriorityLevel::Medium,
        PriorityLevel::High,
        PriorityLevel::Critical,
    ];

    pub fn score(self) -> f64 {
        match self {
            PriorityLevel::Critical => 1.0,
            PriorityLevel::High => 0.75,
            PriorityLevel::Medium => 0.5,
            PriorityLevel::Low => 0.25,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PriorityLevel::Critical => "Critical",
            PriorityLevel::High => "High",
            PriorityLevel::Medium => "Medium",
            PriorityLevel::Low => "Low",
        }
    }
}

impl fmt::Display for PriorityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PriorityLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PriorityLevel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown priority level {s:?}")))
    }
}

/// Score bands: Critical [0.75, 1], High [0.5, 0.75), Medium [0.25, 0.5), Low [0, 0.25).
pub fn map_score_to_level(score: f64) -> Result<PriorityLevel> {
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::InvalidArgument(format!(
            "priority score {score} outside [0, 1]"
        )));
    }
    Ok(if score >= 0.75 {
        PriorityLevel::Critical
    } else if score >= 0.5 {
        PriorityLevel::High
    } else if score >= 0.25 {
        PriorityLevel::Medium
    } else {
        PriorityLevel::Low
    })
}

/// A predictor's priority: a level or a raw score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Priority {
    Level(PriorityLevel),
    Score(f64),
}

impl Priority {
    /// Raw scores are clamped to [0, 1]; NaN is rejected.
    pub fn score(self) -> Result<f64> {
        match self {
            Priority::Level(l) => Ok(l.score()),
            Priority::Score(s) if s.is_nan() => {
                Err(Error::InvalidArgument("priority score is NaN".into()))
            }
            Priority::Score(s) => Ok(s.clamp(0.0, 1.0)),
        }
    }

    pub fn level(self) -> Result<PriorityLevel> {
        match self {
            Priority::Level(l) => Ok(l),
            Priority::Score(_) => map_score_to_level(self.score()?),
        }
    }
}

impl From<PriorityLevel> for Priority {
    fn from(l: PriorityLevel) -> Self {
        Priority::Level(l)
    }
}

/// One line of a prediction exchange file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriagePrediction {
    pub id: String,
    pub types: BTreeSet<usize>,
    pub priority: Priority,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoTypeStrategy {
    #[default]
    Union,
    Intersection,
}

impl FromStr for InfoTypeStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "union" => Ok(InfoTypeStrategy::Union),
            "intersection" => Ok(InfoTypeStrategy::Intersection),
            _ => Err(Error::InvalidArgument(format!("unknown info-type strategy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorityStrategy {
    #[default]
    Highest,
    Average,
    Lowest,
}

impl FromStr for PriorityStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "highest" => Ok(PriorityStrategy::Highest),
            "average" => Ok(PriorityStrategy::Average),
            "lowest" => Ok(PriorityStrategy::Lowest),
            _ => Err(Error::InvalidArgument(format!("unknown priority strategy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub info_types: InfoTypeStrategy,
    pub priority: PriorityStrategy,
    pub lambda: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            info_types: InfoTypeStrategy::Union,
            priority: PriorityStrategy::Highest,
            lambda: 0.5,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("lambda {lambda} outside [0, 1]")))
    }
}

pub const DEFAULT_TYPE_WEIGHT: f64 = 0.25;

/// Mean priority score per information type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoTypeWeightTable {
    pub weights: BTreeMap<usize, f64>,
    pub default: f64,
}

impl InfoTypeWeightTable {
    pub fn weight(&self, info_type: usize) -> f64 {
        self.weights.get(&info_type).copied().unwrap_or(self.default)
    }

    /// Mean weight over `types`, or the default for an empty set.
    pub fn mean_weight(&self, types: &BTreeSet<usize>) -> f64 {
        if types.is_empty() {
            return self.default;
        }
        types.iter().map(|&t| self.weight(t)).sum::<f64>() / types.len() as f64
    }
}

pub fn build_weight_table(training: &[(BTreeSet<usize>, PriorityLevel)]) -> InfoTypeWeightTable {
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (types, level) in training {
        for &t in types {
            let e = sums.entry(t).or_insert((0.0, 0));
            e.0 += level.score();
            e.1 += 1;
        }
    }
    InfoTypeWeightTable {
        weights: sums.into_iter().map(|(t, (s, c))| (t, s / c as f64)).collect(),
        default: DEFAULT_TYPE_WEIGHT,
    }
}

/// `(1 - lambda) * w + lambda * score(model_priority)`, `w` the mean table weight.
pub fn combine_priority(
    predicted_types: &BTreeSet<usize>,
    table: &InfoTypeWeightTable,
    model_priority: PriorityLevel,
    lambda: f64,
) -> Result<f64> {
    check_lambda(lambda)?;
    let w = table.mean_weight(predicted_types);
    if lambda == 1.0 {
        return Ok(model_priority.score());
    }
    if lambda == 0.0 {
        return Ok(w);
    }
    Ok(((1.0 - lambda) * w + lambda * model_priority.score()).clamp(0.0, 1.0))
}

pub fn merge_info_types(predictions: &[TriagePrediction], strategy: InfoTypeStrategy) -> Result<BTreeSet<usize>> {
    let (first, rest) = predictions
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("nothing to merge".into()))?;
    let mut out = first.types.clone();
    for p in rest {
        match strategy {
            InfoTypeStrategy::Union => out.extend(p.types.iter().copied()),
            InfoTypeStrategy::Intersection => out.retain(|t| p.types.contains(t)),
        }
    }
    Ok(out)
}

/// Merged priority level.
///
/// Average maps the mean score back through the bands, then keeps the
/// result between the lowest and highest input levels. Without that, two
/// High inputs (0.75) would map to Critical and outrank Highest.
pub fn merge_priorities(priorities: &[Priority], strategy: PriorityStrategy) -> Result<PriorityLevel> {
    if priorities.is_empty() {
        return Err(Error::InvalidArgument("nothing to merge".into()));
    }
    let levels = priorities
        .iter()
        .map(|p| p.level())
        .collect::<Result<Vec<_>>>()?;
    let lo = *levels.iter().min().expect("non-empty");
    let hi = *levels.iter().max().expect("non-empty");
    match strategy {
        PriorityStrategy::Highest => Ok(hi),
        PriorityStrategy::Lowest => Ok(lo),
        PriorityStrategy::Average => {
            let scores = priorities.iter().map(|p| p.score()).collect::<Result<Vec<_>>>()?;
            let mean = scores.iter().sum::<f64>() / scores.len() as f64;
            Ok(map_score_to_level(mean.clamp(0.0, 1.0))?.clamp(lo, hi))
        }
    }
}

pub fn read_predictions(body: &str) -> Result<Vec<TriagePrediction>> {
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::MalformedRecord {
                path: std::path::PathBuf::new(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn write_predictions(predictions: &[TriagePrediction]) -> Result<String> {
    let mut out = String::new();
    for p in predictions {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    Ok(out)
}

/// Merges prediction files document by document.
///
/// Documents follow the first file's order. Every file must cover the
/// same ids. A single input is returned unchanged.
pub fn merge_prediction_sets(
    sets: &[Vec<TriagePrediction>],
    config: &EnsembleConfig,
) -> Result<Vec<TriagePrediction>> {
    config.validate()?;
    let (first, rest) = sets
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("no prediction files to merge".into()))?;
    if rest.is_empty() {
        return Ok(first.clone());
    }
    let mut indexed: Vec<BTreeMap<&str, &TriagePrediction>> = Vec::new();
    for set in rest {
        let map: BTreeMap<&str, &TriagePrediction> = set.iter().map(|p| (p.id.as_str(), p)).collect();
        if map.len() != first.len() || set.len() != first.len() {
            return Err(Error::InvalidArgument(
                "prediction files cover different documents".into(),
            ));
        }
        indexed.push(map);
    }
    first
        .iter()
        .map(|head| {
            let mut group = vec![head.clone()];
            for map in &indexed {
                let p = map.get(head.id.as_str()).ok_or_else(|| {
                    Error::InvalidArgument(format!("document {:?} missing from a prediction file", head.id))
                })?;
                group.push((*p).clone());
            }
            let priorities: Vec<Priority> = group.iter().map(|p| p.priority).collect();
            Ok(TriagePrediction {
                id: head.id.clone(),
                types: merge_info_types(&group, config.info_types)?,
                priority: Priority::Level(merge_priorities(&priorities, config.priority)?),
            })
        })
        .collect()
}
