//! Classification and ranking metrics.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_lengths(pred: usize, gold: usize) -> Result<()> {
    if pred != gold {
        return Err(Error::InvalidArgument(format!(
            "{pred} predictions for {gold} gold labels"
        )));
    }
    Ok(())
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Fraction of positions where `pred` equals `gold`. Works for single
/// labels and, with sets, as exact-set-match accuracy.
pub fn accuracy<T: PartialEq>(pred: &[T], gold: &[T]) -> Result<f64> {
    check_lengths(pred.len(), gold.len())?;
    if gold.is_empty() {
        return Err(Error::InvalidArgument("no examples to score".into()));
    }
    let hits = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Per-class one-vs-rest counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
    pub tn: Vec<u64>,
    pub total: u64,
}

impl ConfusionCounts {
    fn empty(n: usize, total: usize) -> Self {
        ConfusionCounts {
            tp: vec![0; n],
            fp: vec![0; n],
            fn_: vec![0; n],
            tn: vec![0; n],
            total: total as u64,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.tp.len()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.tp[class] + self.fn_[class]
    }

    pub fn from_single(pred: &[usize], gold: &[usize], n: usize) -> Result<Self> {
        check_lengths(pred.len(), gold.len())?;
        if let Some(&bad) = pred.iter().chain(gold).find(|&&c| c >= n) {
            return Err(Error::InvalidArgument(format!("class {bad} out of range for {n} classes")));
        }
        let mut c = ConfusionCounts::empty(n, gold.len());
        for (&p, &g) in pred.iter().zip(gold) {
            if p == g {
                c.tp[g] += 1;
            } else {
                c.fp[p] += 1;
                c.fn_[g] += 1;
            }
        }
        c.fill_tn();
        Ok(c)
    }

    /// Each label as its own binary task.
    pub fn from_sets(pred: &[BTreeSet<usize>], gold: &[BTreeSet<usize>], n: usize) -> Result<Self> {
        check_lengths(pred.len(), gold.len())?;
        if let Some(&bad) = pred.iter().chain(gold).flatten().find(|&&c| c >= n) {
            return Err(Error::InvalidArgument(format!("class {bad} out of range for {n} classes")));
        }
        let mut c = ConfusionCounts::empty(n, gold.len());
        for (p, g) in pred.iter().zip(gold) {
            for j in 0..n {
                match (p.contains(&j), g.contains(&j)) {
                    (true, true) => c.tp[j] += 1,
                    (true, false) => c.fp[j] += 1,
                    (false, true) => c.fn_[j] += 1,
                    (false, false) => c.tn[j] += 1,
                }
            }
        }
        Ok(c)
    }

    fn fill_tn(&mut self) {
        for j in 0..self.n_classes() {
            self.tn[j] = self.total - self.tp[j] - self.fp[j] - self.fn_[j];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Summary {
    pub per_class: Vec<ClassScores>,
    pub micro: f64,
    pub macro_: f64,
    pub weighted: f64,
}

fn f1(tp: f64, fp: f64, fn_: f64) -> f64 {
    ratio(tp, tp + 0.5 * (fp + fn_))
}

pub fn f1_scores(counts: &ConfusionCounts) -> F1Summary {
    let per_class: Vec<ClassScores> = (0..counts.n_classes())
        .map(|j| {
            let (tp, fp, fn_) = (counts.tp[j] as f64, counts.fp[j] as f64, counts.fn_[j] as f64);
            ClassScores {
                precision: ratio(tp, tp + fp),
                recall: ratio(tp, tp + fn_),
                f1: f1(tp, fp, fn_),
                support: counts.support(j),
            }
        })
        .collect();
    let sum = |v: &[u64]| v.iter().sum::<u64>() as f64;
    let micro = f1(sum(&counts.tp), sum(&counts.fp), sum(&counts.fn_));
    let macro_ = if per_class.is_empty() {
        0.0
    } else {
        per_class.iter().map(|c| c.f1).sum::<f64>() / per_class.len() as f64
    };
    let total_support: u64 = per_class.iter().map(|c| c.support).sum();
    let weighted = ratio(
        per_class.iter().map(|c| c.support as f64 * c.f1).sum(),
        total_support as f64,
    );
    F1Summary {
        per_class,
        micro,
        macro_,
        weighted,
    }
}

/// Per-label binary F1 weighted by gold support.
pub fn labelwise_weighted_f1(pred: &[BTreeSet<usize>], gold: &[BTreeSet<usize>], n: usize) -> Result<f64> {
    Ok(f1_scores(&ConfusionCounts::from_sets(pred, gold, n)?).weighted)
}

/// Mean NDCG@k over events. Each event lists relevance gains in ranked
/// order. Events with no gain in the ideal top k score 1.
pub fn ndcg_at_k(events: &[Vec<f64>], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if events.is_empty() {
        return Err(Error::InvalidArgument("no events to score".into()));
    }
    if events.iter().flatten().any(|g| !g.is_finite() || *g < 0.0) {
        return Err(Error::InvalidArgument("gains must be finite and non-negative".into()));
    }
    let dcg = |gains: &[f64]| -> f64 {
        gains
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, g)| g / ((i + 2) as f64).log2())
            .sum()
    };
    let total: f64 = events
        .iter()
        .map(|gains| {
            let mut ideal = gains.clone();
            ideal.sort_by(|a, b| b.total_cmp(a));
            let best = dcg(&ideal);
            if best == 0.0 {
                1.0
            } else {
                dcg(gains) / best
            }
        })
        .sum();
    Ok(total / events.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub label: String,
    #[serde(flatten)]
    pub scores: ClassScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub documents: usize,
    pub accuracy: f64,
    pub per_class: Vec<ClassReport>,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labelwise_weighted_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ndcg: Option<f64>,
}

impl EvalReport {
    /// Scores label sets. `multi_label` adds the label-wise weighted F1 and
    /// makes accuracy an exact-set match; otherwise every set must hold
    /// exactly one label.
    pub fn from_sets(
        pred: &[BTreeSet<usize>],
        gold: &[BTreeSet<usize>],
        label_names: &[String],
        multi_label: bool,
    ) -> Result<Self> {
        let n = label_names.len();
        let (accuracy, counts) = if multi_label {
            (accuracy(pred, gold)?, ConfusionCounts::from_sets(pred, gold, n)?)
        } else {
            let single = |sets: &[BTreeSet<usize>]| -> Result<Vec<usize>> {
                sets.iter()
                    .map(|s| match s.len() {
                        1 => Ok(*s.first().expect("one element")),
                        k => Err(Error::InvalidArgument(format!(
                            "single-label evaluation got a set of {k} labels"
                        ))),
                    })
                    .collect()
            };
            let (p, g) = (single(pred)?, single(gold)?);
            (accuracy(&p, &g)?, ConfusionCounts::from_single(&p, &g, n)?)
        };
        let f = f1_scores(&counts);
        Ok(EvalReport {
            documents: gold.len(),
            accuracy,
            per_class: label_names
                .iter()
                .zip(f.per_class)
                .map(|(name, scores)| ClassReport { label: name.clone(), scores })
                .collect(),
            micro_f1: f.micro,
            macro_f1: f.macro_,
            weighted_f1: f.weighted,
            labelwise_weighted_f1: multi_label.then_some(f.weighted),
            ndcg: None,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Aligned-column table.
    pub fn to_text(&self) -> String {
        let width = self
            .per_class
            .iter()
            .map(|c| c.label.chars().count())
            .chain(["weighted_f1".len()])
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}", "label", "precision", "recall", "f1", "support");
        for c in &self.per_class {
            let s = &c.scores;
            let _ = writeln!(
                out,
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}",
                c.label, s.precision, s.recall, s.f1, s.support
            );
        }
        out.push('\n');
        let mut line = |name: &str, v: f64| {
            let _ = writeln!(out, "{name:<width$}  {v:>9.4}");
        };
        line("accuracy", self.accuracy);
        line("micro_f1", self.micro_f1);
        line("macro_f1", self.macro_f1);
        line("weighted_f1", self.weighted_f1);
        if let Some(v) = self.labelwise_weighted_f1 {
            line("labelwise_f1", v);
        }
        if let Some(v) = self.ndcg {
            line("ndcg", v);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0], &[0, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 1, 2], &[0, 1, 2, 2]).unwrap(), 0.75);
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn f1_examples() {
        assert!((f1(2.0, 1.0, 1.0) - 2.0 / 3.0).abs() < 1e-15);
        // class 0 perfect with support 9, class 1 missed with support 1
        let c = ConfusionCounts {
            tp: vec![9, 0],
            fp: vec![0, 0],
            fn_: vec![0, 1],
            tn: vec![1, 9],
            total: 10,
        };
        let f = f1_scores(&c);
        assert_eq!(f.per_class[0].f1, 1.0);
        assert_eq!(f.per_class[1].f1, 0.0);
        assert_eq!(f.macro_, 0.5);
        assert_eq!(f.weighted, 0.9);
    }

    #[test]
    fn perfect_predictions() {
        let g = [0, 1, 2, 1];
        let f = f1_scores(&ConfusionCounts::from_single(&g, &g, 3).unwrap());
        assert_eq!((f.micro, f.macro_, f.weighted), (1.0, 1.0, 1.0));
    }

    #[test]
    fn labelwise() {
        let s = |v: &[usize]| v.iter().copied().collect::<BTreeSet<_>>();
        let gold = vec![s(&[0]), s(&[0, 1]), s(&[0])];
        assert_eq!(labelwise_weighted_f1(&gold, &gold, 2).unwrap(), 1.0);
        let empty = vec![s(&[]); 3];
        assert_eq!(labelwise_weighted_f1(&empty, &gold, 2).unwrap(), 0.0);
        // label 1: TP 1, FP 2 -> F1 0.5 with one gold occurrence
        let pred = vec![s(&[0, 1]), s(&[0, 1]), s(&[0, 1])];
        assert!((labelwise_weighted_f1(&pred, &gold, 2).unwrap() - 0.875).abs() < 1e-15);
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[vec![3.0, 2.0, 0.0]], 100).unwrap(), 1.0);
        let rev = ndcg_at_k(&[vec![0.0, 1.0]], 100).unwrap();
        assert!((rev - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((rev - 0.6309).abs() < 1e-4);
        assert_eq!(ndcg_at_k(&[vec![0.0, 0.0]], 10).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1).unwrap(), 0.5);
        assert!(ndcg_at_k(&[vec![1.0]], 0).is_err());
    }

    #[test]
    fn report_renders() {
        let s = |v: usize| BTreeSet::from([v]);
        let names = vec!["water".to_string(), "food".to_string()];
        let r = EvalReport::from_sets(&[s(0), s(1), s(1)], &[s(0), s(1), s(0)], &names, false).unwrap();
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.micro_f1 - r.accuracy).abs() < 1e-15);
        let text = r.to_text();
        assert!(text.lines().next().unwrap().starts_with("label"));
        assert!(text.contains("accuracy"));
        let back: EvalReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    proptest! {
        #[test]
        fn micro_equals_accuracy_and_weighted_is_bounded(
            pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..80)
        ) {
            let (pred, gold): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let f = f1_scores(&ConfusionCounts::from_single(&pred, &gold, 5).unwrap());
            prop_assert!((f.micro - accuracy(&pred, &gold).unwrap()).abs() < 1e-12);
            let supported: Vec<f64> = f.per_class.iter().filter(|c| c.support > 0).map(|c| c.f1).collect();
            let lo = supported.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = supported.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(f.weighted >= lo - 1e-12 && f.weighted <= hi + 1e-12);
        }

        #[test]
        fn relabeling_is_neutral(
            pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..60),
            shift in 1usize..4,
        ) {
            let (pred, gold): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let rot = |v: &[usize]| v.iter().map(|c| (c + shift) % 4).collect::<Vec<_>>();
            let a = f1_scores(&ConfusionCounts::from_single(&pred, &gold, 4).unwrap());
            let b = f1_scores(&ConfusionCounts::from_single(&rot(&pred), &rot(&gold), 4).unwrap());
            prop_assert!((a.micro - b.micro).abs() < 1e-12);
            prop_assert!((a.macro_ - b.macro_).abs() < 1e-12);
            prop_assert!((a.weighted - b.weighted).abs() < 1e-12);
        }
    }
}
