//! Soft-label self-training.
//!
//! The corpus is walked in portions of `batch_size * update_interval`
//! documents. For each portion the current model's predictions `P` are
//! sharpened into targets
//!
//! ```text
//! q[i][j] = (p[i][j]^2 / f[j]) / sum_k (p[i][k]^2 / f[k]),   f[j] = sum_i p[i][j]
//! ```
//!
//! and, with `Q` frozen, the model takes `update_interval` mini-batch steps
//! on `KL(Q || P)`.
//!
//! Sigmoid heads apply the same rule per label to the Bernoulli pair
//! `(p, 1 - p)`, with `f` and its complement summed over the portion.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{featurize, Classifier, OutputMode};
use crate::corpus::Dataset;
use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelfTrainConfig {
    pub batch_size: usize,
    pub update_interval: usize,
    pub passes: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        SelfTrainConfig {
            batch_size: 128,
            update_interval: 50,
            passes: 1,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

impl SelfTrainConfig {
    /// Documents per portion.
    pub fn portion_size(&self) -> usize {
        self.batch_size * self.update_interval
    }
}

fn check_matrix(p: &[Vec<f64>]) -> Result<usize> {
    let n = p
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidArgument("empty prediction matrix".into()))?;
    for row in p {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "prediction entries must be finite and non-negative".into(),
            ));
        }
    }
    Ok(n)
}

/// Sharpened targets for a softmax prediction matrix (rows are documents).
pub fn soft_targets(p: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = check_matrix(p)?;
    let mut column_mass = vec![0.0; n];
    for row in p {
        column_mass.iter_mut().zip(row).for_each(|(f, v)| *f += v);
    }
    if let Some(j) = column_mass.iter().position(|&f| f <= 0.0) {
        return Err(Error::Degenerate(format!("class {j} has zero predicted mass")));
    }
    p.iter()
        .map(|row| {
            let weighted: Vec<f64> = row
                .iter()
                .zip(&column_mass)
                .map(|(v, f)| v * v / f)
                .collect();
            let total: f64 = weighted.iter().sum();
            if total <= 0.0 {
                return Err(Error::Degenerate("all-zero prediction row".into()));
            }
            Ok(weighted.into_iter().map(|w| w / total).collect())
        })
        .collect()
}

/// Per-label sharpening for sigmoid heads over the pair `(p, 1 - p)`.
pub fn soft_targets_bernoulli(p: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = check_matrix(p)?;
    if p.iter().flatten().any(|&v| v > 1.0) {
        return Err(Error::InvalidArgument("probabilities must not exceed 1".into()));
    }
    let mut on = vec![0.0; n];
    let mut off = vec![0.0; n];
    for row in p {
        for (j, &v) in row.iter().enumerate() {
            on[j] += v;
            off[j] += 1.0 - v;
        }
    }
    Ok(p.iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, &v)| {
                    if on[j] <= 0.0 {
                        return 0.0;
                    }
                    if off[j] <= 0.0 {
                        return 1.0;
                    }
                    let a = v * v / on[j];
                    let b = (1.0 - v) * (1.0 - v) / off[j];
                    a / (a + b)
                })
                .collect()
        })
        .collect())
}

fn check_shapes(q: &[Vec<f64>], p: &[Vec<f64>]) -> Result<()> {
    if q.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            actual: q.len(),
        });
    }
    for (qr, pr) in q.iter().zip(p) {
        if qr.len() != pr.len() {
            return Err(Error::DimensionMismatch {
                expected: pr.len(),
                actual: qr.len(),
            });
        }
    }
    Ok(())
}

fn kl_term(q: f64, p: f64) -> Result<f64> {
    if q <= 0.0 {
        return Ok(0.0);
    }
    if p <= 0.0 {
        return Err(Error::Degenerate(format!(
            "target mass {q} where prediction is zero"
        )));
    }
    Ok(q * (q / p).ln())
}

/// `sum_i sum_j q[i][j] ln(q[i][j] / p[i][j])`, with `0 ln 0 = 0`.
pub fn kl_divergence(q: &[Vec<f64>], p: &[Vec<f64>]) -> Result<f64> {
    check_shapes(q, p)?;
    let mut total = 0.0;
    for (qr, pr) in q.iter().zip(p) {
        let mut row = 0.0;
        for (&qv, &pv) in qr.iter().zip(pr) {
            row += kl_term(qv, pv)?;
        }
        // each row is a KL between distributions, so only rounding can make it negative
        total += row.max(0.0);
    }
    Ok(total)
}

/// KL summed over independent Bernoulli pairs.
pub fn bernoulli_kl(q: &[Vec<f64>], p: &[Vec<f64>]) -> Result<f64> {
    check_shapes(q, p)?;
    let mut total = 0.0;
    for (qr, pr) in q.iter().zip(p) {
        for (&qv, &pv) in qr.iter().zip(pr) {
            let term = kl_term(qv, pv)? + kl_term(1.0 - qv, 1.0 - pv)?;
            total += term.max(0.0);
        }
    }
    Ok(total)
}

fn targets_for(mode: OutputMode, p: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    match mode {
        OutputMode::Softmax => soft_targets(p),
        OutputMode::Sigmoid => soft_targets_bernoulli(p),
    }
}

fn mean_kl(mode: OutputMode, q: &[Vec<f64>], p: &[Vec<f64>]) -> Result<f64> {
    let total = match mode {
        OutputMode::Softmax => kl_divergence(q, p)?,
        OutputMode::Sigmoid => bernoulli_kl(q, p)?,
    };
    Ok(total / q.len().max(1) as f64)
}

/// Mean per-document KL of one portion before and after its update steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PortionLoss {
    pub portion: usize,
    pub before: f64,
    pub after: f64,
    /// Portion KL after each update step.
    pub steps: Vec<f64>,
}

/// `portion_index,kl_loss_before,kl_loss_after` CSV.
pub fn loss_trace_csv(trace: &[PortionLoss]) -> String {
    let mut out = String::from("portion_index,kl_loss_before,kl_loss_after\n");
    for t in trace {
        out.push_str(&format!("{},{},{}\n", t.portion, t.before, t.after));
    }
    out
}

fn predict_rows<C: Classifier>(model: &C, features: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    features
        .iter()
        .map(|h| model.predict_proba(h).map(|p| p.values))
        .collect()
}

/// Refines `model` on unlabelled feature vectors.
///
/// The corpus order is shuffled once (seeded); portions follow that order
/// and the last portion holds the remainder. Each portion gets
/// `update_interval` steps, cycling over its mini-batches.
pub fn self_train<C: Classifier>(
    mut model: C,
    features: &[Vec<f64>],
    config: &SelfTrainConfig,
) -> Result<(C, Vec<PortionLoss>)> {
    if config.batch_size == 0 || config.update_interval == 0 {
        return Err(Error::InvalidArgument(
            "batch size and update interval must be positive".into(),
        ));
    }
    if config.passes == 0 {
        return Ok((model, Vec::new()));
    }
    if features.is_empty() {
        return Err(Error::InvalidArgument("self-training corpus is empty".into()));
    }

    let mode = model.mode();
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));

    let mut trace = Vec::new();
    for _ in 0..config.passes {
        for portion in order.chunks(config.portion_size()) {
            let h: Vec<&[f64]> = portion.iter().map(|&i| features[i].as_slice()).collect();
            let p = predict_rows(&model, &h)?;
            let q = targets_for(mode, &p)?;
            let before = mean_kl(mode, &q, &p)?;

            let positions: Vec<usize> = (0..h.len()).collect();
            let batches: Vec<&[usize]> = positions.chunks(config.batch_size).collect();
            let mut steps = Vec::with_capacity(config.update_interval);
            for step in 0..config.update_interval {
                let batch = batches[step % batches.len()];
                let bh: Vec<&[f64]> = batch.iter().map(|&i| h[i]).collect();
                let bq: Vec<&[f64]> = batch.iter().map(|&i| q[i].as_slice()).collect();
                model.gradient_step(&bh, &bq, config.learning_rate)?;
                steps.push(mean_kl(mode, &q, &predict_rows(&model, &h)?)?);
            }
            let after = steps.last().copied().unwrap_or(before);
            trace.push(PortionLoss {
                portion: trace.len(),
                before,
                after,
                steps,
            });
        }
    }
    Ok((model, trace))
}

/// Featurizes `corpus` with `provider` and self-trains on it.
pub fn self_train_corpus<C: Classifier>(
    model: C,
    corpus: &Dataset,
    provider: &dyn EmbeddingProvider,
    config: &SelfTrainConfig,
) -> Result<(C, Vec<PortionLoss>)> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("self-training corpus is empty".into()));
    }
    let features = featurize(corpus.documents(), provider)?;
    self_train(model, &features, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::LinearClassifier;
    use proptest::prelude::*;

    #[test]
    fn single_row_is_a_fixed_point() {
        let p = vec![vec![0.2, 0.5, 0.3]];
        let q = soft_targets(&p).unwrap();
        for (a, b) in q[0].iter().zip(&p[0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_stays_uniform() {
        let p = vec![vec![0.25; 4]; 5];
        let q = soft_targets(&p).unwrap();
        assert!(q.iter().flatten().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn worked_two_by_two() {
        let q = soft_targets(&[vec![0.8, 0.2], vec![0.4, 0.6]]).unwrap();
        let expected = [[0.914_29, 0.085_71], [0.228_57, 0.771_43]];
        for (row, exp) in q.iter().zip(expected) {
            for (a, b) in row.iter().zip(exp) {
                assert!((a - b).abs() < 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_column_is_degenerate() {
        assert!(matches!(
            soft_targets(&[vec![1.0, 0.0], vec![1.0, 0.0]]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn kl_closed_forms() {
        let p = vec![vec![0.3, 0.7], vec![0.5, 0.5]];
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let ln2 = kl_divergence(&[vec![1.0, 0.0]], &[vec![0.5, 0.5]]).unwrap();
        assert!((ln2 - 2f64.ln()).abs() < 1e-12);
        let n = 5;
        let mut onehot = vec![0.0; n];
        onehot[3] = 1.0;
        let kl = kl_divergence(&[onehot], &[vec![1.0 / n as f64; n]]).unwrap();
        assert!((kl - (n as f64).ln()).abs() < 1e-12);
        assert!(kl_divergence(&[vec![0.5, 0.5]], &[vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn bernoulli_targets_sharpen() {
        let p = vec![vec![0.9], vec![0.2], vec![0.6]];
        let q = soft_targets_bernoulli(&p).unwrap();
        assert!(q[0][0] > 0.9 && q[1][0] < 0.2);
        assert!(q.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(bernoulli_kl(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn zero_passes_is_identity() {
        let m = LinearClassifier::from_parameters(
            OutputMode::Softmax, 2, vec![0.1, 0.2, 0.3, 0.4], vec![0.0, 0.1],
        ).unwrap();
        let cfg = SelfTrainConfig { passes: 0, ..Default::default() };
        let (out, trace) = self_train(m.clone(), &[vec![1.0, 0.0]], &cfg).unwrap();
        assert_eq!(out, m);
        assert!(trace.is_empty());
    }

    fn toy_features() -> Vec<Vec<f64>> {
        (0..40)
            .map(|i| {
                let a = i as f64 * 0.37;
                vec![a.cos(), a.sin(), 0.3]
            })
            .collect()
    }

    #[test]
    fn small_corpus_is_one_portion_and_loss_falls() {
        let m = LinearClassifier::from_parameters(
            OutputMode::Softmax,
            3,
            vec![1.0, 0.0, 0.0, -0.5, 0.8, 0.0, -0.5, -0.8, 0.0],
            vec![0.0; 3],
        )
        .unwrap();
        let cfg = SelfTrainConfig { batch_size: 64, update_interval: 20, ..Default::default() };
        let (_, trace) = self_train(m, &toy_features(), &cfg).unwrap();
        assert_eq!(trace.len(), 1);
        let t = &trace[0];
        assert_eq!(t.steps.len(), 20);
        assert!(t.after < t.before);
        let mut prev = t.before;
        for &s in &t.steps {
            assert!(s <= prev + 1e-6, "KL rose from {prev} to {s}");
            prev = s;
        }
        let csv = loss_trace_csv(&trace);
        assert!(csv.starts_with("portion_index,kl_loss_before,kl_loss_after\n0,"));
    }

    #[test]
    fn remainder_portions() {
        let m = LinearClassifier::zeros(2, 3, OutputMode::Sigmoid);
        let cfg = SelfTrainConfig { batch_size: 4, update_interval: 3, passes: 2, ..Default::default() };
        let (_, trace) = self_train(m, &toy_features(), &cfg).unwrap();
        // 40 documents in portions of 12 -> 4 portions per pass
        assert_eq!(trace.len(), 8);
        assert_eq!(trace.last().unwrap().portion, 7);
    }

    fn stochastic_matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..8, 2usize..6).prop_flat_map(|(m, n)| {
            proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, n), m).prop_map(
                |rows| {
                    rows.into_iter()
                        .map(|r| {
                            let s: f64 = r.iter().sum();
                            r.into_iter().map(|v| v / s).collect()
                        })
                        .collect()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn targets_are_row_stochastic(p in stochastic_matrix()) {
            let q = soft_targets(&p).unwrap();
            for row in &q {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(row.iter().all(|&v| v >= 0.0));
            }
        }

        #[test]
        fn targets_follow_row_permutations(p in stochastic_matrix(), seed in any::<u64>()) {
            let mut idx: Vec<usize> = (0..p.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let permuted: Vec<Vec<f64>> = idx.iter().map(|&i| p[i].clone()).collect();
            let q = soft_targets(&p).unwrap();
            let qp = soft_targets(&permuted).unwrap();
            for (k, &i) in idx.iter().enumerate() {
                for (a, b) in qp[k].iter().zip(&q[i]) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn kl_is_non_negative(q in stochastic_matrix(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p: Vec<Vec<f64>> = q
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    r.shuffle(&mut rng);
                    r
                })
                .collect();
            let kl = kl_divergence(&q, &p).unwrap();
            prop_assert!(kl >= 0.0);
            let differ = q.iter().flatten().zip(p.iter().flatten()).any(|(a, b)| (a - b).abs() > 1e-9);
            prop_assert_eq!(kl > 0.0, differ);
        }
    }
}
