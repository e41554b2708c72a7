use serde::{Deserialize, Serialize};

use crate::corpus::LeakCorpus;
use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::meter::log_scores;

/// 0-based competition ranks of `values` sorted descending: tied values
/// share the smallest index of their block.
pub fn competition_ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0; values.len()];
    for (k, &i) in order.iter().enumerate() {
        ranks[i] = match k {
            0 => 0,
            _ if values[order[k - 1]] == values[i] => ranks[order[k - 1]],
            _ => k,
        };
    }
    ranks
}

/// `w_i = q_i / Σq` with `q_i = 1 / (t_i + 1)`.
pub fn rank_weights(ranks: &[usize]) -> Vec<f64> {
    let q: Vec<f64> = ranks.iter().map(|&t| 1.0 / (t as f64 + 1.0)).collect();
    let total: f64 = q.iter().sum();
    q.into_iter().map(|v| v / total).collect()
}

/// Unique test passwords with frequency-derived ground-truth ranks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedTestSet {
    pub passwords: Vec<String>,
    pub frequencies: Vec<u64>,
    pub ranks: Vec<usize>,
    pub weights: Vec<f64>,
}

impl RankedTestSet {
    pub fn len(&self) -> usize {
        self.passwords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passwords.is_empty()
    }

    /// Weighted Spearman correlation between these ranks and `meter`'s.
    pub fn weighted_spearman(&self, meter: &[usize]) -> Result<f64> {
        weighted_spearman(&as_f64(&self.ranks), &as_f64(meter), &self.weights)
    }
}

pub fn ground_truth_ranks(test: &LeakCorpus) -> Result<RankedTestSet> {
    if test.is_empty() {
        return Err(Error::Corpus("test set is empty".into()));
    }
    let (passwords, frequencies): (Vec<String>, Vec<u64>) = test.iter().map(|(p, c)| (p.to_owned(), c)).unzip();
    let ranks = competition_ranks(&frequencies.iter().map(|&c| c as f64).collect::<Vec<_>>());
    let weights = rank_weights(&ranks);
    Ok(RankedTestSet {
        passwords,
        frequencies,
        ranks,
        weights,
    })
}

pub fn as_f64(ranks: &[usize]) -> Vec<f64> {
    ranks.iter().map(|&r| r as f64).collect()
}

/// Weighted Pearson correlation of two rank sequences around their
/// weighted means, clamped into `[-1, 1]`.
pub fn weighted_spearman(t: &[f64], m: &[f64], w: &[f64]) -> Result<f64> {
    if t.len() != m.len() || t.len() != w.len() {
        return Err(Error::shape(
            "weighted_spearman",
            format!("lengths {} / {} / {}", t.len(), m.len(), w.len()),
        ));
    }
    if t.len() < 2 {
        return Err(Error::invalid("weighted Spearman needs at least two items"));
    }
    if w.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    let total: f64 = w.iter().sum();
    let mean = |x: &[f64]| x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total;
    let (mt, mm) = (mean(t), mean(m));
    let (mut cov, mut vt, mut vm) = (0.0, 0.0, 0.0);
    for ((&a, &b), &wi) in t.iter().zip(m).zip(w) {
        let (da, db) = (a - mt, b - mm);
        cov += wi * da * db;
        vt += wi * da * da;
        vm += wi * db * db;
    }
    let degenerate = |v: f64, mu: f64| v <= 1e-24 * total * (1.0 + mu * mu);
    if degenerate(vt, mt) || degenerate(vm, mm) {
        return Err(Error::UndefinedCorrelation("a rank sequence has zero weighted variance".into()));
    }
    if t == m {
        return Ok(1.0);
    }
    Ok((cov / (vt * vm).sqrt()).clamp(-1.0, 1.0))
}

/// Meter ranks from descending scores; equal scores share a rank.
pub fn ranks_from_scores(scores: &[f64]) -> Vec<usize> {
    competition_ranks(scores)
}

/// Ranks by descending `P̃`, batched through the estimator.
pub fn meter_ranks<E: Estimator + ?Sized, S: AsRef<str>>(estimator: &E, passwords: &[S]) -> Result<Vec<usize>> {
    let idx: Vec<Vec<usize>> = passwords
        .iter()
        .map(|p| estimator.indices(p.as_ref()))
        .collect::<Result<_>>()?;
    let mut scores = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(1024) {
        scores.extend(log_scores(estimator, chunk)?);
    }
    Ok(ranks_from_scores(&scores))
}
