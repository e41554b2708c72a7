//! The interface every strength backend implements: a full conditional
//! distribution over content symbols for each position of a password.

use serde::{Deserialize, Serialize};

use crate::corpus::{Alphabet, LeakCorpus};
use crate::error::{Error, Result};

/// Probability vector over the content symbols of an alphabet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharDistribution(Vec<f64>);

impl CharDistribution {
    /// Validates non-negativity and unit mass (±1e-6).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("empty distribution"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::NonFinite("distribution entries".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("distribution sums to {total}")));
        }
        Ok(Self(probs))
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::invalid(format!("cannot normalize weights with mass {total}")));
        }
        Ok(Self(weights.into_iter().map(|w| w / total).collect()))
    }

    /// Softmax of log-weights, computed stably.
    pub fn from_log_weights(logw: &[f64]) -> Result<Self> {
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::invalid("all log-weights are -inf"));
        }
        Self::from_weights(logw.iter().map(|l| (l - max).exp()).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn prob(&self, symbol: usize) -> f64 {
        self.0[symbol]
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A source of local conditional distributions `Q(x_i = s | x_{-i})`.
pub trait Estimator: Send + Sync {
    fn alphabet(&self) -> &Alphabet;

    /// Longest supported password, if bounded.
    fn max_len(&self) -> Option<usize>;

    /// Short identifier used in reports.
    fn name(&self) -> String;

    /// One distribution per position of `password` (content indices).
    fn local_conditionals(&self, password: &[usize]) -> Result<Vec<CharDistribution>>;

    /// Batched form; backends that can amortize work override this.
    fn batch_local_conditionals(&self, passwords: &[Vec<usize>]) -> Result<Vec<Vec<CharDistribution>>> {
        passwords.iter().map(|p| self.local_conditionals(p)).collect()
    }

    /// Encodes `password` and checks the length bound.
    fn indices(&self, password: &str) -> Result<Vec<usize>> {
        let idx = self.alphabet().indices(password)?;
        let max = self.max_len().unwrap_or(usize::MAX);
        if idx.is_empty() || idx.len() > max {
            return Err(Error::Length {
                len: idx.len(),
                min: 1,
                max,
            });
        }
        Ok(idx)
    }
}

impl<E: Estimator + ?Sized> Estimator for &E {
    fn alphabet(&self) -> &Alphabet {
        (**self).alphabet()
    }
    fn max_len(&self) -> Option<usize> {
        (**self).max_len()
    }
    fn name(&self) -> String {
        (**self).name()
    }
    fn local_conditionals(&self, password: &[usize]) -> Result<Vec<CharDistribution>> {
        (**self).local_conditionals(password)
    }
    fn batch_local_conditionals(&self, passwords: &[Vec<usize>]) -> Result<Vec<Vec<CharDistribution>>> {
        (**self).batch_local_conditionals(passwords)
    }
}

impl<E: Estimator + ?Sized> Estimator for Box<E> {
    fn alphabet(&self) -> &Alphabet {
        (**self).alphabet()
    }
    fn max_len(&self) -> Option<usize> {
        (**self).max_len()
    }
    fn name(&self) -> String {
        (**self).name()
    }
    fn local_conditionals(&self, password: &[usize]) -> Result<Vec<CharDistribution>> {
        (**self).local_conditionals(password)
    }
    fn batch_local_conditionals(&self, passwords: &[Vec<usize>]) -> Result<Vec<Vec<CharDistribution>>> {
        (**self).batch_local_conditionals(passwords)
    }
}

/// Every position uniform over the alphabet.
#[derive(Clone, Debug)]
pub struct UniformEstimator {
    alphabet: Alphabet,
}

impl UniformEstimator {
    pub fn new(alphabet: Alphabet) -> Self {
        Self { alphabet }
    }
}

impl Estimator for UniformEstimator {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn max_len(&self) -> Option<usize> {
        None
    }

    fn name(&self) -> String {
        "uniform".into()
    }

    fn local_conditionals(&self, password: &[usize]) -> Result<Vec<CharDistribution>> {
        Ok(vec![CharDistribution::uniform(self.alphabet.content_len()); password.len()])
    }
}

/// Context-free symbol frequencies: `Q(x_i = s)` is the corpus unigram
/// probability of `s` at every position.
#[derive(Clone, Debug)]
pub struct UnigramEstimator {
    alphabet: Alphabet,
    row: CharDistribution,
}

impl UnigramEstimator {
    pub fn fit(corpus: &LeakCorpus, alphabet: Alphabet, smoothing: f64) -> Result<Self> {
        let mut counts = vec![smoothing; alphabet.content_len()];
        for (pw, c) in corpus.iter() {
            for ch in pw.chars() {
                if let Some(i) = alphabet.index_of(ch) {
                    counts[i] += c as f64;
                }
            }
        }
        Ok(Self {
            row: CharDistribution::from_weights(counts)?,
            alphabet,
        })
    }
}

impl Estimator for UnigramEstimator {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn max_len(&self) -> Option<usize> {
        None
    }

    fn name(&self) -> String {
        "unigram".into()
    }

    fn local_conditionals(&self, password: &[usize]) -> Result<Vec<CharDistribution>> {
        Ok(vec![self.row.clone(); password.len()])
    }
}
