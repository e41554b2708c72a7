//! Guess numbers: the position of a password in an attacker's
//! descending-probability guessing order.

use serde::{Deserialize, Serialize};

use super::partition::scores_chunked;
use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::ngram::{enumerate_keyspace, NgramModel};

/// Unguessed sentinel used when reporting at full scale.
pub const REPORTING_CAP: f64 = 1e12;
/// Unguessed sentinel for desk-scale experiments.
pub const DESK_CAP: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuessMethod {
    ExactEnumeration,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuessNumberResult {
    pub password: String,
    /// 0-based guess number; equals the cap when `unguessed`.
    pub guess_number: f64,
    pub unguessed: bool,
    pub method: GuessMethod,
}

impl GuessNumberResult {
    fn new(password: &str, g: f64, cap: f64, method: GuessMethod) -> Self {
        let unguessed = g > cap;
        Self {
            password: password.to_owned(),
            guess_number: if unguessed { cap } else { g },
            unguessed,
            method,
        }
    }
}

/// Exact guess numbers over one enumerable keyspace.
///
/// `g(x)` counts strings with strictly higher `P̃`; ties are broken by
/// lexicographic (alphabet index) order so `g` is a bijection onto
/// `0..A^ℓ`.
pub struct ExactRanker {
    symbols: usize,
    len: usize,
    /// Guess number of each keyspace string, indexed lexicographically.
    rank_of: Vec<usize>,
    log_scores: Vec<f64>,
}

impl ExactRanker {
    pub fn new<E: Estimator + ?Sized>(estimator: &E, len: usize, cap: u64) -> Result<Self> {
        let symbols = estimator.alphabet().content_len();
        let xs: Vec<Vec<usize>> = enumerate_keyspace(symbols, len, cap)?.collect();
        let log_scores = scores_chunked(estimator, &xs)?;
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by(|&a, &b| log_scores[b].total_cmp(&log_scores[a]).then(a.cmp(&b)));
        let mut rank_of = vec![0; xs.len()];
        for (g, &i) in order.iter().enumerate() {
            rank_of[i] = g;
        }
        Ok(Self {
            symbols,
            len,
            rank_of,
            log_scores,
        })
    }

    fn lex_index(&self, x: &[usize]) -> Result<usize> {
        if x.len() != self.len {
            return Err(Error::invalid(format!(
                "keyspace holds length {} strings, got {}",
                self.len,
                x.len()
            )));
        }
        Ok(x.iter().fold(0, |acc, &s| acc * self.symbols + s))
    }

    pub fn guess_number(&self, x: &[usize]) -> Result<usize> {
        Ok(self.rank_of[self.lex_index(x)?])
    }

    pub fn log_score(&self, x: &[usize]) -> Result<f64> {
        Ok(self.log_scores[self.lex_index(x)?])
    }

    pub fn keyspace_len(&self) -> usize {
        self.rank_of.len()
    }
}

pub fn exact_guess_number<E: Estimator + ?Sized>(estimator: &E, password: &str, cap: u64) -> Result<GuessNumberResult> {
    let x = estimator.indices(password)?;
    let ranker = ExactRanker::new(estimator, x.len(), cap)?;
    let g = ranker.guess_number(&x)?;
    Ok(GuessNumberResult::new(password, g as f64, f64::INFINITY, GuessMethod::ExactEnumeration))
}

/// Monte Carlo guess-number estimator from a weighted sample set:
/// `g(x) ≈ (1/n) Σ_s [score(s) > score(x)] / q(s)` where `q` is the density
/// the samples were drawn from. With `q = P̃/Ẑ` this is the usual
/// self-sampling estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloGuesser {
    /// Sample scores, descending.
    scores: Vec<f64>,
    /// `cumulative[k]` = estimated number of strings scoring at least `scores[k]`.
    cumulative: Vec<f64>,
    cap: f64,
}

impl MonteCarloGuesser {
    /// `samples` are `(score(s), ln q(s))` pairs.
    pub fn new(samples: impl IntoIterator<Item = (f64, f64)>, cap: f64) -> Result<Self> {
        let mut samples: Vec<(f64, f64)> = samples.into_iter().collect();
        if samples.is_empty() {
            return Err(Error::invalid("Monte Carlo guessing needs at least one sample"));
        }
        if samples.iter().any(|(s, q)| s.is_nan() || !q.is_finite()) {
            return Err(Error::NonFinite("guess-number sample score or density".into()));
        }
        let n = samples.len() as f64;
        samples.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut acc = 0.0;
        let cumulative = samples
            .iter()
            .map(|&(_, lq)| {
                acc += (-lq).exp() / n;
                acc
            })
            .collect();
        Ok(Self {
            scores: samples.into_iter().map(|(s, _)| s).collect(),
            cumulative,
            cap,
        })
    }

    /// Samples drawn from the normalized meter `P̃/Ẑ` itself.
    pub fn from_model_samples<E: Estimator + ?Sized>(
        estimator: &E,
        samples: &[Vec<usize>],
        log_z: f64,
        cap: f64,
    ) -> Result<Self> {
        let scores = scores_chunked(estimator, samples)?;
        Self::new(scores.into_iter().map(|s| (s, s - log_z)), cap)
    }

    /// An attacker that guesses in the order of an n-gram's joint
    /// probability, using `n` of its own ancestral samples.
    pub fn from_ngram(model: &NgramModel, n: usize, cap: f64, rng: &mut impl rand::Rng) -> Result<Self> {
        Self::new(
            (0..n).map(|_| {
                let lp = model.joint_logprob(&model.sample(rng));
                (lp, lp)
            }),
            cap,
        )
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn samples(&self) -> usize {
        self.scores.len()
    }

    /// Estimated guess number for a password with the given score.
    pub fn estimate(&self, score: f64) -> f64 {
        let above = self.scores.partition_point(|&s| s > score);
        if above == 0 {
            0.0
        } else {
            self.cumulative[above - 1]
        }
    }

    pub fn guess(&self, password: &str, score: f64) -> GuessNumberResult {
        GuessNumberResult::new(password, self.estimate(score), self.cap, GuessMethod::MonteCarlo)
    }
}
