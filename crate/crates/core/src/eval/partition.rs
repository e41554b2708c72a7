//! Estimates of `Z = Σ_x P̃(x)` over all strings of one length.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::meter::log_scores;
use crate::ngram::{enumerate_keyspace, NgramModel};

/// Scoring batch for Monte Carlo loops.
pub(crate) const SCORE_CHUNK: usize = 1024;

/// A distribution over fixed-length index strings that can be sampled and
/// evaluated, used for importance sampling.
pub trait Proposal {
    fn draw(&self, len: usize, rng: &mut dyn rand::RngCore) -> Vec<usize>;
    /// `ln q(x)`; `-inf` where the proposal puts no mass.
    fn log_density(&self, x: &[usize]) -> f64;
}

impl Proposal for NgramModel {
    fn draw(&self, len: usize, mut rng: &mut dyn rand::RngCore) -> Vec<usize> {
        self.sample_with_len(len, &mut rng)
    }

    fn log_density(&self, x: &[usize]) -> f64 {
        self.sample_with_len_logprob(x)
    }
}

pub enum PartitionSampler<'a> {
    /// `Ẑ = N · mean P̃(x)` with `x` uniform over the `N = A^ℓ` keyspace.
    Uniform,
    /// `Ẑ = mean P̃(x) / q(x)` with `x ~ q`.
    Proposal(&'a dyn Proposal),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionEstimate {
    pub z: f64,
    pub std_error: f64,
    pub samples: usize,
}

pub(crate) fn scores_chunked<E: Estimator + ?Sized>(estimator: &E, xs: &[Vec<usize>]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(xs.len());
    for chunk in xs.chunks(SCORE_CHUNK) {
        out.extend(log_scores(estimator, chunk)?);
    }
    Ok(out)
}

pub fn estimate_partition<E: Estimator + ?Sized>(
    estimator: &E,
    len: usize,
    sampler: PartitionSampler<'_>,
    n_samples: usize,
    rng: &mut impl Rng,
) -> Result<PartitionEstimate> {
    if n_samples == 0 {
        return Err(Error::invalid("partition estimate needs at least one sample"));
    }
    if len == 0 {
        return Err(Error::invalid("partition estimate needs a positive length"));
    }
    let a = estimator.alphabet().content_len();
    let (xs, log_q): (Vec<Vec<usize>>, Vec<f64>) = match sampler {
        PartitionSampler::Uniform => {
            let log_q = -(len as f64) * (a as f64).ln();
            (0..n_samples)
                .map(|_| ((0..len).map(|_| rng.gen_range(0..a)).collect(), log_q))
                .unzip()
        }
        PartitionSampler::Proposal(q) => (0..n_samples)
            .map(|_| {
                let x = q.draw(len, rng);
                let lq = q.log_density(&x);
                (x, lq)
            })
            .unzip(),
    };
    if let Some(i) = log_q.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("proposal density is zero on sample {i}")));
    }
    let scores = scores_chunked(estimator, &xs)?;
    let values: Vec<f64> = scores.iter().zip(&log_q).map(|(s, q)| (s - q).exp()).collect();
    let n = n_samples as f64;
    let z = values.iter().sum::<f64>() / n;
    let std_error = if n_samples > 1 {
        (values.iter().map(|v| (v - z).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        f64::NAN
    };
    Ok(PartitionEstimate {
        z,
        std_error,
        samples: n_samples,
    })
}

/// `Z` by enumerating every string of length `len` (up to `cap` strings).
pub fn exact_partition<E: Estimator + ?Sized>(estimator: &E, len: usize, cap: u64) -> Result<f64> {
    let xs: Vec<Vec<usize>> = enumerate_keyspace(estimator.alphabet().content_len(), len, cap)?.collect();
    Ok(scores_chunked(estimator, &xs)?.into_iter().map(f64::exp).sum())
}
