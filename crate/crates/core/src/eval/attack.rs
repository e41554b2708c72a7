use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::guess::{GuessNumberResult, MonteCarloGuesser};
use crate::corpus::{Alphabet, LeakCorpus};
use crate::error::Result;
use crate::estimator::Estimator;
use crate::ngram::{fit_ngram, NgramModel, Termination};

/// Model-based guessing attack: an end-terminated n-gram trained on leaked
/// passwords, with Monte Carlo guess numbers from its own samples.
pub struct NgramAttack {
    model: NgramModel,
    guesser: MonteCarloGuesser,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackConfig {
    pub order: usize,
    pub smoothing: f64,
    pub samples: usize,
    pub cap: f64,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            order: 3,
            smoothing: 0.01,
            samples: 100_000,
            cap: super::guess::REPORTING_CAP,
            seed: 5,
        }
    }
}

impl NgramAttack {
    pub fn fit(train: &LeakCorpus, alphabet: &Alphabet, config: &AttackConfig) -> Result<Self> {
        let model = fit_ngram(train, alphabet, config.order, config.smoothing, Termination::EndSymbol)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let guesser = MonteCarloGuesser::from_ngram(&model, config.samples, config.cap, &mut rng)?;
        Ok(Self { model, guesser })
    }

    pub fn model(&self) -> &NgramModel {
        &self.model
    }

    pub fn guess(&self, passwords: &[String]) -> Result<Vec<GuessNumberResult>> {
        passwords
            .iter()
            .map(|p| {
                let x = self.model.alphabet().indices(p)?;
                Ok(self.guesser.guess(p, self.model.joint_logprob(&x)))
            })
            .collect()
    }

    /// The `k` passwords with the lowest guess numbers (ties by input order).
    pub fn weakest(&self, passwords: &[String], k: usize) -> Result<Vec<String>> {
        let g = self.guess(passwords)?;
        let mut order: Vec<usize> = (0..g.len()).collect();
        order.sort_by(|&a, &b| g[a].guess_number.total_cmp(&g[b].guess_number).then(a.cmp(&b)));
        Ok(order.into_iter().take(k).map(|i| passwords[i].clone()).collect())
    }
}
