//! Inpainting convolutional autoencoder over masked passwords.
//!
//! The network sees a password with exactly one position replaced by the
//! mask symbol and reconstructs every position; the softmax row at the masked
//! position estimates `Q(x_i | x_{-i})`. Inference runs the `ℓ` single-mask
//! variants of a password as one batch.

mod config;
mod io;
mod network;
mod train;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{Activation, LayerSpec, ModelConfig, Preset, TrainConfig};
pub use io::{load_model, save_model, FORMAT_VERSION, MAGIC};
pub use train::{train, train_with, EpochStats};

use crate::corpus::{Alphabet, EncodedPassword, LeakCorpus};
use crate::estimator::{CharDistribution, Estimator};
use crate::error::{Error, Result};
use crate::numerics::{ParamSet, Tape};

/// Rows per inference forward pass.
const INFERENCE_BATCH: usize = 512;

/// Replaces the 0-based `position` of `x` with the mask symbol.
pub fn mangle(x: &EncodedPassword, position: usize, alphabet: &Alphabet) -> Result<EncodedPassword> {
    if position >= x.len() {
        return Err(Error::invalid(format!(
            "mask position {position} outside password of length {}",
            x.len()
        )));
    }
    Ok(x.with_symbol(position, alphabet.mask()))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 over the training corpus entries.
    pub corpus_fingerprint: String,
    pub train_config: Option<TrainConfig>,
    pub final_loss: Option<f64>,
    pub loss_trace: Vec<f64>,
}

pub(crate) fn corpus_fingerprint(corpus: &LeakCorpus) -> String {
    let mut h = Sha256::new();
    for (pw, c) in corpus.iter() {
        h.update((pw.len() as u64).to_le_bytes());
        h.update(pw.as_bytes());
        h.update(c.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// A trained (or freshly initialised) autoencoder with its alphabet.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralModel {
    config: ModelConfig,
    alphabet: Alphabet,
    params: ParamSet,
    provenance: Provenance,
}

impl NeuralModel {
    /// Randomly initialised model; mostly useful for tests and tooling.
    pub fn init(config: ModelConfig, alphabet: Alphabet, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let params = network::init_params(&config, &mut rng)?;
        Self::from_parts(config, alphabet, params, Provenance::default())
    }

    pub(crate) fn from_parts(
        config: ModelConfig,
        alphabet: Alphabet,
        params: ParamSet,
        provenance: Provenance,
    ) -> Result<Self> {
        config.validate()?;
        if config.alphabet_size != alphabet.cardinality() {
            return Err(Error::IncompatibleAlphabet(format!(
                "config expects {} classes, alphabet has {}",
                config.alphabet_size,
                alphabet.cardinality()
            )));
        }
        if params.iter().any(|(_, t)| !t.all_finite()) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(Self {
            config,
            alphabet,
            params,
            provenance,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Fails unless `alphabet` matches the one the model was trained on.
    pub fn check_alphabet(&self, alphabet: &Alphabet) -> Result<()> {
        if &self.alphabet != alphabet {
            return Err(Error::IncompatibleAlphabet(format!(
                "model alphabet {:?} differs from {:?}",
                self.alphabet, alphabet
            )));
        }
        Ok(())
    }

    /// Content-symbol softmax at the masked position of each `(input, position)`.
    fn masked_rows(&self, inputs: &[(EncodedPassword, usize)]) -> Result<Vec<CharDistribution>> {
        let (max_len, classes) = (self.config.max_len, self.config.alphabet_size);
        let content = self.alphabet.content_len();
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(INFERENCE_BATCH) {
            let rows: Vec<&[usize]> = chunk.iter().map(|(e, _)| e.indices()).collect();
            let mut tape = Tape::new();
            let fwd = network::forward(&self.config, &self.params, &mut tape, network::one_hot(&rows, max_len, classes))?;
            let logits = tape.value(fwd.logits).data();
            for (b, (_, pos)) in chunk.iter().enumerate() {
                let at = (b * max_len + pos) * classes;
                // Softmax restricted to content symbols equals the full softmax
                // renormalized with mask and pad removed.
                let row: Vec<f64> = logits[at..at + content].iter().map(|&v| v as f64).collect();
                out.push(CharDistribution::from_log_weights(&row)?);
            }
        }
        Ok(out)
    }
}

impl Estimator for NeuralModel {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn max_len(&self) -> Option<usize> {
        Some(self.config.max_len)
    }

    fn name(&self) -> String {
        let short = self.provenance.corpus_fingerprint.get(..12).unwrap_or("untrained");
        format!("ippsm-{:?}-{}", self.config.preset, short).to_lowercase()
    }

    fn local_conditionals(&self, password: &[usize]) -> Result<Vec<CharDistribution>> {
        Ok(self.batch_local_conditionals(&[password.to_vec()])?.pop().unwrap())
    }

    fn batch_local_conditionals(&self, passwords: &[Vec<usize>]) -> Result<Vec<Vec<CharDistribution>>> {
        let mut jobs = Vec::new();
        for pw in passwords {
            if pw.is_empty() || pw.len() > self.config.max_len {
                return Err(Error::Length {
                    len: pw.len(),
                    min: 1,
                    max: self.config.max_len,
                });
            }
            let text = self.alphabet.string_from(pw);
            let encoded = self.alphabet.encode(&text, self.config.max_len)?;
            for i in 0..pw.len() {
                jobs.push((mangle(&encoded, i, &self.alphabet)?, i));
            }
        }
        let mut rows = self.masked_rows(&jobs)?.into_iter();
        Ok(passwords
            .iter()
            .map(|pw| rows.by_ref().take(pw.len()).collect())
            .collect())
    }
}
