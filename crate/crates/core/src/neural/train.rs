use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, TrainConfig};
use super::network::{forward, init_params, one_hot};
use super::{corpus_fingerprint, mangle, NeuralModel, Provenance};
use crate::corpus::{Alphabet, EncodedPassword, LeakCorpus};
use crate::error::{Error, Result};
use crate::numerics::{adam_step, median_bandwidth, OptimizerState, Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub steps: usize,
    /// Mean total loss `reconstruction + alpha * mmd` over the epoch.
    pub loss: f64,
    pub reconstruction: f64,
    pub mmd: f64,
}

/// Trains from scratch; see [`train_with`].
pub fn train(
    train_set: &LeakCorpus,
    alphabet: &Alphabet,
    model_config: ModelConfig,
    config: &TrainConfig,
) -> Result<(NeuralModel, Vec<EpochStats>)> {
    train_with(train_set, alphabet, model_config, config, |_| {})
}

/// Mask-one-character inpainting with label-smoothed cross-entropy over the
/// full reconstruction plus `alpha` times the latent MMD against standard
/// normal draws, optimized with Adam.
///
/// Batches are drawn with replacement proportionally to leak frequency and a
/// single uniformly chosen content position per example is masked.
pub fn train_with(
    train_set: &LeakCorpus,
    alphabet: &Alphabet,
    model_config: ModelConfig,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(NeuralModel, Vec<EpochStats>)> {
    // Non-generic body, so it is compiled (and optimized) once in this crate.
    train_dyn(train_set, alphabet, model_config, config, &mut on_epoch)
}

fn train_dyn(
    train_set: &LeakCorpus,
    alphabet: &Alphabet,
    model_config: ModelConfig,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<(NeuralModel, Vec<EpochStats>)> {
    config.validate()?;
    model_config.validate()?;
    if model_config.alphabet_size != alphabet.cardinality() {
        return Err(Error::IncompatibleAlphabet(format!(
            "config expects {} classes, alphabet has {}",
            model_config.alphabet_size,
            alphabet.cardinality()
        )));
    }
    if train_set.is_empty() {
        return Err(Error::Corpus("training set is empty".into()));
    }
    let encoded: Vec<EncodedPassword> = train_set
        .passwords()
        .map(|p| alphabet.encode(p, model_config.max_len))
        .collect::<Result<_>>()?;
    let weights: Vec<u64> = train_set.iter().map(|(_, c)| c).collect();
    let sampler = WeightedIndex::new(&weights).map_err(|e| Error::Corpus(e.to_string()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = init_params(&model_config, &mut rng)?;
    let mut optimizer = OptimizerState::adam(config.learning_rate);
    let steps_per_epoch = config
        .steps_per_epoch
        .unwrap_or_else(|| (train_set.total() as usize).div_ceil(config.batch_size))
        .max(1);
    let (max_len, classes, latent_dim) = (model_config.max_len, model_config.alphabet_size, model_config.latent_dim);

    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (mut sum_loss, mut sum_rec, mut sum_mmd) = (0.0, 0.0, 0.0);
        for step in 0..steps_per_epoch {
            let mut inputs = Vec::with_capacity(config.batch_size);
            let mut targets = Vec::with_capacity(config.batch_size * max_len);
            for _ in 0..config.batch_size {
                let x = &encoded[sampler.sample(&mut rng)];
                let pos = rng.gen_range(0..x.len());
                inputs.push(mangle(x, pos, alphabet)?);
                targets.extend_from_slice(x.indices());
            }
            let rows: Vec<&[usize]> = inputs.iter().map(|e| e.indices()).collect();
            let batch = one_hot(&rows, max_len, classes);

            let mut tape = Tape::new();
            let out = forward(&model_config, &params, &mut tape, batch)?;
            let flat = tape.reshape(out.logits, vec![config.batch_size * max_len, classes])?;
            let rec = tape.softmax_cross_entropy(flat, &targets, config.label_smoothing)?;
            let rec_value = tape.value(rec).item() as f64;
            let (loss, mmd_value) = if config.alpha > 0.0 {
                let prior: Vec<f32> = (0..config.batch_size * latent_dim)
                    .map(|_| rng.sample::<f32, _>(StandardNormal))
                    .collect();
                let prior = Tensor::new(vec![config.batch_size, latent_dim], prior)?;
                let bandwidth = median_bandwidth(tape.value(out.latent), &prior)?;
                let mmd = tape.mmd(out.latent, prior, bandwidth)?;
                let mmd_value = tape.value(mmd).item() as f64;
                let weighted = tape.scale(mmd, config.alpha)?;
                (tape.add(rec, weighted)?, mmd_value)
            } else {
                (rec, 0.0)
            };
            let loss_value = rec_value + config.alpha * mmd_value;
            if !loss_value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, step {step} (reconstruction {rec_value}, mmd {mmd_value})"
                )));
            }
            let grads = tape.backward(loss)?;
            adam_step(&mut params, &grads, &mut optimizer)?;
            sum_loss += loss_value;
            sum_rec += rec_value;
            sum_mmd += mmd_value;
        }
        let n = steps_per_epoch as f64;
        let stats = EpochStats {
            epoch,
            steps: steps_per_epoch,
            loss: sum_loss / n,
            reconstruction: sum_rec / n,
            mmd: sum_mmd / n,
        };
        on_epoch(&stats);
        trace.push(stats);
    }

    let provenance = Provenance {
        corpus_fingerprint: corpus_fingerprint(train_set),
        train_config: Some(config.clone()),
        final_loss: trace.last().map(|s| s.loss),
        loss_trace: trace.iter().map(|s| s.loss).collect(),
    };
    let model = NeuralModel::from_parts(model_config, alphabet.clone(), params, provenance)?;
    Ok((model, trace))
}
