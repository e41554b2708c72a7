//! Parameter layout and forward graph of the inpainting autoencoder.

use rand::Rng;

use super::config::{LayerSpec, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::{NodeId, ParamSet, Tape, Tensor};

fn uniform(shape: Vec<usize>, bound: f64, rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound) as f32).collect();
    Tensor::new(shape, data).expect("shape and data agree")
}

fn conv_params(params: &mut ParamSet, name: &str, width: usize, cin: usize, cout: usize, gain: f64, rng: &mut impl Rng) {
    let bound = gain * (6.0 / (width * cin) as f64).sqrt();
    params.push(format!("{name}.kernel"), uniform(vec![width, cin, cout], bound, rng));
    params.push(format!("{name}.bias"), Tensor::zeros(vec![cout]));
}

fn dense_params(params: &mut ParamSet, name: &str, inputs: usize, outputs: usize, rng: &mut impl Rng) {
    let bound = (6.0 / (inputs + outputs) as f64).sqrt();
    params.push(format!("{name}.weights"), uniform(vec![inputs, outputs], bound, rng));
    params.push(format!("{name}.bias"), Tensor::zeros(vec![outputs]));
}

fn bottleneck_width(filters: usize) -> usize {
    (filters / 2).max(1)
}

/// Allocates parameters in layer order with Glorot/He-uniform initialisation.
pub(crate) fn init_params(cfg: &ModelConfig, rng: &mut impl Rng) -> Result<ParamSet> {
    cfg.validate()?;
    let mut params = ParamSet::new();
    // (length, channels) of the running activation; `flat` once flattened.
    let mut channels = cfg.alphabet_size;
    let mut flat: Option<usize> = None;
    for (i, layer) in cfg.layers().iter().enumerate() {
        let name = format!("layer{i:02}");
        match *layer {
            LayerSpec::Conv1dSame { filters, kernel, .. } => {
                conv_params(&mut params, &name, kernel, channels, filters, 1.0, rng);
                channels = filters;
            }
            LayerSpec::ResidualBottleneck {
                filters,
                kernel,
                outer_kernel,
            } => {
                let mid = bottleneck_width(filters);
                conv_params(&mut params, &format!("{name}.a"), outer_kernel, channels, mid, 1.0, rng);
                conv_params(&mut params, &format!("{name}.b"), kernel, mid, mid, 1.0, rng);
                // Small residual branches keep the stack near identity at init.
                conv_params(&mut params, &format!("{name}.c"), outer_kernel, mid, filters, 0.1, rng);
                if channels != filters {
                    conv_params(&mut params, &format!("{name}.proj"), 1, channels, filters, 1.0, rng);
                }
                channels = filters;
            }
            LayerSpec::Flatten => flat = Some(cfg.max_len * channels),
            LayerSpec::Dense { units, .. } => {
                let inputs = flat.ok_or_else(|| Error::invalid("dense layer before flatten"))?;
                dense_params(&mut params, &name, inputs, units, rng);
                flat = Some(units);
            }
            LayerSpec::Reshape { ref shape } => {
                channels = *shape.last().unwrap();
                flat = None;
            }
        }
    }
    Ok(params)
}

/// Output nodes of one forward pass.
pub(crate) struct Forward {
    /// `[B, L, A]` decoder logits.
    pub logits: NodeId,
    /// `[B, latent]` encoder output.
    pub latent: NodeId,
}

/// Records the forward pass for a `[B, L, A]` one-hot batch on `tape`.
pub(crate) fn forward(cfg: &ModelConfig, params: &ParamSet, tape: &mut Tape, input: Tensor) -> Result<Forward> {
    let batch = input.shape()[0];
    let mut cursor = 0usize;
    let mut next = |tape: &mut Tape| {
        let id = tape.param(cursor, params.get(cursor).clone());
        cursor += 1;
        id
    };
    let mut x = tape.constant(input);
    let mut latent = None;
    let latent_index = cfg.latent_layer();
    for (i, layer) in cfg.layers().iter().enumerate() {
        match *layer {
            LayerSpec::Conv1dSame { .. } => {
                let (k, b) = (next(tape), next(tape));
                x = tape.conv1d(x, k, b)?;
            }
            LayerSpec::ResidualBottleneck { filters, .. } => {
                let cin = *tape.value(x).shape().last().unwrap();
                let mut h = tape.relu(x)?;
                for _ in 0..2 {
                    let (k, b) = (next(tape), next(tape));
                    h = tape.conv1d(h, k, b)?;
                    h = tape.relu(h)?;
                }
                let (k, b) = (next(tape), next(tape));
                h = tape.conv1d(h, k, b)?;
                let shortcut = if cin != filters {
                    let (k, b) = (next(tape), next(tape));
                    tape.conv1d(x, k, b)?
                } else {
                    x
                };
                x = tape.add(shortcut, h)?;
            }
            LayerSpec::Flatten => {
                let n = tape.value(x).len() / batch;
                x = tape.reshape(x, vec![batch, n])?;
            }
            LayerSpec::Dense { .. } => {
                let (w, b) = (next(tape), next(tape));
                x = tape.dense(x, w, b)?;
                if i == latent_index {
                    latent = Some(x);
                }
            }
            LayerSpec::Reshape { ref shape } => {
                let mut full = vec![batch];
                full.extend_from_slice(shape);
                x = tape.reshape(x, full)?;
            }
        }
    }
    let logits = tape.reshape(x, vec![batch, cfg.max_len, cfg.alphabet_size])?;
    Ok(Forward {
        logits,
        latent: latent.expect("layer list always contains the latent dense layer"),
    })
}

/// One-hot `[B, L, A]` batch from fixed-width index rows.
pub(crate) fn one_hot(rows: &[&[usize]], max_len: usize, classes: usize) -> Tensor {
    let mut data = vec![0.0f32; rows.len() * max_len * classes];
    for (b, row) in rows.iter().enumerate() {
        for (p, &s) in row.iter().enumerate() {
            data[(b * max_len + p) * classes + s] = 1.0;
        }
    }
    Tensor::new(vec![rows.len(), max_len, classes], data).expect("shape and data agree")
}
