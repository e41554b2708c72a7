use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Small,
    Medium,
    Large,
    Desk,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(Preset::Small),
            "medium" => Ok(Preset::Medium),
            "large" => Ok(Preset::Large),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::invalid(format!("unknown preset {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
}

/// One row of an architecture table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    Conv1dSame {
        filters: usize,
        kernel: usize,
        stride: usize,
        activation: Activation,
    },
    /// Three convolutions `outer → kernel → outer` around a half-width
    /// bottleneck, with a ReLU before each and an identity (or 1-wide
    /// projection) shortcut.
    ResidualBottleneck {
        filters: usize,
        kernel: usize,
        outer_kernel: usize,
    },
    Flatten,
    Dense {
        units: usize,
        activation: Activation,
    },
    Reshape {
        shape: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub preset: Preset,
    pub max_len: usize,
    /// Output classes: content symbols plus mask and pad.
    pub alphabet_size: usize,
    pub stem_kernel: usize,
    pub stem_filters: usize,
    pub blocks: usize,
    pub block_filters: usize,
    pub block_kernel: usize,
    pub block_outer_kernel: usize,
    pub latent_dim: usize,
    /// Channel count of the decoder input after the latent expansion.
    pub decoder_width: usize,
}

impl ModelConfig {
    pub fn preset(preset: Preset, max_len: usize, alphabet_size: usize) -> Self {
        let base = Self {
            preset,
            max_len,
            alphabet_size,
            stem_kernel: 3,
            stem_filters: 128,
            blocks: 6,
            block_filters: 128,
            block_kernel: 3,
            block_outer_kernel: 1,
            latent_dim: 128,
            decoder_width: 128,
        };
        match preset {
            Preset::Small => base,
            Preset::Medium => Self {
                stem_kernel: 5,
                block_kernel: 5,
                block_outer_kernel: 3,
                latent_dim: 80,
                ..base
            },
            Preset::Large => Self {
                stem_kernel: 5,
                blocks: 8,
                block_filters: 200,
                block_kernel: 5,
                block_outer_kernel: 3,
                latent_dim: 80,
                ..base
            },
            Preset::Desk => Self {
                stem_filters: 32,
                blocks: 2,
                block_filters: 32,
                latent_dim: 32,
                decoder_width: 32,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let extents = [
            self.max_len,
            self.alphabet_size,
            self.stem_kernel,
            self.stem_filters,
            self.block_filters,
            self.block_kernel,
            self.block_outer_kernel,
            self.latent_dim,
            self.decoder_width,
        ];
        if extents.contains(&0) {
            return Err(Error::invalid(format!("model extents must be positive: {self:?}")));
        }
        for k in [self.stem_kernel, self.block_kernel, self.block_outer_kernel] {
            if k % 2 == 0 {
                return Err(Error::invalid(format!("kernel width {k} must be odd")));
            }
        }
        if self.alphabet_size < 3 {
            return Err(Error::invalid("alphabet needs at least one content symbol plus mask and pad"));
        }
        Ok(())
    }

    /// Index in [`ModelConfig::layers`] of the latent dense layer.
    pub fn latent_layer(&self) -> usize {
        self.blocks + 2
    }

    /// Encoder stem, residual stacks, latent junction and output head, in
    /// forward order.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let block = LayerSpec::ResidualBottleneck {
            filters: self.block_filters,
            kernel: self.block_kernel,
            outer_kernel: self.block_outer_kernel,
        };
        let mut layers = vec![LayerSpec::Conv1dSame {
            filters: self.stem_filters,
            kernel: self.stem_kernel,
            stride: 1,
            activation: Activation::Linear,
        }];
        layers.extend(std::iter::repeat_n(block.clone(), self.blocks));
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::Dense {
            units: self.latent_dim,
            activation: Activation::Linear,
        });
        layers.push(LayerSpec::Dense {
            units: self.max_len * self.decoder_width,
            activation: Activation::Linear,
        });
        layers.push(LayerSpec::Reshape {
            shape: vec![self.max_len, self.decoder_width],
        });
        layers.extend(std::iter::repeat_n(block, self.blocks));
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::Dense {
            units: self.max_len * self.alphabet_size,
            activation: Activation::Linear,
        });
        layers
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the latent MMD term.
    pub alpha: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub label_smoothing: f64,
    pub seed: u64,
    /// Optimizer steps per epoch; `None` means one pass over the corpus
    /// observations in expectation.
    pub steps_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            batch_size: 256,
            learning_rate: 1e-4,
            epochs: 5,
            label_smoothing: 0.05,
            seed: 0,
            steps_per_epoch: None,
        }
    }
}

impl TrainConfig {
    /// Defaults per preset. The desk preset trains on a much smaller corpus
    /// for a few epochs, so it uses a larger learning rate.
    pub fn for_preset(preset: Preset) -> Self {
        let (epochs, learning_rate) = match preset {
            Preset::Small => (10, 1e-4),
            Preset::Medium | Preset::Large => (5, 1e-4),
            Preset::Desk => (3, 1e-3),
        };
        Self {
            epochs,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::invalid(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::invalid(format!(
                "label smoothing must lie in [0, 1), got {}",
                self.label_smoothing
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("batch size and epochs must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}
