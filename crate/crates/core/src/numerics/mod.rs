//! Deterministic tensor kernels, reverse-mode differentiation, and Adam.

mod adam;
mod ops;
mod tape;
mod tensor;

pub use adam::{adam_step, OptimizerState, ParamSet};
pub use ops::{
    conv1d_same, dense, median_bandwidth, mmd_sq, smoothed_cross_entropy, softmax_rows, CrossEntropy,
    PROB_FLOOR,
};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::{Real, Tensor};
