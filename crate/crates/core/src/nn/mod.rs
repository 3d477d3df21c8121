//! Minimal neural-network kernels: tensors, the layer set of the tactile
//! classifier with forward and backward passes, cross-entropy and Adam.

mod adam;
mod float;
mod layers;
mod loss;
mod tensor;

use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use float::{gemm, Float};
pub use layers::{
    softmax, BatchNorm, Conv2d, Ctx, Dense, Dropout, Layer, LayerCost, LayerKind, LayerSpec, Mode,
    Param, Pool, PoolKind, Relu, ResidualBlock, Sequential, BN_EPS, BN_MOMENTUM,
};
pub use loss::cross_entropy;
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid layer configuration: {0}")]
    Config(String),
    #[error("{0} backward called without a cached training-mode forward pass")]
    MissingCache(&'static str),
    #[error("batch normalization needs at least 2 samples in training mode, got {0}")]
    BatchTooSmall(usize),
    #[error("label {label} outside 0..{classes}")]
    Label { label: usize, classes: usize },
}
