//! A minimal dense-tensor network engine: a fixed layer set with verified
//! gradients, SGD/Adam, and a deterministic training loop. Enough to express
//! the transfer network, the audio classifier, and the autoencoder.

mod gradcheck;
mod layer;
mod model;
mod optim;
mod train;

pub use gradcheck::{finite_diff_check, ScalarLoss, SquaredErrorLoss, WeightedSumLoss};
pub use layer::{LayerSpec, ParamGrads};
pub use model::{ForwardCache, Mode, Model};
pub use optim::{optimizer_step, AdamMoments, OptState, OptimKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use train::{argmax, evaluate, train, EpochStats, LossKind, Sample, Target, TrainConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("layer {layer}: expected input shape {expected:?}, got {actual:?}")]
    ShapeMismatch {
        layer: usize,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("layer {layer}: {detail}")]
    BadSpec { layer: usize, detail: String },
    #[error("forward cache does not match this model")]
    StaleCache,
    #[error("non-finite gradient in parameter {param}; step refused")]
    NonFiniteGradient { param: usize },
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("sample {index} has label {label} outside 0..{n_classes}")]
    BadLabel {
        index: usize,
        label: usize,
        n_classes: usize,
    },
    #[error("cross-entropy training requires a trailing softmax layer")]
    MissingSoftmax,
    #[error("target mismatch: {detail}")]
    TargetMismatch { detail: String },
    #[error("model file {path}: {detail}")]
    ModelFile { path: String, detail: String },
}
