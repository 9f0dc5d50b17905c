//! From-scratch recurrent classifiers in double precision.
//!
//! Layers operate on whole batches (`[batch, ...]` row-major tensors) and
//! keep the activations of the last training pass for backprop. Matrix
//! products go through `matrixmultiply`, convolutions through im2col.

mod checkpoint;
mod gradcheck;
mod layers;
mod model;
mod optim;
mod recurrent;
mod spec;
pub mod tensor;
mod train;

pub use checkpoint::{Checkpoint, CheckpointMeta, NamedTensor, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, GradCheckReport, KindCheck, GRAD_FLOOR};
pub use layers::{Activation, BatchNorm, Ctx, Dense, Dropout, Layer, Mode, Param, Reshape, LEAKY_SLOPE};
pub use model::{bce_loss, windows_to_tensor, Model, DEFAULT_THRESHOLD, PROB_CLAMP};
pub use optim::{Adam, AdamConfig};
pub use recurrent::{Frame, Recurrent};
pub use spec::{ArchFamily, Hyperparams, LayerSpec, NetworkSpec, BN_EPSILON, BN_MOMENTUM, CONV_FRAMES, INIT_STD};
pub use tensor::Tensor;
pub use train::{
    predict_dataset, predict_matrix, train, train_hyper, train_with, Matrix, TrainConfig, TrainHistory, Trained,
};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("backward called without a matching training forward pass ({0})")]
    StaleCache(&'static str),
    #[error("dropout in training mode needs a random stream")]
    MissingRng,
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("bad magic: not an OGCK1 checkpoint")]
    BadMagic,
    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
