//! A small deterministic CPU convolutional network: convolution, max-pool,
//! ReLU, fully-connected and dropout layers trained with momentum SGD.

mod checkpoint;
mod config;
mod gradcheck;
mod loss;
mod network;
mod optim;
mod train;

pub use checkpoint::{ModelCheckpoint, TrainingMeta, FORMAT_VERSION, MAGIC};
pub use config::{LayerSpec, NetworkConfig, Shape};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport, REL_ERROR_FLOOR};
pub use loss::{
    add_regularizer_grad, compute_loss, log_softmax, one_hot, regularization, sigmoid, sigmoid_ce_loss,
    softmax_nll_loss, softmax_probs, LossConfig, LossKind, LossOutput, Targets,
};
pub use network::{LayerParams, Matrix, Mode, Network, Parameters, Scalar, Trace};
pub use optim::{sgd_step, TrainConfig};
pub use train::{accuracy, train, train_from, Example};
