//! Dense ReLU networks for 10-output count regression, trained with
//! hand-written backpropagation.

mod config;
mod model;
mod optim;
mod train;

pub use config::{LrSchedule, MlpConfig, OptimizerKind, EMBEDDING_CATEGORIES};
pub use model::{
    embed, mse_loss, Dense, ForwardCache, Gradients, MlpCheckpoint, MlpModel, Normalization,
    TensorRecord,
};
pub use optim::{adam_step, sgd_step, AdamState};
pub use train::{predict_nn, train, LossHistory, LOSS_CSV_HEADER};
