//! Small deterministic training substrate: dense networks, losses, Adam,
//! a step-scheduled training loop with early stopping, and PCA.

pub mod adam;
pub mod dense;
pub mod loss;
pub mod pca;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dense::{Activation, DenseLayout, DenseNet, DenseRef, LayerShape, Workspace};
pub use loss::{log_softmax, logsumexp, softmax_cross_entropy};
pub use pca::{pca_fit, pca_fit_with, pca_transform, PcaConfig, PcaModel};
pub use train::{train, EarlyStopping, Objective, StepSchedule, TrainConfig, TrainReport};
