//! Optimization, loss heads, checkpoints, and the protocol stages.

mod adam;
mod checkpoint;
mod loss;
mod stages;

pub use adam::{AdamState, BETA1, BETA2, EPS_ADAM};
pub use checkpoint::{Checkpoint, Stage};
pub use loss::{ce_loss_block, kl_loss_aux, mse_loss_public};
pub use stages::{
    distill_aux, distill_task, forward_all, poison_teacher, train_base_joint,
    train_teacher_aux, Examples, ProtocolConfig, StageHyper,
};
pub(crate) use stages::batch_mean_grad;

use thiserror::Error;

use crate::data::DataError;

#[derive(Error, Debug)]
pub enum TrainError {
    #[error("expected a {expected:?} checkpoint, got {got:?}")]
    WrongStage {
        expected: Stage,
        got: Stage,
    },
    #[error("model layout is missing the {0} block")]
    MissingBlock(&'static str),
    #[error("teacher and student logit layouts differ")]
    LayoutMismatch,
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
    #[error("non-finite gradient at optimizer step {step}")]
    NonFiniteGradient { step: u64 },
    #[error("invalid stage hyperparameters: {0}")]
    BadHyper(String),
    #[error("empty {0} set")]
    EmptySet(&'static str),
    #[error("parameter count {got} does not match the model ({want})")]
    ParamMismatch { got: usize, want: usize },
    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
