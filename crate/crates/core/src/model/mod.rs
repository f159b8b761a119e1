//! The cascaded landmark network with an emotion head.
//!
//! Stage 1 regresses landmark offsets from the raw image relative to the canonical
//! shape. Every later stage first aligns the previous estimate to the canonical shape
//! with a least-squares similarity transform, warps the image into that frame, adds a
//! heatmap of the aligned estimate as a second input channel, and regresses a further
//! correction, which is mapped back to the image frame. The emotion head reads the
//! final stage's fully connected features.

mod config;
mod forward;
mod loss;
mod params;

pub use config::ModelConfig;
pub(crate) use forward::{argmax, predict_many};
pub use forward::{
    forward, forward_batch, predict, BatchForward, ForwardOutput, Prediction, StageBridge,
};
pub use loss::{batch_loss, joint_loss, BatchLoss, LossBreakdown, LossWeights};
pub use params::{init_params, ModelParams, PARAMS_VERSION};
