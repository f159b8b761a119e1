//! Deterministic training: a stage-wise schedule, binary checkpoints that capture the
//! full optimiser and shuffling state, and a per-epoch CSV metric log.
//!
//! Phase A fits stage 1 to landmarks alone. Phase B runs the whole cascade and the
//! emotion head under the mode's loss weights, with early stopping on the
//! validation total.

mod checkpoint;
mod config;
mod log;
mod trainer;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, RngState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{Mode, Phase, TrainConfig};
pub use log::{LogRow, Split, LOG_HEADER};
pub use trainer::{
    train, train_observed, train_samples, TrainOutcome, BEST_CHECKPOINT, LAST_CHECKPOINT,
};
