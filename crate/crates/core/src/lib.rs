//! Cascaded facial landmark alignment with a jointly trained emotion head.
//!
//! The crate is organised bottom-up:
//!
//! - [`numgrad`]: a small reverse-mode differentiation engine with the exact layer set
//!   the cascade needs, plus finite-difference gradient checking.
//! - [`geometry`]: 68-point shapes, similarity transforms, bilinear warps, landmark
//!   heatmaps and the inter-pupil normalised landmark error.
//! - [`dataset`]: emotion label scales, the on-disk dataset format and a deterministic
//!   synthetic face generator.
//! - [`model`]: the two-stage network and its joint landmark/emotion loss.
//! - [`train`]: the deterministic training loop and binary checkpoints.
//! - [`evalcli`]: evaluation reports, report comparison, the gradient-check suite and
//!   the command-line front end.

pub mod config;
pub mod dataset;
pub mod error;
pub mod evalcli;
pub mod geometry;
pub mod model;
pub mod numgrad;
pub mod train;

pub use error::{Error, Result};
