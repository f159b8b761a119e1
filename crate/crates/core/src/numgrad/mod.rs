//! Minimal reverse-mode differentiation.
//!
//! A [`Graph`] records every operation eagerly as it executes; [`Graph::backward`] then
//! walks the record once in reverse. All arithmetic is `f64`.

mod adam;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{Adam, AdamMoments};
pub use gradcheck::{grad_check, grad_check_coords, relative_error};
pub use graph::{log_softmax_ce, softmax, Graph, Var};
pub use tensor::Tensor;
