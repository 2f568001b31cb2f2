//! Dense differentiable building blocks with hand-derived backward passes.
//!
//! Every layer follows the same contract: `forward` returns the output and
//! whatever must be remembered, `backward` takes the upstream gradient and
//! the remembered activations, accumulates parameter gradients into the
//! [`ParamStore`] (unless the store is frozen) and returns the input gradient.

mod adam;
mod checkpoint;
mod gradcheck;
mod layers;
mod params;

pub use adam::{adam_step, OptimConfig};
pub use checkpoint::{load_params, read_params, save_params, write_params, CheckpointError};
pub use gradcheck::{check_gradients, check_input_gradient, BlockReport, GradCheckOptions, GradCheckReport};
pub use layers::{softmax_backward, softmax_rows, Activation, Init, Linear, Mlp, MlpTrace};
pub use params::{Param, ParamId, ParamStore};

use thiserror::Error;

/// Shape contract violations raised by layer forward/backward calls.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShapeError {
    #[error("{op}: expected {expected}, got {got}")]
    Mismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
}

impl ShapeError {
    pub(crate) fn mismatch(op: &'static str, expected: (usize, usize), got: (usize, usize)) -> Self {
        ShapeError::Mismatch {
            op,
            expected: format!("{}x{}", expected.0, expected.1),
            got: format!("{}x{}", got.0, got.1),
        }
    }
}
