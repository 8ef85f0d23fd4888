//! Small trainable-network kernel: dense stacks, LSTM stacks, losses and
//! RMSProp, all in `f64` with hand-written reverse-mode gradients.
//!
//! Gradients are carried in a value of the same type as the parameters they
//! belong to (see [`Parameters::zeros_like`]), so shapes line up by
//! construction and the optimizer can walk both in lockstep.

mod dense;
mod gradcheck;
mod loss;
mod lstm;
mod matrix;
mod optim;

pub use dense::{Activation, DenseCache, DenseLayer, DenseStack};
pub use gradcheck::{grad_check, gradient_suite, relative_error, GradientReport, GRAD_CHECK_STEP};
pub use loss::{bce_with_logits, log_softmax, mse_loss, sigmoid, softmax, softmax_xent, PROB_FLOOR};
pub use lstm::{Direction, LstmCache, LstmCell, LstmStack};
pub use matrix::{dot, Matrix};
pub use optim::{RmsProp, RmsPropConfig};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("width mismatch: expected {expected}, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },
    #[error("cache does not belong to this network: {0}")]
    StaleCache(&'static str),
    #[error("empty input sequence")]
    EmptySequence,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("target class {target} out of range for {classes} classes")]
    BadTarget { target: usize, classes: usize },
    #[error("need at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("parameter shapes do not match optimizer state")]
    ShapeMismatch,
}

/// A bag of learnable arrays that can be walked in a fixed order.
pub trait Parameters {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;
    /// Same shapes, all zeros. Used as the gradient accumulator.
    fn zeros_like(&self) -> Self
    where
        Self: Sized;

    fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn scale(&mut self, factor: f64) {
        for s in self.param_slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// `self += factor * other`; shapes must match.
    fn add_scaled(&mut self, other: &Self, factor: f64) -> Result<(), NnError>
    where
        Self: Sized,
    {
        let theirs = other.param_slices();
        let mut ours = self.param_slices_mut();
        if ours.len() != theirs.len() || ours.iter().zip(&theirs).any(|(a, b)| a.len() != b.len()) {
            return Err(NnError::ShapeMismatch);
        }
        for (a, b) in ours.iter_mut().zip(theirs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += factor * y;
            }
        }
        Ok(())
    }

    /// Flattened copy of every parameter, in walk order.
    fn flatten(&self) -> Vec<f64> {
        self.param_slices().concat()
    }
}

/// A plain vector is a single parameter array. Handy for checking gradients
/// with respect to network inputs or loss arguments.
impl Parameters for Vec<f64> {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }

    fn zeros_like(&self) -> Self {
        vec![0.0; self.len()]
    }
}
