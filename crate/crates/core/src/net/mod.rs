//! Early preamble-collision classifier.
//!
//! A small 1D CNN reads the per-antenna correlation magnitudes of one ZCZ
//! (antennas as input channels, lags as positions) and outputs a probability
//! vector over collision classes `0..=K`, where class `K` means "K or more
//! users". Everything, including the convolution kernels and Adam, is
//! implemented here without an autodiff framework.

pub mod adam;
pub mod cnn;
pub mod dataset;
pub mod eval;
pub mod io;
pub mod layers;
pub mod mlp;
pub mod train;

use thiserror::Error;

use crate::prach::{CorrelationWindow, SignalError};

pub use cnn::{ClassifierArch, CollisionNet};
pub use dataset::{gen_dataset, split_stratified, DatasetSpec, LabeledWindow};
pub use eval::{evaluate, evaluate_by_snr, ConfusionMatrix, EvalReport};
pub use mlp::BaselineMlp;
pub use train::{grad_check, train, train_classifier, GradCheckReport, TrainConfig};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("input is {got_ant}x{got_cs}, classifier expects {n_ant}x{n_cs}")]
    InputShape {
        got_ant: usize,
        got_cs: usize,
        n_ant: usize,
        n_cs: usize,
    },
    #[error("label {label} outside 0..={k_max}")]
    Label { label: usize, k_max: usize },
    #[error("K must be at least 1, got {0}")]
    KMax(usize),
    #[error("invalid architecture: {0}")]
    Arch(String),
    #[error("invalid training configuration: {0}")]
    TrainConfig(String),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("class mismatch: model has {model} classes, data has {data}")]
    ClassMismatch { model: usize, data: usize },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NetError>;

/// A trainable classifier over correlation windows with a flat parameter
/// vector.
pub trait Classifier {
    /// `(n_ant, n_cs)` of accepted windows.
    fn input_shape(&self) -> (usize, usize);
    fn n_classes(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    /// Class probabilities for a row-major `n_ant x n_cs` input whose shape
    /// has already been checked.
    fn probabilities(&self, x: &[f64]) -> Vec<f64>;

    /// Cross-entropy loss of one sample; adds its parameter gradient to `grad`.
    fn backprop(&self, x: &[f64], label: usize, grad: &mut [f64]) -> f64;

    /// Sign pattern of every hidden ReLU, used to spot kinks during
    /// finite-difference checks.
    fn relu_pattern(&self, x: &[f64]) -> Vec<bool>;

    fn check_window(&self, w: &CorrelationWindow) -> Result<()> {
        let (n_ant, n_cs) = self.input_shape();
        if w.n_ant() != n_ant || w.n_cs() != n_cs {
            return Err(NetError::InputShape {
                got_ant: w.n_ant(),
                got_cs: w.n_cs(),
                n_ant,
                n_cs,
            });
        }
        Ok(())
    }

    fn forward(&self, w: &CorrelationWindow) -> Result<Vec<f64>> {
        self.check_window(w)?;
        Ok(self.probabilities(w.values()))
    }

    /// Most likely class; ties go to the lower class index.
    fn predict(&self, w: &CorrelationWindow) -> Result<usize> {
        Ok(layers::argmax(&self.forward(w)?))
    }

    fn param_count(&self) -> usize {
        self.params().len()
    }
}
