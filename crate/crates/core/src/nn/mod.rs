//! Dense feed-forward networks trained by backpropagation.

mod autoencoder;
mod fcnn;
mod layer;
mod network;
mod optim;
mod persist;

pub use autoencoder::{corrupt, train_autoencoder, Autoencoder, AutoencoderSpec, EpochLossTrace};
pub use fcnn::{argmax, train_fcnn, FcnnClassifier};
pub use layer::{softmax, softmax_in_place, Activation, DenseLayer};
pub use network::{Gradients, Network, OutputGrad};
pub use optim::{Optimizer, OptimizerKind, TrainConfig};
pub use persist::NN_MAGIC;

pub(crate) use autoencoder::train_valid_split;

use crate::error::{check_len, Result};

/// Mean of squared coordinate differences.
pub fn mse_loss(reconstruction: &[f64], target: &[f64]) -> Result<f64> {
    check_len(target.len(), reconstruction.len())?;
    if target.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = reconstruction.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / target.len() as f64)
}
