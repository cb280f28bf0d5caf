//! Temporal feature fusion with an LSTM autoencoder.
//!
//! A single peephole LSTM layer reads each company's standardized ratio rows.
//! A dense head maps every hidden state to a scalar `z`, and an affine decoder
//! maps `z` back to the ratio row. Training minimizes reconstruction MSE with
//! Adam, and the trained encoder turns every company into a 1-D latent series.

mod adam;
mod backward;
mod cell;
mod params;
mod train;

use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use backward::{backward_into, backward_sequence, mse_grad, mse_loss};
pub use cell::{forward_sequence, lstm_step, LstmState, SequenceOutput, StepCache};
pub use params::{LstmParams, BLOCK, FORGET, INPUT, OUTPUT};
pub use train::{encode, encode_series, train, train_series, Checkpoint, LatentSeries, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum LstmError {
    #[error("non-finite value at time step {step}")]
    NonFiniteStep { step: usize },
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Table(#[from] crate::table::TableError),
}
