//! Deterministic neural-network building blocks with hand-written backward
//! passes: convolution, pooling, dense, LSTM, dropout, softmax and
//! cross-entropy, plus Adam and a finite-difference gradient checker.

mod activation;
mod conv;
mod dense;
mod gradcheck;
pub mod init;
mod lstm;
mod params;
mod pool;
mod tensor;

#[cfg(test)]
mod tests;

use thiserror::Error;

pub use activation::{
    categorical_cross_entropy, cross_entropy_backward, dropout, dropout_backward, one_hot,
    softmax, softmax_backward, softmax_ce_grad, Mode,
};
pub use conv::{add_channel_bias, channel_bias_grad, conv2d, conv2d_backward, relu, relu_backward};
pub use dense::{dense, dense_backward};
pub use gradcheck::{grad_check, relative_error, FULL_CHECK_LIMIT};
pub use lstm::{forget_biased, lstm_backward, lstm_sequence, LstmCache, LstmGrads, LstmLayer};
pub use params::{AdamConfig, Param, ParamSet, DFNN_MAGIC, DFNN_VERSION};
pub use pool::{avg_pool, global_avg_pool, global_avg_pool_backward, maxpool2, maxpool2_backward};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("max pooling needs even dimensions, got {0}x{1}")]
    OddDimension(usize, usize),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("bad parameter file: {0}")]
    Format(String),
    #[error("i/o error on {0}: {1}")]
    Io(String, #[source] std::io::Error),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;
