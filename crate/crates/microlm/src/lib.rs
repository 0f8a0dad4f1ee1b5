//! Miniature tokenizer and decoder-only transformer language model with
//! hand-written reverse-mode differentiation.
//!
//! The model is deliberately small (default 512-token vocab, 64-dim, 2
//! layers) so that exact losses, greedy decoding, and gradients with
//! respect to one-hot token inputs are cheap enough for minutes-scale
//! discrete optimization on a desktop CPU. Parameters are immutable after
//! load or training; forward, loss, and gradient calls are pure and may
//! run concurrently on shared parameters.
//!
//! Precision is generic: run gradient checks in `f64`, optimization in
//! `f32` (see [`Scalar`]).

mod checkpoint;
mod decode;
mod error;
mod grad;
mod loss;
mod model;
mod scalar;
mod tokenizer;
mod train;
mod vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use decode::greedy_decode;
pub use error::Error;
pub use grad::{grad_wrt_onehot, sum_grad_slices, GradSlice};
pub use loss::{loss_ce, loss_cw, softmax_probs, span_loss, LossKind};
pub use model::{KvCache, LayerParams, LogitMatrix, ModelConfig, ModelParams};
pub use grad::forward_tape;
pub use scalar::Scalar;
pub use tokenizer::TokenSeq;
pub use train::{train_lm, TrainReport};
pub use vocab::{TokenId, Vocab, BOS_ID, EOS_ID, PAD_ID};

pub type Result<T> = std::result::Result<T, Error>;
