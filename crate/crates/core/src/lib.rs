//! Stock price forecasting with a conditioned GRU generator trained
//! adversarially against a convolutional critic (DRAGAN penalty plus
//! feature matching), with WGAN-GP, basic GAN and bidirectional LSTM
//! baselines.

// `!(x >= 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversarial;
pub mod cli;
pub mod eval_report;
pub mod indicators;
pub mod market_data;
pub mod neural;
pub mod pipeline;
pub mod synthetic;
pub mod windowing;
