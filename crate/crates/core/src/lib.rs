//! Dual-space GAN training.
//!
//! An autoencoder maps data into a low-dimensional latent space, a GAN is
//! trained on the (standardized) latent codes, and generated codes are decoded
//! back into data space. The same GAN trainer also runs directly on raw data,
//! which gives the baseline every dual-space run is compared against.
//!
//! Layout:
//!
//! - [`autodiff`]: define-by-run reverse-mode tape over dense `f64` tensors,
//!   plus [`gradcheck`] for finite-difference verification.
//! - [`nn`]: MLP layers, Glorot init, Adam/SGD, parameter files.
//! - [`data`]: Gaussian ring, rasterized shapes, IDX ingestion, hold-out
//!   masks, standardization and the masked batch iterator.
//! - [`autoencoder`], [`gan`]: the two trainers.
//! - [`pipeline`]: the two experiment arms, FLOP accounting and comparison.
//! - [`eval`]: mode coverage, held-out recall, RBF MMD.
//! - [`cli`]: config parsing and the `gen-data` / `run` / `report` commands.

pub mod autodiff;
pub mod autoencoder;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod gan;
pub mod gradcheck;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod tensor;

pub use autodiff::{Gradients, ParamSet, Tape, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
