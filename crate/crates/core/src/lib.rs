//! Factored Gauss-Newton Hessians for fully connected ReLU classifiers,
//! spectral-norm bounds on them, and the machinery for measuring how the
//! empirical loss landscape settles as the sample size grows.
//!
//! The crate is `no_std` (with `alloc`). File formats, the command line and
//! the oracle suite live in the `landscape` companion crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod fd;
pub mod hessian;
pub mod landscape;
pub mod linalg;
mod math;
pub mod nn;
pub mod train;

pub use data::Dataset;
pub use error::{Error, Result};
pub use hessian::{BoundConstants, FactoredGaussNewton, JacobianChain, LogitHessian};
pub use landscape::{ConvergenceCurve, LossLedger, TaylorReport};
pub use linalg::Matrix;
pub use nn::{ForwardTrace, MlpConfig, MlpParams};
pub use train::{TrainConfig, TrainReport};
