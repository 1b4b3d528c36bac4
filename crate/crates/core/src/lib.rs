//! Sparse convolutional network training with the relaxed variable splitting
//! method (RVSM) under l0, l1 and transformed-l1 penalties.
//!
//! The crate is organised around the pieces of an experiment:
//!
//! * [`prox`] – penalty values and closed-form thresholding operators, plus a
//!   brute-force grid oracle used to verify them.
//! * [`tensor`] and [`nn`] – a small dense-tensor CNN with exact
//!   backpropagation and plain SGD.
//! * [`rvsm`] – the splitting optimizer, Lagrangian tracking, equilibrium
//!   residuals and the direct penalized-SGD baseline.
//! * [`curvegen`] – deterministic generator of normal vs. shaky planar curves.
//! * [`metrics`] – sparsity, scale buckets, sign changes, histograms, accuracy.
//! * [`cli`] – the `rvsm` command line (generate / train / eval / report).

pub mod cli;
pub mod curvegen;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod prox;
pub mod rvsm;
pub mod seed;
pub mod tensor;

pub use dataset::{Dataset, Example};
pub use error::{Error, Result};
pub use nn::{Network, NetworkConfig, ParamSet};
pub use prox::{Penalty, PenaltySpec, ThresholdContext};
pub use rvsm::{RvsmConfig, RvsmState};
pub use tensor::Tensor;
