//! Rare-event probability estimation with learned dangerous sets.
//!
//! The pipeline learns the dangerous set with a small ReLU classifier,
//! extracts its dominating points by sequential mixed-integer quadratic
//! optimisation, and estimates the event probability by importance sampling
//! from a Gaussian mixture centred on those points.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod cli;
pub mod domset;
pub mod error;
pub mod estimators;
pub mod hull;
pub mod nature;
pub mod par;
pub mod problems;
pub mod qp;
pub mod relunet;
pub mod rng;

pub use error::{Error, Result};
pub use nature::{required_sample_size, GaussianNature};
pub use relunet::{LabeledDataset, ReluNet, TrainConfig};
pub use rng::RngStream;
