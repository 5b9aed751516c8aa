//! Partial AUC maximization through distributionally robust optimization.
//!
//! The crate provides exact one-way and two-way partial AUC estimators,
//! CVaR- and KL-based robust pairwise objectives with analytic gradients,
//! score models with manual backprop, the stochastic optimizers that train
//! them, and brute-force oracles used to verify all of the above.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`, which is what the CLI and the
//! verification suite use.

// `!(x > 0.0)` style guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod data;
pub mod error;
pub mod experiments;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod oracle;
pub mod scalar;

pub use error::{PaucError, Result};
pub use scalar::Scalar;

pub type ScoreModelF64 = model::ScoreModel<f64>;
pub type ScoreModelF32 = model::ScoreModel<f32>;
pub type DatasetF64 = data::LabeledDataset<f64>;
pub type DatasetF32 = data::LabeledDataset<f32>;
pub type ScoreSetF64 = metrics::ScoreSet<f64>;
pub type PairwiseLossF64 = losses::PairwiseLoss<f64>;
pub type OptimizerStateF64 = optim::OptimizerState<f64>;
pub type StepHyperF64 = optim::StepHyper<f64>;
