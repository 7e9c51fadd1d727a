//! Learning energy-based observation models for factor-graph estimators
//! with a non-differentiable Gauss-Newton optimizer in the loop.
//!
//! The crate is organised bottom-up:
//!
//! - [`manifold`]: SE(2) poses, exponential chart, Jacobians.
//! - [`graph`]: factor graphs, energy, sparse Gauss-Newton, Laplace sampling.
//! - [`models`]: log-std covariance parameters and `∂E/∂θ`.
//! - [`leo`]: the contrastive sample-based trainer.
//! - [`baselines`]: Nelder-Mead on tracking loss, residual-moment surrogate, perceptron.
//! - [`navsim`]: synthetic SE(2) navigation datasets.
//! - [`toy1d`]: the scalar regression task with a small MLP energy.
//! - [`hmc`]: Hamiltonian Monte Carlo reference sampler.

pub mod baselines;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod hmc;
pub mod leo;
pub mod manifold;
pub mod models;
pub mod navsim;
pub mod optim;
pub mod seed;
pub mod toy1d;
pub mod trainlog;

pub use error::{LeoError, Result};
