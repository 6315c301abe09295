//! Lyapunov-exponent analysis of gradient-descent training.
//!
//! Full-batch gradient descent on a small network is treated as a discrete
//! dynamical system over the flattened parameter vector. The crate provides:
//!
//! - [`mlp`]: a one-hidden-layer dense network with MSE loss, exact
//!   gradients and the plain gradient-descent update.
//! - [`dynamics`]: trajectories from training runs, RK4 integration of the
//!   gradient flow, and reference systems (2-D linear ODE, Lorenz).
//! - [`lyapunov`]: the multi-neighbour largest-Lyapunov-exponent estimator
//!   plus a two-trajectory renormalisation oracle.
//! - [`experiments`]: learning-rate sweeps, activation comparison and
//!   initial-weight selection.
//! - [`config`] and [`report`]: key=value configuration and CSV/JSON output.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod lyapunov;
pub mod mlp;
pub mod report;
pub mod stats;
pub mod validation;

pub use dynamics::{LinearSystem2D, LorenzParams, StepMap, Trajectory, VectorField};
pub use error::{Error, Result};
pub use experiments::{ExperimentConfig, IqrBounds};
pub use lyapunov::{EstimatorConfig, LogBase, LyapunovEstimate};
pub use mlp::{ActivationKind, Dataset, NetworkConfig, ParameterVector};
