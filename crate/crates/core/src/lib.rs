//! Feedforward neural networks as dynamic-system models.
//!
//! A network `F(·; Θ)` is wrapped as a difference equation
//! `y[k] = F(y[k-1], …, y[k-ny], u[k-τd], …, u[k-nu]; Θ)` and trained with a
//! Levenberg-Marquardt solver either on one-step-ahead prediction errors
//! (series-parallel, NARX) or on free-run simulation errors (parallel, NOE).
//! The parallel Jacobian is obtained with a dynamic-backpropagation style
//! recursion over time, optionally extended with the initial conditions.
//!
//! Module map:
//!
//! - [`net`]: forward pass, backward pass and output Jacobians of a fully
//!   connected network.
//! - [`dynmodel`]: regressors, one-step prediction, free-run simulation and the
//!   series-parallel / parallel residual Jacobians.
//! - [`lmsolver`]: the Levenberg-Marquardt iteration.
//! - [`training`]: residual providers that glue models to the solver.
//! - [`signals`]: benchmark system, excitation and (colored) noise generation.
//! - [`metrics`]: error metrics, robust summaries and the flop-count predictor.
//! - [`rng`]: seed derivation for reproducible experiment streams.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynmodel;
pub mod error;
pub mod lmsolver;
pub mod metrics;
pub mod net;
pub mod rng;
pub mod signals;
pub mod training;

pub use dynmodel::{Dataset, DynamicModel, ExtendedParameters, ModelOrders, Scaling};
pub use error::{Error, Result};
pub use lmsolver::{LmConfig, LmState, ScheduleMode};
pub use net::{Activation, FeedforwardNet, InitScale, LayerSpec, NetStructure};
pub use training::TrainingMethod;

pub use nalgebra::{DMatrix, DVector};
