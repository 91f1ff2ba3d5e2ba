//! Differentially private stochastic optimization toolkit.
//!
//! The crate provides:
//!
//!  - [`accountant`]: Rényi-DP accounting for the subsampled Gaussian mechanism,
//!    conversion to (ε, δ)-DP and noise-multiplier calibration.
//!  - [`oracle`]: objectives with exact gradients, per-sample gradients for
//!    finite sums, and almost-surely bounded gradient-noise models.
//!  - [`optimizer`]: DP-NSGD and DP-SGD steps, theory-prescribed learning rates
//!    and minimum iteration counts.
//!  - [`bias_lab`]: Monte-Carlo checks of the descent inequality, first-order
//!    lower bounds and the bias of normalization/clipping.
//!  - [`harness`]: experiment runner, rate fitting, floor and stability sweeps,
//!    CSV and SVG output.
//!  - [`cli`]: the `dpopt` command-line front end.

// `!(x > 0.0)` rejects NaN along with nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod bias_lab;
pub mod cli;
mod error;
pub mod harness;
pub mod linalg;
pub mod mc;
pub mod optimizer;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};
