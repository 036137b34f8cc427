//! Accelerated first-order methods obtained by discretizing the NAG flow
//!
//! ```text
//!     x' = v - x,    gamma v' = mu (x - v) - grad f(x),    gamma' = mu - gamma
//! ```
//!
//! together with the machinery needed to check their convergence guarantees
//! numerically: discrete and continuous Lyapunov functions, contraction
//! factors, rate envelopes and spectral radii of Gauss-Seidel amplifier
//! matrices for quadratic objectives.
//!
//! Modules:
//!
//! - [`problems`]: smooth and composite objectives, proximal operators, the
//!   composite gradient mapping.
//! - [`schedules`]: step-size and scaling sequences (`alpha_k`, `gamma_k`) and
//!   continuous time-rescaling factors.
//! - [`solvers`]: one pure step function per scheme plus a driver with restart.
//! - [`lyapunov`]: Lyapunov values, rate envelopes, trace verification.
//! - [`spectral`]: block transforms, amplifier matrices, spectral bounds.
//! - [`flow`]: adaptive Runge-Kutta integration of the continuous flows.
//! - [`cli`]: config parsing and experiment execution for the `nag-flow` binary.

pub mod cli;
pub mod error;
pub mod flow;
pub mod linalg;
pub mod lyapunov;
pub mod ode;
pub mod problems;
pub mod schedules;
pub mod solvers;
pub mod spectral;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
