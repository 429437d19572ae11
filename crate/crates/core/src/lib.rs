//! Simulation and analysis engine for stochastic patch-structured population
//! dynamics.
//!
//! The crate is `no_std` (it needs `alloc`). It integrates the n-patch model
//!
//! ```text
//! dX_i = ( X_i (a_i - b_i(X_i)) + sum_j D_ji X_j ) dt + X_i dE_i,   dE = Γ dW
//! ```
//!
//! together with its proportion/total decomposition, the boundary simplex
//! process and the scalar logistic diffusion, and computes the stochastic
//! growth rate `r` by time averaging, by the log-slope of the linearized total
//! abundance, and (for two patches) by quadrature against the stationary
//! density of the reduced proportion diffusion.
//!
//! IO, CLI and thread pools live in the companion `patchdyn` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod lyapunov;
pub(crate) mod math;
pub mod model;
pub mod quad;
pub mod reduce1d;
pub mod rng;
pub mod robustness;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use lyapunov::{LyapunovEstimate, Method};
pub use model::{CompetitionSpec, ModelSpec, NoiseSpec, ValidationReport};
pub use sde::{Coords, Path, Scheme, SimConfig};
