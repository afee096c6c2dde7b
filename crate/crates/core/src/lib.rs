//! Discretized kinetic model of binary economic exchange driven by Langevin
//! noise.
//!
//! - [`kinetic`]: transition probabilities, interaction coefficients, drift.
//! - [`noise`]: additive, multiplicative and income-conserving diffusion.
//! - [`sde`]: Euler–Maruyama integration, equilibria, seeded ensembles.
//! - [`metrics`]: total income, Gini index, mobility, correlations.
//! - [`config`], [`experiments`], [`verify`]: the `kinex` command-line driver.

pub mod config;
pub mod error;
pub mod experiments;
pub mod kinetic;
pub mod metrics;
pub mod noise;
pub mod sde;
pub mod state;
pub mod verify;

pub use error::{Error, Result};
pub use kinetic::{transition_probability, ClassSystem};
pub use noise::{DiffusionKind, DiffusionMatrix, NoiseKind};
pub use sde::{SdeConfig, Trajectory};
pub use state::StateVector;
