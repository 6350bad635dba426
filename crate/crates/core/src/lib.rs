//! Numerical laboratory for the chemotaxis reaction-diffusion system
//!
//! ```text
//! m_t = Δm + m(1 − m^{a−1}) − χ∇·(f(m)∇c)
//! c_t = ε0 Δc + δ d − c + β m
//! d_t = g(m)(1 − d)
//! ```
//!
//! on a rectangle with homogeneous Neumann conditions. The crate provides
//! linear stability thresholds, a pseudo-spectral IMEX solver, a
//! finite-difference oracle and invariant diagnostics.

pub mod commands;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fd;
pub mod grid;
pub mod io;
pub mod model;
pub mod simulation;
pub mod spectral;
pub mod stability;

pub use error::{Error, Result};
pub use grid::{Field, Grid, RectDomain, State};
pub use model::{Equilibrium, ModelParams, Nonlinearity};
pub use simulation::{simulate, Classification, SimConfig, Trajectory};
