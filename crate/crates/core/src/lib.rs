//! Travelling waves in a reduced reaction–diffusion model of mutant-driven
//! inflammation.
//!
//! The crate provides the model itself ([`model`]), an adaptive ODE
//! integrator ([`integrate`]), phase-plane shooting for the scalar reduced
//! wave problems ([`scalarwaves`]), a finite-difference Newton solver for the
//! full two-component wave problems ([`systemwaves`]), method-of-lines
//! simulation with front tracking ([`evolution`]) and the closed-form speed
//! formulas ([`asymptotics`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::excessive_precision)]

pub mod error;
pub mod model;
pub mod integrate;
pub mod numerics;
pub mod asymptotics;
pub mod scalarwaves;
pub mod systemwaves;
pub mod evolution;
pub mod output;
pub mod validation;

pub use error::{Error, Result};
pub use model::{DerivedCoeffs, Equilibrium, EquilibriumKind, ModelParams, Stability};
