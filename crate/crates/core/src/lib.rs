//! One-dimensional quantum trajectory laboratory.
//!
//! Solves the stationary Schrödinger equation, builds Floydian microstates of
//! the quantum stationary Hamilton-Jacobi equation (QSHJE), evaluates the
//! energy variational derivative of the kinetic energy, and integrates
//! classical, Bohmian and Floydian trajectories.

// `!(x > 0.0)` style guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod export;
pub mod grid;
pub mod microstate;
pub mod potential;
pub mod schrodinger;
pub mod spectral;
pub mod trajectory;
pub mod variation;

pub use error::{Error, Result};
pub use grid::Grid;
pub use potential::{PotentialFamily, PotentialSpec, SpectrumClass, Units};
