//! Oscillating divergence-free initial data for the incompressible
//! Navier–Stokes equations, the sign-change design behind them, and the
//! diagnostics that track the concentration–diffusion cycle of the flow:
//! the velocity correlation `E(a)(t)`, the moment matrix `K(t)` and the
//! far-field decay class it induces.
//!
//! The crate is organized bottom-up:
//!
//! * [`profile`], [`fields`] — bump profile, Fourier-space datum, lattice fields.
//! * [`design`] — the linear design system placing sign changes at given times.
//! * [`correlation`] — `E(a)(t)` by reduced quadrature and by a lattice oracle.
//! * [`nsflow`] — heat flow, Leray projection, pseudo-spectral time stepping,
//!   Picard terms, moment matrices.
//! * [`farfield`] — asymptotic profile `∇Π`, decay classification, directional maps.
//! * [`oscillatory`] — heat flow of slowly decaying (plain and chirped) data.

pub mod config;
pub mod correlation;
pub mod design;
pub mod error;
pub mod farfield;
pub mod fields;
pub mod geometry;
pub mod nsflow;
pub mod oscillatory;
pub mod profile;
pub mod quadrature;

pub use error::{Error, Result};
pub use geometry::{Dim, Mat3, Vec3};
