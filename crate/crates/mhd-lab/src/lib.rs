//! Pseudo-spectral laboratory for the 2D incompressible viscous, non-resistive
//! MHD system perturbed around the rotational magnetic equilibrium
//! B⁰ = (x₂, −x₁)ᵀ.
//!
//! The whole-space problem is truncated to a periodic box [−πL, πL)² with a
//! windowed angular derivative ∂_θ = x₁∂₂ − x₂∂₁ (coordinates tapered to zero
//! near the boundary), which is exact wherever the solution lives and is
//! guarded by a support-leakage monitor.
//!
//! Layers:
//! * [`grid`] / [`spectral`] — Fourier transforms, multipliers, dealiasing,
//!   Helmholtz solves and the Leray projection on the periodic box.
//! * [`fields`] — vector fields, the reflection parity classes, stream-function
//!   construction, the windowed background field and ∂_θ, symmetric random
//!   data, and circle averages (zeroth angular mode).
//! * [`dynamics`] — IMEX time integration of the perturbation system, the
//!   nonlinear forcings F and G, the damped-wave residual and the scalar
//!   dispersion model.
//! * [`diagnostics`] — Sobolev norms of all flavors, the energy functionals
//!   E₀, E₁, e₀, e₁ and the total energy, decay-rate fits, leakage.
//! * [`inequality`] — empirical surveys of the Poincaré-type, product,
//!   commutator and interpolation inequalities.
//! * [`config`], [`snapshot`], [`harness`] — run configuration, the on-disk
//!   state container, experiment orchestration and reporting.

pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod fft;
pub mod fields;
pub mod grid;
pub mod harness;
pub mod inequality;
pub mod snapshot;
pub mod spectral;

pub use error::Error;
pub use grid::Grid;
pub use spectral::{ScalarField, Space};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
