//! `nlslab` — a spectral simulation laboratory for the one-dimensional ion
//! Euler–Poisson system and its nonlinear Schrödinger (NLS) modulation
//! approximation.
//!
//! The crate is organised bottom-up:
//!
//! * [`spectral_core`] — periodic grids, Fourier transforms under the
//!   continuum convention `û(k) = (1/2π)∫u e^{-ikx}dx`, multipliers,
//!   dealiased products and Sobolev norms.
//! * [`dispersion`] — the ion-acoustic dispersion relation and its
//!   resonance structure.
//! * [`poisson`] — Newton–Krylov solution of `∂ₓ²φ = e^φ − n` and its
//!   small-amplitude expansion.
//! * [`euler_poisson`] — integrating-factor RK4 time stepping of the full
//!   quasilinear system in diagonal variables.
//! * [`nls`] — NLS coefficients assembled from the quadratic and cubic
//!   Fourier kernels, and a Strang split-step envelope solver.
//! * [`ansatz`] — modulated wave-packet approximations and their residuals.
//! * [`normal_form`] — the weight `ϑ`, projections, bilinear normal-form
//!   kernels, operator identities and the (modified) energy functional.
//! * [`harness`] — configuration, ε-sweeps, convergence studies and
//!   CSV/JSON artefacts.
//!
//! Data-parallel sweeps use rayon when the default `parallel` feature is
//! enabled and fall back to sequential iteration otherwise; results are
//! identical either way.

pub mod ansatz;
pub mod dispersion;
pub mod error;
pub mod euler_poisson;
pub mod harness;
pub mod nls;
pub mod normal_form;
pub mod par;
pub mod poisson;
pub mod spectral_core;

pub use error::{Error, Result};
pub use spectral_core::{Field, Multiplier, Parity, PeriodicGrid, Spectrum, C64};
