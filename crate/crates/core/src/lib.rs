//! Numerical laboratory for Markov semigroups generated by
//! `L = div(a·∇) − b·∇` with divergence-free drift `b` on a periodic box.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`], [`spectral`] — periodic geometry and Fourier machinery.
//! * [`field`] — divergence-free vector fields: construction, projection,
//!   mollification, norms.
//! * [`pde`] — the discrete operator, θ-scheme evolution, energy and weak-form
//!   checks.
//! * [`resolvent`] — elliptic solves `(α − L)u = f` and their estimates.
//! * [`kernel`], [`aronson`] — fundamental-solution slices, conservativeness,
//!   Chapman–Kolmogorov, Duhamel, and the Aronson-type envelope.
//! * [`mc`] — Euler–Maruyama simulation of the associated diffusion.
//! * [`io`] — the DFSL binary grid format and CSV tables.

pub mod aronson;
pub mod error;
pub mod field;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod krylov;
pub mod mc;
pub mod pde;
pub mod resolvent;
pub mod spectral;
mod stencil;

pub use error::{LabError, Result};
pub use field::{ScalarField, VectorField};
pub use grid::GridSpec;
