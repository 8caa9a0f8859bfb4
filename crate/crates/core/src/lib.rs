//! Spectral Galerkin solver and invariant checks for the nonclassical
//! diffusion equation with a nonlocal diffusion coefficient and delay,
//!
//! ```text
//! ∂ₜu − ε(t) ∂ₜΔu − a(l(u)) Δu + ζu = g(u) + φ(t, uₜ) + k(t)
//! ```
//!
//! on a rectangle with homogeneous Dirichlet data and an initial history on
//! `[τ − μ, τ]`.

// Negated comparisons are used so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod history;
pub mod integrator;
pub mod model;
pub mod report;
pub mod spectral;

pub use error::{Error, Result};
pub use history::HistoryBuffer;
pub use integrator::{rhs, simulate, GalerkinState};
pub use model::{validate_scenario, BoundsParameters, Scenario, ScenarioConfig};
pub use spectral::{BasisTable, DomainSpec, SpectralField};
