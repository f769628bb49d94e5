//! Spectral Galerkin simulation of the Hasegawa-Mima equation
//!
//! ```text
//! ∂t(φ - Δφ) + ∇⊥φ · ∇(log n₀ - Δφ) = ε Δ(φ - Δφ + log n₀)
//! ```
//!
//! on the unit disk or square with Dirichlet data, for background densities
//! `n₀` that may vanish on the boundary. The crate builds the
//! Dirichlet-Laplacian eigenbasis, assembles the triad coupling tensor,
//! integrates the Galerkin ODE and monitors the energy, enstrophy and L^p
//! bounds the continuous problem obeys, together with Yudovich-type
//! uniqueness diagnostics.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bessel;
pub mod config;
pub mod coupling;
pub mod density;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod monitors;
pub mod quadrature;
pub mod transform;
pub mod yudovich;

pub use config::RunConfig;
pub use coupling::{assemble_rhs_data, assemble_triads, assemble_triads_with, CouplingTensors, TriadTensor};
pub use density::{
    regularize_density, sample_log_density, smooth_initial_field, truncate_regularize, DensityField, DensityProfile,
    DensitySpec,
};
pub use dynamics::{integrate, rhs, IntegratorConfig, Scheme, SpectralField, Trajectory};
pub use error::{HmError, Result};
pub use geometry::{build_basis, eval_mode, BasisMode, BasisSet, Geometry, ModeIndex, ModeSample, Parity};
pub use monitors::{check_lp_budget, tol, weak_residual, Monitor, MonitorRecord, MonitorSeries, MonitorSpec};
pub use quadrature::{inner, lp_norm, make_grid, make_grid_with, GridOptions, QuadratureGrid, SampledField};
pub use transform::SpectralTransform;
pub use yudovich::{osgood_envelope, osgood_test, phi_theta, yudovich_norm, GrowthFunction, OsgoodVerdict};
