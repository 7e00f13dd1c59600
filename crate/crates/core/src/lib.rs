//! Numerical laboratory for a coupled elliptic/reaction-diffusion model of
//! biological transport network formation.
//!
//! The model couples a Darcy-type pressure equation
//! `-div[(I + m (x) m) grad p] = S` to a reaction-diffusion equation for the
//! vector-valued conductance field `m`, driven by the pumping term
//! `c^2 (m . grad p) grad p` and a metabolic decay `|m|^(2(gamma-1)) m`.
//! Everything lives on the unit interval or unit square with homogeneous
//! Dirichlet boundary conditions.
//!
//! Module map:
//! - [`field`]: grids, discrete fields, difference operators, quadrature.
//! - [`params`]: model parameters and their validity checks.
//! - [`mollifier`]: truncated heat-kernel smoothing with zero extension.
//! - [`elliptic`]: pressure solvers (anisotropic, mollified, 1D closed forms,
//!   and the convex minimization for the diffusionless stationary pressure).
//! - [`dynamics`]: time steppers for the conductance equation and its
//!   sign-flipped, mollified and linearized variants.
//! - [`energy`]: the Lyapunov energy, its mollified variant and dissipation
//!   diagnostics.
//! - [`spectra`]: steady amplitudes, diffusionless patterns, the leading
//!   eigenvalue of the pressure-gradient operator and stability checks.

pub mod dynamics;
pub mod elliptic;
pub mod energy;
mod error;
pub mod field;
pub mod linalg;
pub mod mollifier;
pub mod params;
pub mod rng;
pub mod snapshot;
pub mod spectra;

pub use dynamics::{simulate, simulate_with_bc, PressureBc, SimState, SimTrace, TraceRow, Variant};
pub use elliptic::{Bc1d, CumulativeSource1d, PressureSolve};
pub use energy::EnergyBreakdown;
pub use error::{Error, Result};
pub use field::{Grid, ScalarField, VectorField};
pub use mollifier::KernelStencil;
pub use params::ModelParams;
pub use rng::SplitMix64;
pub use spectra::{PatternSpec, SpectralResult, ZeroStateClass};
