//! Purity density, purity currents and the entanglement continuity
//! equations for pure two-particle states with one spatial dimension per
//! particle.
//!
//! The wavefunction `ψ(x, y)` lives on an `n × n` periodic grid; the purity
//! density `π(x, y, X, Y)` and its four current components live on the
//! `n⁴` dynamical lattice. Module map:
//!
//! - [`grid`], [`field`], [`spectral`]: lattice, fields, quadrature and
//!   Fourier derivatives.
//! - [`propagator`]: Hamiltonian, Strang split-step evolution and a dense
//!   Crank–Nicolson reference integrator.
//! - [`purity`]: reduced density, purity by three routes, Schmidt spectrum,
//!   concurrence, purity density.
//! - [`continuity`]: currents, divergence, `∂π/∂t`, interaction source and
//!   continuity residuals.
//! - [`scenario`]: configuration, presets, trajectories and output formats.

pub mod continuity;
pub mod error;
pub mod field;
pub mod grid;
pub mod propagator;
pub mod purity;
mod reduce;
pub mod scenario;
pub mod spectral;

pub use continuity::{
    current_components, divergence4, divergence4_with, dpi_dt_analytic, purity_rate_check,
    residual_field, residual_free, residual_interacting, source_u, ContinuityReport, CurrentField,
    DivergenceScheme, PurityRate, ResidualMode, SourceField,
};
pub use error::{Error, Result};
pub use field::{integrate2, integrate4, Field2C, Field4C, StorageKind, StoragePolicy};
pub use grid::{make_grid, Grid, PhysParams};
pub use num_complex::Complex64;
pub use propagator::{
    apply_hamiltonian, cn_reference_step, evolve, step_split, CrankNicolson, EvolutionSpec,
    Potential, PotentialKind, SplitStepper, Trajectory,
};
pub use purity::{
    concurrence, dcp, purity, purity_density, purity_from_density, purity_from_rho, purity_report,
    reduced_density, reduced_density_y, schmidt_spectrum, PurityReport, ReducedDensity, SchmidtSpectrum,
};
