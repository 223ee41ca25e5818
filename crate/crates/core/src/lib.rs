//! Piezoelectric beam with fractional-derivative boundary damping.
//!
//! The fractional boundary operators are realized by banks of damped modes
//! ([`frac_diffusive`]), coupled to a finite-difference beam model with optional
//! Fourier heat conduction ([`beam_model`]), advanced by an energy-dissipative
//! implicit midpoint scheme ([`time_integrator`]) and analysed for decay
//! character, Lyapunov bounds and resolvent growth ([`stability_lab`]).

pub mod banded;
pub mod beam_model;
pub mod error;
pub mod frac_diffusive;
pub mod snapshot;
pub mod stability_lab;
pub mod time_integrator;

pub use beam_model::{initial_condition_library, BeamConfig, BeamState, Grid};
pub use error::{PiezoError, Result};
pub use frac_diffusive::{build_quadrature, DiffusiveOperator, FracParams};
pub use snapshot::Snapshot;
pub use time_integrator::{compute_energy, run, EnergyReport, MidpointStepper, RunOptions};
