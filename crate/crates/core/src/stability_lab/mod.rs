//! Decay-rate estimation, Lyapunov functional checks and resolvent sweeps.

pub mod decay;
pub mod generator;
pub mod lyapunov;
pub mod resolvent;

pub use decay::{fit_decay, DecayFit, DecayModel};
pub use generator::{assemble_generator, Generator};
pub use lyapunov::{
    evaluate_functionals, feasible_constants, lyapunov_check, LyapunovConfig, LyapunovReport,
    LyapunovSample,
};
pub use resolvent::{
    mid_window, resolvent_norm, resolvent_sweep, resonance_slope, sweep_window, ResolventPoint, ResonanceSlope,
};
