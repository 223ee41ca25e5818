//! Implicit midpoint integration of the augmented beam system with per-step
//! energy accounting.
//!
//! The whole augmented system `y' = A y` (beam, temperature and both mode
//! banks) is advanced by one implicit midpoint step. Positions and modal
//! states are eliminated analytically, leaving a banded system for the nodal
//! velocities and temperatures that is factored once per `(cfg, grid, dt)`.
//! Because the discrete energy is a quadratic form with `H A + A^T H = -2 D`,
//! the midpoint step satisfies
//!
//! ```text
//! E(n+1) - E(n) = -dt * D(y(n+1/2)),      y(n+1/2) = (y(n) + y(n+1)) / 2
//! ```
//!
//! exactly. The reported `identity_residual` compares the energy difference
//! against the trapezoid average of the dissipation at the two endpoints, a
//! second order estimate of the continuous law.

use serde::{Deserialize, Serialize};

use crate::banded::{BandLu, BandMatrix};
use crate::beam_model::{rhs_flat, BeamConfig, BeamState, Grid, Layout};
use crate::error::{PiezoError, Result};
use crate::frac_diffusive::DiffusiveOperator;

/// Energy bookkeeping at one reported instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    pub energy: f64,
    /// Modal dissipation of both dampers at `t`.
    pub boundary_dissipation: f64,
    /// `kappa * int theta_x^2` at `t`; zero for the non-thermal model.
    pub thermal_dissipation: f64,
    /// `|dE/dt + (D(t - dt) + D(t)) / 2|` over the step ending at `t`.
    pub identity_residual: f64,
    /// `|dE/dt + D(midpoint state)|`; rounding level for unforced steps.
    pub midpoint_balance: f64,
}

impl EnergyReport {
    pub fn total_dissipation(&self) -> f64 {
        self.boundary_dissipation + self.thermal_dissipation
    }
}

fn beam_energy(cfg: &BeamConfig, grid: &Grid, lay: &Layout, y: &[f64]) -> f64 {
    let n = grid.n_cells;
    let dx = grid.dx;
    let v = &y[lay.v()];
    let f = &y[lay.v_t()];
    let p = &y[lay.p()];
    let g = &y[lay.p_t()];
    let mut kinetic = 0.0;
    for j in 1..=n {
        kinetic += grid.weight(j) * (cfg.rho * f[j] * f[j] + cfg.mag_mu * g[j] * g[j]);
    }
    let a1 = cfg.alpha1();
    let mut potential = 0.0;
    for j in 0..n {
        let dv = (v[j + 1] - v[j]) / dx;
        let dp = (p[j + 1] - p[j]) / dx;
        let mix = cfg.gamma * dv - dp;
        potential += dx * (a1 * dv * dv + cfg.beta * mix * mix);
    }
    let mut heat = 0.0;
    if lay.thermal {
        let th = &y[lay.theta()];
        heat = grid.dx * cfg.c_heat * th.iter().map(|t| t * t).sum::<f64>();
    }
    0.5 * (kinetic + potential + heat)
}

fn modal_energy(d: &DiffusiveOperator, phi: &[f64]) -> f64 {
    let sum: f64 = d.weights().iter().zip(phi).map(|(w, p)| w * p * p).sum();
    0.5 * d.params().output_scale() * d.params().gain * sum
}

fn modal_dissipation(d: &DiffusiveOperator, phi: &[f64]) -> f64 {
    let sum: f64 = (0..d.len())
        .map(|k| d.weights()[k] * d.decay_rate(k) * phi[k] * phi[k])
        .sum();
    d.params().output_scale() * d.params().gain * sum
}

fn thermal_dissipation(cfg: &BeamConfig, grid: &Grid, lay: &Layout, y: &[f64]) -> f64 {
    if !lay.thermal {
        return 0.0;
    }
    let th = &y[lay.theta()];
    let n = grid.n_cells;
    // interior faces plus the half cell between the last centre and theta(L) = 0
    let mut sum = 0.0;
    for j in 1..n {
        let d = (th[j] - th[j - 1]) / grid.dx;
        sum += grid.dx * d * d;
    }
    let d = 2.0 * th[n - 1] / grid.dx;
    sum += 0.5 * grid.dx * d * d;
    cfg.kappa * sum
}

/// Discrete energy of a flat state vector.
pub fn energy_flat(
    cfg: &BeamConfig,
    grid: &Grid,
    d1: &DiffusiveOperator,
    d2: &DiffusiveOperator,
    y: &[f64],
) -> f64 {
    let lay = layout_for(cfg, grid, d1, d2);
    beam_energy(cfg, grid, &lay, y)
        + modal_energy(d1, &y[lay.phi1()])
        + modal_energy(d2, &y[lay.phi2()])
}

/// `(boundary, thermal)` dissipation rates of a flat state vector.
pub fn dissipation_flat(
    cfg: &BeamConfig,
    grid: &Grid,
    d1: &DiffusiveOperator,
    d2: &DiffusiveOperator,
    y: &[f64],
) -> (f64, f64) {
    let lay = layout_for(cfg, grid, d1, d2);
    (
        modal_dissipation(d1, &y[lay.phi1()]) + modal_dissipation(d2, &y[lay.phi2()]),
        thermal_dissipation(cfg, grid, &lay, y),
    )
}

fn layout_for(
    cfg: &BeamConfig,
    grid: &Grid,
    d1: &DiffusiveOperator,
    d2: &DiffusiveOperator,
) -> Layout {
    Layout {
        nodes: grid.n_cells + 1,
        thermal: cfg.thermal,
        modes1: d1.len(),
        modes2: d2.len(),
    }
}

/// Energy: kinetic and heat terms by trapezoid rule, gradient terms on cell
/// midpoints, damper terms through the quadrature weights.
pub fn compute_energy(cfg: &BeamConfig, grid: &Grid, state: &BeamState) -> f64 {
    energy_flat(cfg, grid, &state.damper1, &state.damper2, &state.to_flat())
}

/// `(boundary, thermal)` dissipation rates of a state.
pub fn compute_dissipation(cfg: &BeamConfig, grid: &Grid, state: &BeamState) -> (f64, f64) {
    dissipation_flat(cfg, grid, &state.damper1, &state.damper2, &state.to_flat())
}

/// Accuracy-driven default step `dx / (2 * fastest wave speed)`.
pub fn default_dt(cfg: &BeamConfig, grid: &Grid) -> f64 {
    grid.dx / (2.0 * cfg.max_wave_speed())
}

/// Relative slack allowed when checking that energy does not increase.
pub const MONOTONE_TOLERANCE: f64 = 1e-12;

/// Factored implicit midpoint step for one `(cfg, grid, dt)` and damper set.
#[derive(Debug, Clone)]
pub struct MidpointStepper {
    eqs: StepEquations,
    lu: BandLu,
}

/// Affine midpoint residual in the reduced unknowns.
#[derive(Debug, Clone)]
struct StepEquations {
    cfg: BeamConfig,
    grid: Grid,
    dt: f64,
    lay: Layout,
    d1: DiffusiveOperator,
    d2: DiffusiveOperator,
    /// flat index of each reduced unknown
    unknowns: Vec<usize>,
    modal_a1: Vec<f64>,
    modal_b1: Vec<f64>,
    modal_a2: Vec<f64>,
    modal_b2: Vec<f64>,
}

/// Scratch buffers reused across steps.
#[derive(Debug, Clone, Default)]
struct Work {
    next: Vec<f64>,
    mid: Vec<f64>,
    rate: Vec<f64>,
}

impl MidpointStepper {
    /// Assemble and factor the step matrix. `template` supplies the mode tables.
    pub fn new(cfg: &BeamConfig, grid: &Grid, template: &BeamState, dt: f64) -> Result<Self> {
        cfg.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(PiezoError::Domain(format!("dt = {dt} must be > 0")));
        }
        template.check_invariants(cfg, grid)?;
        let lay = template.layout();
        let n = grid.n_cells;
        let mut unknowns = Vec::new();
        for j in 1..=n {
            unknowns.push(lay.v_t().start + j);
            unknowns.push(lay.p_t().start + j);
            if lay.thermal {
                // temperature of the cell to the left of node j
                unknowns.push(lay.theta().start + j - 1);
            }
        }
        let h = 0.5 * dt;
        let modal = |d: &DiffusiveOperator| -> (Vec<f64>, Vec<f64>) {
            (0..d.len())
                .map(|k| {
                    let r = d.decay_rate(k);
                    ((1.0 - h * r) / (1.0 + h * r), h * d.kernel_values()[k] / (1.0 + h * r))
                })
                .unzip()
        };
        let (modal_a1, modal_b1) = modal(&template.damper1);
        let (modal_a2, modal_b2) = modal(&template.damper2);

        let m = unknowns.len();
        let eqs = StepEquations {
            cfg: *cfg,
            grid: *grid,
            dt,
            lay,
            d1: template.damper1.clone(),
            d2: template.damper2.clone(),
            unknowns,
            modal_a1,
            modal_b1,
            modal_a2,
            modal_b2,
        };

        // The residual is affine in the unknowns and vanishes at y = 0, z = 0,
        // so column i of the step matrix is the residual at y = 0, z = e_i.
        let zero = vec![0.0; lay.len()];
        let mut work = Work::default();
        let mut z = vec![0.0; m];
        let mut res = vec![0.0; m];
        let mut entries = Vec::new();
        let (mut kl, mut ku) = (0usize, 0usize);
        for col in 0..m {
            z[col] = 1.0;
            eqs.residual(&zero, &z, None, &mut res, &mut work);
            z[col] = 0.0;
            for (row, &val) in res.iter().enumerate() {
                if val != 0.0 {
                    kl = kl.max(row.saturating_sub(col));
                    ku = ku.max(col.saturating_sub(row));
                    entries.push((row, col, val));
                }
            }
        }
        let mut band = BandMatrix::zeros(m, kl, ku);
        for (row, col, val) in entries {
            band.set(row, col, val);
        }
        Ok(Self {
            eqs,
            lu: band.factor()?,
        })
    }

    pub fn dt(&self) -> f64 {
        self.eqs.dt
    }

    pub fn config(&self) -> &BeamConfig {
        &self.eqs.cfg
    }

    pub fn grid(&self) -> &Grid {
        &self.eqs.grid
    }

    /// Advance the flat state `y` by one step. `source` is an optional forcing
    /// rate (flat layout) evaluated at the step midpoint.
    pub fn advance_flat(&self, y: &mut [f64], source: Option<&[f64]>) {
        let mut work = Work::default();
        let m = self.eqs.unknowns.len();
        let zero = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        self.eqs.residual(y, &zero, source, &mut rhs, &mut work);
        rhs.iter_mut().for_each(|r| *r = -*r);
        self.lu.solve_in_place(&mut rhs);
        self.eqs.candidate(y, &rhs, &mut work);
        y.copy_from_slice(&work.next);
    }

    /// One step with energy accounting; `t_new` labels the report.
    pub fn step(&self, state: &mut BeamState, t_new: f64) -> EnergyReport {
        self.step_forced(state, t_new, None)
    }

    pub fn step_forced(&self, state: &mut BeamState, t_new: f64, source: Option<&[f64]>) -> EnergyReport {
        let mut y = state.to_flat();
        let old = y.clone();
        self.advance_flat(&mut y, source);
        state.assign_flat(&y);
        self.eqs.report_step(&old, &y, t_new)
    }
}

impl StepEquations {

    /// Fill `work.next` with the candidate new state for reduced unknowns `z`.
    fn candidate(&self, y: &[f64], z: &[f64], work: &mut Work) {
        let lay = &self.lay;
        let half = 0.5 * self.dt;
        work.next.clear();
        work.next.extend_from_slice(y);
        for (&idx, &val) in self.unknowns.iter().zip(z) {
            work.next[idx] = val;
        }
        let n = lay.nodes - 1;
        for (pos, vel) in [(lay.v(), lay.v_t()), (lay.p(), lay.p_t())] {
            for j in 1..=n {
                work.next[pos.start + j] =
                    y[pos.start + j] + half * (y[vel.start + j] + work.next[vel.start + j]);
            }
        }
        let u1 = y[lay.v_t().start + n] + work.next[lay.v_t().start + n];
        let u2 = y[lay.p_t().start + n] + work.next[lay.p_t().start + n];
        for (range, a, b, u) in [
            (lay.phi1(), &self.modal_a1, &self.modal_b1, u1),
            (lay.phi2(), &self.modal_a2, &self.modal_b2, u2),
        ] {
            for (k, idx) in range.enumerate() {
                work.next[idx] = a[k] * y[idx] + b[k] * u;
            }
        }
    }

    /// Midpoint residual of the velocity and temperature rows.
    fn residual(&self, y: &[f64], z: &[f64], source: Option<&[f64]>, res: &mut [f64], work: &mut Work) {
        self.candidate(y, z, work);
        work.mid.clear();
        work.mid.extend(y.iter().zip(&work.next).map(|(a, b)| 0.5 * (a + b)));
        work.rate.resize(y.len(), 0.0);
        rhs_flat(&self.cfg, &self.grid, &self.d1, &self.d2, &work.mid, &mut work.rate);
        for (r, &idx) in res.iter_mut().zip(&self.unknowns) {
            let forcing = source.map_or(0.0, |s| s[idx]);
            *r = work.next[idx] - y[idx] - self.dt * (work.rate[idx] + forcing);
        }
    }

    fn report_step(&self, old: &[f64], new: &[f64], t_new: f64) -> EnergyReport {
        let e_old = energy_flat(&self.cfg, &self.grid, &self.d1, &self.d2, old);
        let e_new = energy_flat(&self.cfg, &self.grid, &self.d1, &self.d2, new);
        let (b_old, t_old) = dissipation_flat(&self.cfg, &self.grid, &self.d1, &self.d2, old);
        let (b_new, t_new_d) = dissipation_flat(&self.cfg, &self.grid, &self.d1, &self.d2, new);
        let mid: Vec<f64> = old.iter().zip(new).map(|(a, b)| 0.5 * (a + b)).collect();
        let (b_mid, t_mid) = dissipation_flat(&self.cfg, &self.grid, &self.d1, &self.d2, &mid);
        let rate = (e_new - e_old) / self.dt;
        EnergyReport {
            t: t_new,
            energy: e_new,
            boundary_dissipation: b_new,
            thermal_dissipation: t_new_d,
            identity_residual: (rate + 0.5 * (b_old + t_old + b_new + t_new_d)).abs(),
            midpoint_balance: (rate + b_mid + t_mid).abs(),
        }
    }
}

/// Report for a state at rest in time (no preceding step).
pub fn initial_report(cfg: &BeamConfig, grid: &Grid, state: &BeamState, t: f64) -> EnergyReport {
    let (b, th) = compute_dissipation(cfg, grid, state);
    EnergyReport {
        t,
        energy: compute_energy(cfg, grid, state),
        boundary_dissipation: b,
        thermal_dissipation: th,
        identity_residual: 0.0,
        midpoint_balance: 0.0,
    }
}

/// Stepping schedule for [`run`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Emit a report every `report_every` steps (the last step always reports).
    pub report_every: usize,
    /// Index of the first step; `t = step * dt`, so restarts reproduce times exactly.
    pub start_step: usize,
}

impl RunOptions {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            report_every: 1,
            start_step: 0,
        }
    }

    /// Total number of steps from `t = 0` to `t_end`.
    pub fn total_steps(&self) -> usize {
        if self.t_end <= 0.0 {
            0
        } else {
            (self.t_end / self.dt - 1e-9).ceil() as usize
        }
    }
}

/// Output of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub reports: Vec<EnergyReport>,
    pub final_state: BeamState,
    pub final_step: usize,
    /// Steps whose energy rose beyond [`MONOTONE_TOLERANCE`].
    pub energy_increases: usize,
    pub max_identity_residual: f64,
    pub max_midpoint_balance: f64,
}

/// Integrate from `start_step` to the end of the schedule. `observer` sees
/// every state after each step along with the step index.
pub fn run(
    cfg: &BeamConfig,
    grid: &Grid,
    initial: BeamState,
    opts: &RunOptions,
    observer: &mut dyn FnMut(usize, &BeamState, &EnergyReport),
) -> Result<RunOutput> {
    if !(opts.t_end >= 0.0) {
        return Err(PiezoError::Domain(format!("t_end = {} must be >= 0", opts.t_end)));
    }
    if opts.report_every == 0 {
        return Err(PiezoError::Domain("report_every must be >= 1".into()));
    }
    let total = opts.total_steps();
    let mut state = initial;
    let first = initial_report(cfg, grid, &state, opts.start_step as f64 * opts.dt);
    let mut out = RunOutput {
        reports: vec![first],
        final_state: state.clone(),
        final_step: opts.start_step,
        energy_increases: 0,
        max_identity_residual: 0.0,
        max_midpoint_balance: 0.0,
    };
    if opts.start_step >= total {
        out.final_state = state;
        return Ok(out);
    }
    let stepper = MidpointStepper::new(cfg, grid, &state, opts.dt)?;
    let mut prev_energy = first.energy;
    for step in opts.start_step + 1..=total {
        let report = stepper.step(&mut state, step as f64 * opts.dt);
        if report.energy > prev_energy * (1.0 + MONOTONE_TOLERANCE) + f64::MIN_POSITIVE {
            out.energy_increases += 1;
        }
        prev_energy = report.energy;
        out.max_identity_residual = out.max_identity_residual.max(report.identity_residual);
        out.max_midpoint_balance = out.max_midpoint_balance.max(report.midpoint_balance);
        observer(step, &state, &report);
        if step % opts.report_every == 0 || step == total {
            out.reports.push(report);
        }
    }
    out.final_step = total;
    out.final_state = state;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam_model::initial_condition_library;
    use approx::assert_relative_eq;

    #[test]
    fn energy_of_simple_states() {
        let cfg = BeamConfig::paper_nonthermal();
        let grid = Grid::new(16, 1.0).unwrap();
        let mut s = initial_condition_library("zero", &cfg, &grid, 8).unwrap();
        assert_eq!(compute_energy(&cfg, &grid, &s), 0.0);
        // V = x: 1/2 alpha1 + 1/2 beta gamma^2
        for j in 0..=16 {
            s.v[j] = grid.x(j);
        }
        let expect = 0.5 * (cfg.alpha1() + cfg.beta * cfg.gamma * cfg.gamma);
        assert_relative_eq!(compute_energy(&cfg, &grid, &s), expect, epsilon = 1e-14);
        // gamma V_x = P_x: only the alpha1 term survives
        for j in 0..=16 {
            s.p[j] = cfg.gamma * grid.x(j);
        }
        assert_relative_eq!(compute_energy(&cfg, &grid, &s), 0.5 * cfg.alpha1(), epsilon = 1e-14);
    }

    #[test]
    fn zero_state_stays_zero() {
        let cfg = BeamConfig::paper_thermal();
        let grid = Grid::new(12, 1.0).unwrap();
        let s = initial_condition_library("zero", &cfg, &grid, 8).unwrap();
        let out = run(&cfg, &grid, s.clone(), &RunOptions::new(0.01, 0.1), &mut |_, _, _| {}).unwrap();
        assert_eq!(out.final_state, s);
        assert!(out.reports.iter().all(|r| r.energy == 0.0 && r.identity_residual == 0.0));
    }

    #[test]
    fn t_end_zero_reports_initial_only() {
        let cfg = BeamConfig::paper_nonthermal();
        let grid = Grid::new(12, 1.0).unwrap();
        let s = initial_condition_library("fundamental", &cfg, &grid, 8).unwrap();
        let out = run(&cfg, &grid, s, &RunOptions::new(0.01, 0.0), &mut |_, _, _| {}).unwrap();
        assert_eq!(out.reports.len(), 1);
        assert_eq!(out.final_step, 0);
    }

    #[test]
    fn midpoint_balance_is_exact() {
        for cfg in [BeamConfig::paper_nonthermal(), BeamConfig::paper_thermal()] {
            let grid = Grid::new(24, 1.0).unwrap();
            let s = initial_condition_library("pluck", &cfg, &grid, 16).unwrap();
            let e0 = compute_energy(&cfg, &grid, &s);
            let out = run(&cfg, &grid, s, &RunOptions::new(0.02, 1.0), &mut |_, _, _| {}).unwrap();
            assert!(out.max_midpoint_balance < 1e-11 * e0, "{}", out.max_midpoint_balance);
            assert_eq!(out.energy_increases, 0);
        }
    }

    #[test]
    fn step_matrix_is_banded() {
        let cfg = BeamConfig::paper_thermal();
        let grid = Grid::new(40, 1.0).unwrap();
        let s = initial_condition_library("zero", &cfg, &grid, 32).unwrap();
        let stepper = MidpointStepper::new(&cfg, &grid, &s, 0.01).unwrap();
        assert_eq!(stepper.lu.dim(), 3 * 40);
    }
}
