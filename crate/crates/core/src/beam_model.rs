//! Finite-difference model of the piezoelectric beam with fractional boundary
//! dampers, with and without Fourier heat conduction.
//!
//! ```text
//! rho V_tt    = alpha V_xx - gamma beta P_xx - delta theta_x
//! mag_mu P_tt = beta P_xx - gamma beta V_xx
//! c theta_t   = kappa theta_xx - delta V_xt                    (thermal only)
//! V(0) = P(0) = 0,   theta_x(0) = theta(L) = 0,
//! alpha V_x - gamma beta P_x = -l1 O1,   beta P_x - gamma beta V_x = -l2 O2   at x = L
//! ```
//!
//! `O1`, `O2` are the outputs of two diffusive mode banks driven by `V_t(L)` and
//! `P_t(L)`. The spatial operator is written in summation-by-parts form: stresses
//! live on cell midpoints, the last node carries a half cell whose outer face
//! receives the boundary stress `-l O`.
//!
//! Temperature lives on cell centres `x_{j+1/2}`, with mirror ghosts for
//! `theta_x(0) = 0` and odd ghosts for `theta(L) = 0`. Both coupling terms are
//! then compact two-point differences, adjoint to each other in the discrete
//! inner products, so they cancel exactly in the energy balance and no grid
//! mode escapes the thermal coupling.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{PiezoError, Result};
use crate::frac_diffusive::{build_quadrature, xi_max_for, DiffusiveOperator, FracParams};

/// Physical constants, boundary dampers and model selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Magnetic permeability (inertia of the charge equation).
    pub mag_mu: f64,
    pub delta: f64,
    pub c_heat: f64,
    pub kappa: f64,
    pub length: f64,
    pub frac1: FracParams,
    pub frac2: FracParams,
    pub thermal: bool,
}

impl BeamConfig {
    /// Unit material constants with `alpha = 2`, `a = 0.5`, `eta = 1`, `l1 = l2 = 1`.
    pub fn paper_nonthermal() -> Self {
        let frac = FracParams {
            a: 0.5,
            eta: 1.0,
            gain: 1.0,
        };
        Self {
            rho: 1.0,
            alpha: 2.0,
            beta: 1.0,
            gamma: 1.0,
            mag_mu: 1.0,
            delta: 0.0,
            c_heat: 1.0,
            kappa: 1.0,
            length: 1.0,
            frac1: frac,
            frac2: frac,
            thermal: false,
        }
    }

    /// [`BeamConfig::paper_nonthermal`] plus `delta = c = kappa = 1`.
    pub fn paper_thermal() -> Self {
        Self {
            delta: 1.0,
            c_heat: 1.0,
            kappa: 1.0,
            thermal: true,
            ..Self::paper_nonthermal()
        }
    }

    /// Effective stiffness `alpha - gamma^2 beta`.
    pub fn alpha1(&self) -> f64 {
        self.alpha - self.gamma * self.gamma * self.beta
    }

    /// Coupling constant of the heat equation; zero for the non-thermal model.
    pub fn effective_delta(&self) -> f64 {
        if self.thermal {
            self.delta
        } else {
            0.0
        }
    }

    pub fn wave_speeds(&self) -> (f64, f64) {
        ((self.alpha / self.rho).sqrt(), (self.beta / self.mag_mu).sqrt())
    }

    pub fn max_wave_speed(&self) -> f64 {
        let (a, b) = self.wave_speeds();
        a.max(b)
    }

    pub fn min_wave_speed(&self) -> f64 {
        let (a, b) = self.wave_speeds();
        a.min(b)
    }

    /// Every violated constraint, with field paths rooted at `path`.
    pub fn violations(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        let positive = [
            ("rho", self.rho),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("mag_mu", self.mag_mu),
            ("length", self.length),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                out.push(format!("{path}{name} = {value} must be > 0"));
            }
        }
        if !self.gamma.is_finite() {
            out.push(format!("{path}gamma = {} must be finite", self.gamma));
        }
        if !(self.alpha1() > 0.0) {
            out.push(format!(
                "{path}alpha - gamma^2*beta must be > 0 (got {})",
                self.alpha1()
            ));
        }
        if self.thermal {
            if !(self.delta >= 0.0 && self.delta.is_finite()) {
                out.push(format!("{path}delta = {} must be >= 0", self.delta));
            }
            if !(self.c_heat > 0.0 && self.c_heat.is_finite()) {
                out.push(format!("{path}c_heat = {} must be > 0", self.c_heat));
            }
            if !(self.kappa > 0.0 && self.kappa.is_finite()) {
                out.push(format!("{path}kappa = {} must be > 0", self.kappa));
            }
        }
        out.extend(self.frac1.violations(&format!("{path}frac1.")));
        out.extend(self.frac2.violations(&format!("{path}frac2.")));
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.violations("");
        if problems.is_empty() {
            Ok(())
        } else {
            Err(PiezoError::Config(problems))
        }
    }
}

/// Uniform grid `x_j = j dx`, `j = 0..=n_cells`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n_cells: usize,
    pub dx: f64,
}

impl Grid {
    pub fn new(n_cells: usize, length: f64) -> Result<Self> {
        if n_cells < 8 {
            return Err(PiezoError::Domain(format!("n_cells = {n_cells} must be >= 8")));
        }
        if !(length > 0.0) {
            return Err(PiezoError::Domain(format!("length = {length} must be > 0")));
        }
        Ok(Self {
            n_cells,
            dx: length / n_cells as f64,
        })
    }

    pub fn length(&self) -> f64 {
        self.dx * self.n_cells as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        if j == self.n_cells {
            self.length()
        } else {
            j as f64 * self.dx
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_cells).map(|j| self.x(j)).collect()
    }

    /// Cell-centre positions `x_{j+1/2}`.
    pub fn centres(&self) -> Vec<f64> {
        (0..self.n_cells).map(|j| (j as f64 + 0.5) * self.dx).collect()
    }

    /// Trapezoid weight of node `j`.
    pub fn weight(&self, j: usize) -> f64 {
        if j == 0 || j == self.n_cells {
            0.5 * self.dx
        } else {
            self.dx
        }
    }
}

/// Augmented state at one instant. Nodal arrays have `n_cells + 1` entries;
/// `theta` holds the `n_cells` cell-centre temperatures.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamState {
    pub v: Vec<f64>,
    pub v_t: Vec<f64>,
    pub p: Vec<f64>,
    pub p_t: Vec<f64>,
    pub theta: Option<Vec<f64>>,
    pub damper1: DiffusiveOperator,
    pub damper2: DiffusiveOperator,
}

/// Time derivative of a [`BeamState`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateRate {
    pub v: Vec<f64>,
    pub v_t: Vec<f64>,
    pub p: Vec<f64>,
    pub p_t: Vec<f64>,
    pub theta: Option<Vec<f64>>,
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
}

/// Highest rate the dampers should resolve on `grid`: twice the fastest grid frequency.
pub fn default_lam_max(cfg: &BeamConfig, grid: &Grid) -> f64 {
    4.0 * cfg.max_wave_speed() / grid.dx
}

/// Build both boundary mode banks with `n_modes` modes each, resolving rates up
/// to [`default_lam_max`].
pub fn build_dampers(
    cfg: &BeamConfig,
    grid: &Grid,
    n_modes: usize,
) -> Result<(DiffusiveOperator, DiffusiveOperator)> {
    let lam = default_lam_max(cfg, grid);
    let d1 = build_quadrature(cfg.frac1, n_modes, xi_max_for(&cfg.frac1, n_modes, lam)?)?;
    let d2 = build_quadrature(cfg.frac2, n_modes, xi_max_for(&cfg.frac2, n_modes, lam)?)?;
    Ok((d1, d2))
}

impl BeamState {
    /// All-zero state with freshly built dampers.
    pub fn zero(cfg: &BeamConfig, grid: &Grid, n_modes: usize) -> Result<Self> {
        cfg.validate()?;
        let (damper1, damper2) = build_dampers(cfg, grid, n_modes)?;
        let n = grid.n_cells + 1;
        Ok(Self {
            v: vec![0.0; n],
            v_t: vec![0.0; n],
            p: vec![0.0; n],
            p_t: vec![0.0; n],
            theta: cfg.thermal.then(|| vec![0.0; grid.n_cells]),
            damper1,
            damper2,
        })
    }

    /// Check array lengths and the Dirichlet conditions at `x = 0`.
    pub fn check_invariants(&self, cfg: &BeamConfig, grid: &Grid) -> Result<()> {
        let n = grid.n_cells + 1;
        let mut problems = Vec::new();
        for (name, arr) in [("v", &self.v), ("v_t", &self.v_t), ("p", &self.p), ("p_t", &self.p_t)] {
            if arr.len() != n {
                problems.push(format!("{name} has length {}, expected {n}", arr.len()));
            } else if arr[0] != 0.0 {
                problems.push(format!("{name}[0] = {} must be 0", arr[0]));
            }
        }
        match (&self.theta, cfg.thermal) {
            (Some(th), true) => {
                if th.len() != grid.n_cells {
                    problems.push(format!(
                        "theta has length {}, expected {}",
                        th.len(),
                        grid.n_cells
                    ));
                }
            }
            (None, true) => problems.push("thermal model requires theta".into()),
            (Some(_), false) => problems.push("non-thermal model carries theta".into()),
            (None, false) => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(PiezoError::Domain(problems.join("; ")))
        }
    }

    pub fn layout(&self) -> Layout {
        Layout {
            nodes: self.v.len(),
            thermal: self.theta.is_some(),
            modes1: self.damper1.len(),
            modes2: self.damper2.len(),
        }
    }

    /// Stack the state into the flat ordering described by [`Layout`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.layout().len());
        y.extend_from_slice(&self.v);
        y.extend_from_slice(&self.v_t);
        y.extend_from_slice(&self.p);
        y.extend_from_slice(&self.p_t);
        if let Some(th) = &self.theta {
            y.extend_from_slice(th);
        }
        y.extend_from_slice(self.damper1.modal_state());
        y.extend_from_slice(self.damper2.modal_state());
        y
    }

    /// Overwrite the state from a flat vector with the same layout.
    pub fn assign_flat(&mut self, y: &[f64]) {
        let lay = self.layout();
        assert_eq!(y.len(), lay.len(), "flat vector length mismatch");
        self.v.copy_from_slice(&y[lay.v()]);
        self.v_t.copy_from_slice(&y[lay.v_t()]);
        self.p.copy_from_slice(&y[lay.p()]);
        self.p_t.copy_from_slice(&y[lay.p_t()]);
        if let Some(th) = &mut self.theta {
            th.copy_from_slice(&y[lay.theta()]);
        }
        self.damper1.modal_state_mut().copy_from_slice(&y[lay.phi1()]);
        self.damper2.modal_state_mut().copy_from_slice(&y[lay.phi2()]);
    }

    /// Multiply every field, modal states included, by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        let y: Vec<f64> = self.to_flat().iter().map(|v| v * s).collect();
        out.assign_flat(&y);
        out
    }
}

/// Flat ordering `[v, v_t, p, p_t, theta?, phi1, phi2]` with nodal blocks of
/// `n_cells + 1` entries and a temperature block of `n_cells` entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub nodes: usize,
    pub thermal: bool,
    pub modes1: usize,
    pub modes2: usize,
}

impl Layout {
    fn block(&self, k: usize) -> std::ops::Range<usize> {
        k * self.nodes..(k + 1) * self.nodes
    }
    fn modal_start(&self) -> usize {
        4 * self.nodes + if self.thermal { self.nodes - 1 } else { 0 }
    }
    pub fn v(&self) -> std::ops::Range<usize> {
        self.block(0)
    }
    pub fn v_t(&self) -> std::ops::Range<usize> {
        self.block(1)
    }
    pub fn p(&self) -> std::ops::Range<usize> {
        self.block(2)
    }
    pub fn p_t(&self) -> std::ops::Range<usize> {
        self.block(3)
    }
    /// Empty when the model is non-thermal.
    pub fn theta(&self) -> std::ops::Range<usize> {
        if self.thermal {
            4 * self.nodes..5 * self.nodes - 1
        } else {
            0..0
        }
    }
    pub fn phi1(&self) -> std::ops::Range<usize> {
        let s = self.modal_start();
        s..s + self.modes1
    }
    pub fn phi2(&self) -> std::ops::Range<usize> {
        let s = self.modal_start() + self.modes1;
        s..s + self.modes2
    }
    pub fn len(&self) -> usize {
        self.modal_start() + self.modes1 + self.modes2
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Unique `(V_x(L), P_x(L))` satisfying both boundary equations for damper outputs `(o1, o2)`.
pub fn solve_boundary_gradients(cfg: &BeamConfig, o1: f64, o2: f64) -> (f64, f64) {
    // [[alpha, -gamma beta], [-gamma beta, beta]] (vx, px) = (-l1 o1, -l2 o2)
    let r1 = -cfg.frac1.gain * o1;
    let r2 = -cfg.frac2.gain * o2;
    let off = -cfg.gamma * cfg.beta;
    let det = cfg.alpha * cfg.beta - off * off;
    ((cfg.beta * r1 - off * r2) / det, (cfg.alpha * r2 - off * r1) / det)
}

/// Semi-discrete right-hand side on a flat vector (see [`Layout`]).
///
/// `d1`, `d2` provide the mode tables; their modal states are ignored in
/// favour of the entries of `y`.
pub fn rhs_flat(
    cfg: &BeamConfig,
    grid: &Grid,
    d1: &DiffusiveOperator,
    d2: &DiffusiveOperator,
    y: &[f64],
    out: &mut [f64],
) {
    let n = grid.n_cells;
    let dx = grid.dx;
    let lay = Layout {
        nodes: n + 1,
        thermal: cfg.thermal,
        modes1: d1.len(),
        modes2: d2.len(),
    };
    debug_assert_eq!(y.len(), lay.len());
    let v = &y[lay.v()];
    let f = &y[lay.v_t()];
    let p = &y[lay.p()];
    let g = &y[lay.p_t()];
    let phi1 = &y[lay.phi1()];
    let phi2 = &y[lay.phi2()];
    let o1 = d1.params().output_scale() * d1.weighted_kernel_sum(phi1);
    let o2 = d2.params().output_scale() * d2.weighted_kernel_sum(phi2);
    let edge1 = -cfg.frac1.gain * o1;
    let edge2 = -cfg.frac2.gain * o2;
    let delta = cfg.effective_delta();
    let gb = cfg.gamma * cfg.beta;

    out.iter_mut().for_each(|o| *o = 0.0);

    // positions
    out[lay.v()][1..].copy_from_slice(&f[1..]);
    out[lay.p()][1..].copy_from_slice(&g[1..]);

    // stresses on cell midpoints j + 1/2 are computed on the fly
    let stress = |j: usize| -> (f64, f64) {
        let dv = (v[j + 1] - v[j]) / dx;
        let dp = (p[j + 1] - p[j]) / dx;
        (cfg.alpha * dv - gb * dp, cfg.beta * dp - gb * dv)
    };
    let mut left = stress(0);
    let vt_off = lay.v_t().start;
    let pt_off = lay.p_t().start;
    for j in 1..n {
        let right = stress(j);
        out[vt_off + j] = (right.0 - left.0) / (dx * cfg.rho);
        out[pt_off + j] = (right.1 - left.1) / (dx * cfg.mag_mu);
        left = right;
    }
    out[vt_off + n] = 2.0 * (edge1 - left.0) / (dx * cfg.rho);
    out[pt_off + n] = 2.0 * (edge2 - left.1) / (dx * cfg.mag_mu);

    if cfg.thermal {
        let th = &y[lay.theta()];
        let th_off = lay.theta().start;
        // ghosts: theta_{-1/2} = theta_{1/2}, theta_{n+1/2} = -theta_{n-1/2}
        let cell = |j: isize| -> f64 {
            if j < 0 {
                th[0]
            } else if j as usize >= n {
                -th[n - 1]
            } else {
                th[j as usize]
            }
        };
        for j in 1..n {
            let grad = (th[j] - th[j - 1]) / dx;
            out[vt_off + j] -= delta * grad / cfg.rho;
        }
        // half cell at x = L: gradient from theta(L) = 0 to the last centre
        out[vt_off + n] -= delta * (-2.0 * th[n - 1] / dx) / cfg.rho;

        for j in 0..n {
            let c = j as isize;
            let lap = (cell(c + 1) - 2.0 * th[j] + cell(c - 1)) / (dx * dx);
            let div = (f[j + 1] - f[j]) / dx;
            out[th_off + j] = (cfg.kappa * lap - delta * div) / cfg.c_heat;
        }
    }

    let u1 = f[n];
    let u2 = g[n];
    let off1 = lay.phi1().start;
    for k in 0..d1.len() {
        out[off1 + k] = -d1.decay_rate(k) * phi1[k] + d1.kernel_values()[k] * u1;
    }
    let off2 = lay.phi2().start;
    for k in 0..d2.len() {
        out[off2 + k] = -d2.decay_rate(k) * phi2[k] + d2.kernel_values()[k] * u2;
    }
}

fn rate_from_flat(state: &BeamState, dy: &[f64]) -> StateRate {
    let lay = state.layout();
    StateRate {
        v: dy[lay.v()].to_vec(),
        v_t: dy[lay.v_t()].to_vec(),
        p: dy[lay.p()].to_vec(),
        p_t: dy[lay.p_t()].to_vec(),
        theta: lay.thermal.then(|| dy[lay.theta()].to_vec()),
        phi1: dy[lay.phi1()].to_vec(),
        phi2: dy[lay.phi2()].to_vec(),
    }
}

fn rhs(cfg: &BeamConfig, grid: &Grid, state: &BeamState) -> StateRate {
    let y = state.to_flat();
    let mut dy = vec![0.0; y.len()];
    rhs_flat(cfg, grid, &state.damper1, &state.damper2, &y, &mut dy);
    rate_from_flat(state, &dy)
}

/// Time derivative of the non-thermal system.
pub fn rhs_nonthermal(cfg: &BeamConfig, grid: &Grid, state: &BeamState) -> Result<StateRate> {
    if cfg.thermal {
        return Err(PiezoError::Config(vec![
            "thermal flag set; use rhs_thermal".into()
        ]));
    }
    state.check_invariants(cfg, grid)?;
    Ok(rhs(cfg, grid, state))
}

/// Time derivative of the thermal system.
pub fn rhs_thermal(cfg: &BeamConfig, grid: &Grid, state: &BeamState) -> Result<StateRate> {
    if !cfg.thermal {
        return Err(PiezoError::Config(vec![
            "thermal flag unset; use rhs_nonthermal".into()
        ]));
    }
    state.check_invariants(cfg, grid)?;
    Ok(rhs(cfg, grid, state))
}

/// Names accepted by [`initial_condition_library`].
pub const INITIAL_CONDITIONS: &[&str] = &["zero", "fundamental", "second", "bump", "pluck"];

/// Library of compatible initial states, dampers at rest.
///
/// * `zero`: everything zero.
/// * `fundamental`: `V = sin(pi x / 2L)`, `theta = cos(pi x / 2L)` (at cell centres).
/// * `second`: `V = sin(3 pi x / 2L)`, `P = sin(pi x / 2L) / 2`, `theta = cos(3 pi x / 2L)`.
/// * `bump`: Gaussian velocity pulse centred at `L/2`, width `L/20`.
/// * `pluck`: `V = x / L` (linear, so the boundary stress is initially nonzero),
///   exciting every mode of the grid.
pub fn initial_condition_library(
    name: &str,
    cfg: &BeamConfig,
    grid: &Grid,
    n_modes: usize,
) -> Result<BeamState> {
    let mut state = BeamState::zero(cfg, grid, n_modes)?;
    let len = grid.length();
    let k = PI / (2.0 * len);
    let n = grid.n_cells;
    match name {
        "zero" => {}
        "fundamental" => {
            for j in 0..=n {
                state.v[j] = (k * grid.x(j)).sin();
            }
            if let Some(th) = &mut state.theta {
                for (t, xc) in th.iter_mut().zip(grid.centres()) {
                    *t = (k * xc).cos();
                }
            }
        }
        "second" => {
            for j in 0..=n {
                state.v[j] = (3.0 * k * grid.x(j)).sin();
                state.p[j] = 0.5 * (k * grid.x(j)).sin();
            }
            if let Some(th) = &mut state.theta {
                for (t, xc) in th.iter_mut().zip(grid.centres()) {
                    *t = (3.0 * k * xc).cos();
                }
            }
        }
        "bump" => {
            let width = len / 20.0;
            for j in 1..=n {
                let s = (grid.x(j) - 0.5 * len) / width;
                state.v_t[j] = (-s * s).exp();
            }
        }
        "pluck" => {
            for j in 0..=n {
                state.v[j] = grid.x(j) / len;
            }
        }
        other => return Err(PiezoError::UnknownInitialCondition(other.to_string())),
    }
    // exact zeros at the pinned nodes regardless of rounding in sin
    state.v[0] = 0.0;
    state.p[0] = 0.0;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize) -> Grid {
        Grid::new(n, 1.0).unwrap()
    }

    #[test]
    fn config_constraints() {
        assert!(BeamConfig::paper_nonthermal().validate().is_ok());
        assert!(BeamConfig::paper_thermal().validate().is_ok());
        let mut bad = BeamConfig::paper_nonthermal();
        bad.alpha = 1.0; // alpha = gamma^2 beta
        bad.rho = -1.0;
        let msgs = bad.violations("beam.");
        assert!(msgs.iter().any(|m| m.contains("alpha - gamma^2*beta must be > 0")));
        assert!(msgs.iter().any(|m| m.starts_with("beam.rho")));
        assert_eq!(msgs.len(), 2);
    }

    #[test]
    fn thermal_fields_ignored_when_off() {
        let mut cfg = BeamConfig::paper_nonthermal();
        cfg.kappa = -5.0;
        cfg.delta = 3.0;
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.effective_delta(), 0.0);
    }

    #[test]
    fn grid_basics() {
        assert!(Grid::new(7, 1.0).is_err());
        let g = Grid::new(10, 2.0).unwrap();
        assert_eq!(g.x(0), 0.0);
        assert_eq!(g.x(10), 2.0);
        assert_relative_eq!(g.dx, 0.2);
        let total: f64 = (0..=10).map(|j| g.weight(j)).sum();
        assert_relative_eq!(total, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn boundary_solve() {
        let cfg = BeamConfig::paper_nonthermal();
        assert_eq!(solve_boundary_gradients(&cfg, 0.0, 0.0), (0.0, 0.0));
        let (vx, px) = solve_boundary_gradients(&cfg, 1.0, 0.0);
        assert_relative_eq!(vx, -1.0, epsilon = 1e-15);
        assert_relative_eq!(px, -1.0, epsilon = 1e-15);
        let (vx2, px2) = solve_boundary_gradients(&cfg, 2.0, 0.0);
        assert_eq!((vx2, px2), (2.0 * vx, 2.0 * px));
        // both boundary equations hold
        let (vx, px) = solve_boundary_gradients(&cfg, 0.3, -1.7);
        assert_relative_eq!(cfg.alpha * vx - cfg.gamma * cfg.beta * px, -0.3, epsilon = 1e-15);
        assert_relative_eq!(cfg.beta * px - cfg.gamma * cfg.beta * vx, 1.7, epsilon = 1e-15);
    }

    #[test]
    fn zero_state_is_equilibrium() {
        for cfg in [BeamConfig::paper_nonthermal(), BeamConfig::paper_thermal()] {
            let g = grid(16);
            let s = initial_condition_library("zero", &cfg, &g, 16).unwrap();
            let r = rhs(&cfg, &g, &s);
            assert!(r.v_t.iter().chain(&r.p_t).chain(&r.phi1).all(|&x| x == 0.0));
        }
    }

    #[test]
    fn rhs_flag_checks() {
        let g = grid(16);
        let cfg = BeamConfig::paper_nonthermal();
        let s = initial_condition_library("fundamental", &cfg, &g, 8).unwrap();
        assert!(rhs_thermal(&cfg, &g, &s).is_err());
        assert!(rhs_nonthermal(&cfg, &g, &s).is_ok());
        let cfg_t = BeamConfig::paper_thermal();
        let s_t = initial_condition_library("fundamental", &cfg_t, &g, 8).unwrap();
        assert!(rhs_nonthermal(&cfg_t, &g, &s_t).is_err());
        let r = rhs_thermal(&cfg_t, &g, &s_t).unwrap();
        assert_eq!(r.theta.unwrap().len(), 16);
    }

    #[test]
    fn library_states_are_compatible() {
        let g = grid(20);
        for cfg in [BeamConfig::paper_nonthermal(), BeamConfig::paper_thermal()] {
            for name in INITIAL_CONDITIONS {
                let s = initial_condition_library(name, &cfg, &g, 8).unwrap();
                s.check_invariants(&cfg, &g).unwrap();
                assert!(s.damper1.modal_state().iter().all(|&x| x == 0.0));
            }
        }
        assert!(matches!(
            initial_condition_library("wiggle", &BeamConfig::paper_thermal(), &g, 8),
            Err(PiezoError::UnknownInitialCondition(_))
        ));
    }

    #[test]
    fn flat_round_trip() {
        let cfg = BeamConfig::paper_thermal();
        let g = grid(12);
        let s = initial_condition_library("second", &cfg, &g, 6).unwrap();
        let y = s.to_flat();
        assert_eq!(y.len(), s.layout().len());
        let mut t = BeamState::zero(&cfg, &g, 6).unwrap();
        t.assign_flat(&y);
        assert_eq!(s, t);
    }

    #[test]
    fn heat_mode_decays_at_continuum_rate() {
        // delta = 0: theta = cos(pi x / 2L) decays like exp(-kappa pi^2 t / (4 c L^2))
        let mut cfg = BeamConfig::paper_thermal();
        cfg.delta = 0.0;
        cfg.kappa = 0.7;
        cfg.c_heat = 1.3;
        let expect = cfg.kappa * PI * PI / (4.0 * cfg.c_heat);
        let mut prev_err = f64::INFINITY;
        for n in [16, 32, 64] {
            let g = grid(n);
            let s = initial_condition_library("fundamental", &cfg, &g, 8).unwrap();
            let r = rhs_thermal(&cfg, &g, &s).unwrap();
            let th = s.theta.as_ref().unwrap();
            let rates: Vec<f64> = r.theta.unwrap().iter().zip(th).map(|(d, t)| -d / t).collect();
            // the sampled cosine is an exact eigenvector of the discrete operator
            for w in rates.windows(2) {
                assert_relative_eq!(w[0], w[1], max_relative = 1e-9);
            }
            let err = (rates[0] - expect).abs() / expect;
            assert!(err < 0.3 * prev_err, "rate error {err} at n = {n}");
            prev_err = err;
        }
        assert!(prev_err < 1e-3);
    }
}
