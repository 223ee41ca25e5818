//! Oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use piezobeam_core::time_integrator::default_dt;
use piezobeam_core::{BeamConfig, BeamState, Grid, MidpointStepper};

/// `int_R |xi|^(2a-1) / (xi^2 + eta + lam) dxi`, evaluated by hand: substituting
/// `xi = sqrt(s) t` gives a Beta integral equal to `pi / sin(a pi) s^(a-1)`.
pub fn moment_oracle(a: f64, eta: f64, lam: f64) -> f64 {
    PI / (a * PI).sin() * (eta + lam).powf(a - 1.0)
}

/// Exact fields of the manufactured solution
/// `V = sin(kx) cos(wt)`, `P = sin(kx) sin(wt) / 2`, `theta = cos(kx) exp(-t)`
/// with `k = pi / (2L)`. Both beam fields have zero slope at `x = L` and the
/// temperature satisfies `theta_x(0) = theta(L) = 0`.
pub struct Manufactured {
    pub k: f64,
    pub w: f64,
}

impl Manufactured {
    pub fn new(length: f64) -> Self {
        Self { k: PI / (2.0 * length), w: 1.3 }
    }

    /// `(V, V_t, P, P_t)` at `(x, t)`.
    pub fn beam(&self, x: f64, t: f64) -> [f64; 4] {
        let s = (self.k * x).sin();
        let (c, sn) = ((self.w * t).cos(), (self.w * t).sin());
        [s * c, -self.w * s * sn, 0.5 * s * sn, 0.5 * self.w * s * c]
    }

    pub fn theta(&self, x: f64, t: f64) -> f64 {
        (self.k * x).cos() * (-t).exp()
    }

    /// Forcing of the velocity equations: exact acceleration minus the
    /// continuum right-hand side.
    pub fn beam_forcing(&self, cfg: &BeamConfig, x: f64, t: f64) -> (f64, f64) {
        let (k, w) = (self.k, self.w);
        let s = (k * x).sin();
        let (c, sn) = ((w * t).cos(), (w * t).sin());
        let (v_tt, v_xx) = (-w * w * s * c, -k * k * s * c);
        let (p_tt, p_xx) = (-0.5 * w * w * s * sn, -0.5 * k * k * s * sn);
        let delta = if cfg.thermal { cfg.delta } else { 0.0 };
        let theta_x = -k * (k * x).sin() * (-t).exp();
        let fv = v_tt - (cfg.alpha * v_xx - cfg.gamma * cfg.beta * p_xx - delta * theta_x) / cfg.rho;
        let fp = p_tt - (cfg.beta * p_xx - cfg.gamma * cfg.beta * v_xx) / cfg.mag_mu;
        (fv, fp)
    }

    /// Forcing of the heat equation `c theta_t = kappa theta_xx - delta V_xt`.
    pub fn heat_forcing(&self, cfg: &BeamConfig, x: f64, t: f64) -> f64 {
        let (k, w) = (self.k, self.w);
        let theta = self.theta(x, t);
        let v_xt = -w * k * (k * x).cos() * (w * t).sin();
        -theta - (cfg.kappa * (-k * k * theta) - cfg.delta * v_xt) / cfg.c_heat
    }
}

/// Discrete L2 error at `t_end` of a forced run on `n_cells` cells started from
/// the exact solution. Feedback gains must be zero.
pub fn manufactured_error(cfg: &BeamConfig, n_cells: usize, t_end: f64) -> f64 {
    assert!(cfg.frac1.gain == 0.0 && cfg.frac2.gain == 0.0);
    let grid = Grid::new(n_cells, cfg.length).unwrap();
    let exact = Manufactured::new(cfg.length);
    let mut state = BeamState::zero(cfg, &grid, 16).unwrap();
    let fill = |state: &mut BeamState, t: f64| {
        for j in 0..=n_cells {
            let f = exact.beam(grid.x(j), t);
            state.v[j] = f[0];
            state.v_t[j] = f[1];
            state.p[j] = f[2];
            state.p_t[j] = f[3];
        }
        if let Some(th) = state.theta.as_mut() {
            for (slot, x) in th.iter_mut().zip(grid.centres()) {
                *slot = exact.theta(x, t);
            }
        }
    };
    fill(&mut state, 0.0);
    let steps = (t_end / default_dt(cfg, &grid)).ceil() as usize;
    let dt = t_end / steps as f64;
    let stepper = MidpointStepper::new(cfg, &grid, &state, dt).unwrap();
    let lay = state.layout();
    let mut source = vec![0.0; lay.len()];
    for i in 0..steps {
        let t = (i as f64 + 0.5) * dt;
        for j in 1..=n_cells {
            let (fv, fp) = exact.beam_forcing(cfg, grid.x(j), t);
            source[lay.v_t().start + j] = fv;
            source[lay.p_t().start + j] = fp;
        }
        if cfg.thermal {
            for (c, x) in grid.centres().into_iter().enumerate() {
                source[lay.theta().start + c] = exact.heat_forcing(cfg, x, t);
            }
        }
        stepper.step_forced(&mut state, (i + 1) as f64 * dt, Some(&source));
    }
    let mut err = 0.0;
    for j in 0..=n_cells {
        let f = exact.beam(grid.x(j), t_end);
        let got = [state.v[j], state.v_t[j], state.p[j], state.p_t[j]];
        err += grid.weight(j) * got.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    if let Some(th) = &state.theta {
        for (v, x) in th.iter().zip(grid.centres()) {
            err += grid.dx * (v - exact.theta(x, t_end)).powi(2);
        }
    }
    err.sqrt()
}

/// Observed orders `log2(e_k / e_{k+1})` of a halving sequence.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
