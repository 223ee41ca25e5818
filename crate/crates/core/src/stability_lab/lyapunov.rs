//! Perturbed-energy Lyapunov functional for the thermal system.
//!
//! ```text
//! L = N E + N1 I1 + N2 I2 + N3 I3 + N4 I4
//! I1 = int rho V_t V + mag_mu P_t P
//! I2 = rho c int theta(x) int_x^L V_t(y) dy dx
//! I3 = rho int V_t V + gamma mag_mu int P_t V
//! I4 = rho int V_t (gamma V - P) + gamma mag_mu int P_t (gamma V - P)
//! ```
//!
//! The multipliers must satisfy `N1 > 3` and three further lower bounds, and the
//! auxiliary constants are tied to them by `N3/2 = eta3`, `3 N4 eta4 = 4 beta`,
//! `N1 eta1 = beta`, `N2 eta2 = beta`. With the coefficients `lambda_1..6` all
//! positive, `dL/dt <= -N0 E` with
//! `N0 = 2 min{lambda1 eta, lambda2/c, lambda3/rho, lambda4/mag_mu, lambda5/alpha1, lambda6/beta}`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::beam_model::{BeamConfig, BeamState, Grid};
use crate::error::{PiezoError, Result};
use crate::time_integrator::{compute_energy, EnergyReport};

/// Multipliers and auxiliary constants of the Lyapunov functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConfig {
    pub n: f64,
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
    pub n4: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub eta4: f64,
    /// Poincare constant for functions vanishing at one end.
    pub cp: f64,
    /// Bound `max(eta_i^(a_i - 1) l_i)` on the damper output.
    pub m_bound: f64,
}

/// Sharp Poincare constant `4 L^2 / pi^2` on `(0, L)` for functions vanishing at one end.
pub fn poincare_constant(length: f64) -> f64 {
    4.0 * length * length / (PI * PI)
}

/// `max(eta1^(a1-1) l1, eta2^(a2-1) l2)`.
pub fn m_bound(cfg: &BeamConfig) -> f64 {
    let m = |f: &crate::frac_diffusive::FracParams| f.eta.powf(f.a - 1.0) * f.gain;
    m(&cfg.frac1).max(m(&cfg.frac2))
}

fn weakest_eta(cfg: &BeamConfig) -> f64 {
    cfg.frac1.eta.min(cfg.frac2.eta)
}

/// Shorthand `C_N4 = 3 alpha1^2 N4 / (4 beta)`.
fn c_n4(cfg: &BeamConfig, n4: f64) -> f64 {
    3.0 * cfg.alpha1().powi(2) * n4 / (4.0 * cfg.beta)
}

/// Shorthand `C_eta2 = Cp c delta + (gamma^2 beta^2 rho^2 kappa^2 + c^2 Cp alpha1^2 + c^2 Cp L) / (2 eta2)`.
fn c_eta2(cfg: &BeamConfig, cp: f64, eta2: f64) -> f64 {
    let c = cfg.c_heat;
    cp * c * cfg.delta
        + (cfg.gamma.powi(2) * cfg.beta.powi(2) * cfg.rho.powi(2) * cfg.kappa.powi(2)
            + c * c * cp * cfg.alpha1().powi(2)
            + c * c * cp * cfg.length)
            / (2.0 * eta2)
}

/// Right-hand side of the displayed lower bound on `N4`.
fn n4_floor(cfg: &BeamConfig, n1: f64) -> f64 {
    let mu = cfg.mag_mu;
    2.0 * cfg.beta / (3.0 * cfg.gamma * mu) + mu * n1 + cfg.gamma * mu / 8.0
}

/// Value of `N4` at which `lambda4` vanishes.
fn n4_root(cfg: &BeamConfig, n1: f64) -> f64 {
    let mu = cfg.mag_mu;
    (2.0 * cfg.beta / 3.0 + n1 * mu + cfg.gamma.powi(2) * mu * mu / 8.0) / (cfg.gamma * mu)
}

fn n3_floor(cfg: &BeamConfig, n1: f64, n4: f64) -> f64 {
    let a1 = cfg.alpha1();
    (2.0 + cfg.gamma.powi(2)) * cfg.beta / a1 + 0.5 + c_n4(cfg, n4) * n4 / a1 - n1
}

fn n2_floor(cfg: &BeamConfig, n1: f64, n3: f64, n4: f64) -> f64 {
    let (d, rho, g, b, mu) = (cfg.delta, cfg.rho, cfg.gamma, cfg.beta, cfg.mag_mu);
    1.0 / (2.0 * g * g * b * d * rho)
        + n1 / d
        + n3 / d
        + n3 * n3 / (2.0 * d * rho)
        + g * n4 / d
        + 3.0 * n4 * n4 / (4.0 * b * d * rho) * (rho * rho + g.powi(4) * mu * mu)
}

/// Lower bounds on `N` from `lambda1 > 0` and `lambda2 > 0`.
fn n_floors(cfg: &BeamConfig, l: &LyapunovConfig) -> (f64, f64) {
    let a1 = cfg.alpha1();
    let (m, len, cp, d) = (l.m_bound, cfg.length, l.cp, cfg.delta);
    let from_l1 = l.n1 * m * len / l.eta1
        + l.n2 * l.eta2 * m
        + l.n3 * 4.0 * m * len * l.eta3 / a1
        + l.n4 * a1 * a1 * m / l.eta4;
    let from_l2 = (l.n1 * d * d * cp / (2.0 * l.eta1)
        + l.n2 * c_eta2(cfg, cp, l.eta2)
        + l.n3 * 4.0 * cp * d * d * l.eta3 / a1
        + l.n4 * cp * d * d / l.eta4)
        / cfg.kappa;
    (from_l1, from_l2)
}

impl LyapunovConfig {
    /// Coefficients `lambda_1..lambda_6`.
    pub fn lambdas(&self, cfg: &BeamConfig) -> [f64; 6] {
        let (rho, g, b, mu, a1) = (cfg.rho, cfg.gamma, cfg.beta, cfg.mag_mu, cfg.alpha1());
        let (f1, f2) = n_floors(cfg, self);
        [
            self.n - f1,
            self.n * cfg.kappa - f2 * cfg.kappa,
            self.n2 * cfg.delta * rho
                - 1.0 / (2.0 * g * g * b)
                - self.n1 * rho
                - self.n3 * rho
                - self.n3 * self.eta3
                - self.n4 * g * rho
                - 3.0 * self.n4 * self.n4 / (4.0 * b) * (rho * rho + g.powi(4) * mu * mu),
            self.n4 * g * mu - 2.0 * b / 3.0 - self.n1 * mu - g * g * mu * mu / 8.0,
            self.n1 * a1 - (2.0 + g * g) * b + self.n3 * a1 - a1 / 2.0 - c_n4(cfg, self.n4) * self.n4,
            self.n1 * b - 3.0 * b,
        ]
    }

    /// Decay constant `N0`.
    pub fn n0(&self, cfg: &BeamConfig) -> f64 {
        let l = self.lambdas(cfg);
        let scaled = [
            l[0] * weakest_eta(cfg),
            l[1] / cfg.c_heat,
            l[2] / cfg.rho,
            l[3] / cfg.mag_mu,
            l[4] / cfg.alpha1(),
            l[5] / cfg.beta,
        ];
        2.0 * scaled.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Check every constraint; the error lists each violated inequality.
    pub fn validate(&self, cfg: &BeamConfig) -> Result<()> {
        let mut bad = Vec::new();
        if !(cfg.thermal && cfg.delta > 0.0) {
            bad.push("the Lyapunov functional needs the thermal model with delta > 0".to_string());
            return Err(PiezoError::LyapunovConstraint(bad.join("; ")));
        }
        if !(self.n1 > 3.0) {
            bad.push(format!("N1 > 3 violated (N1 = {})", self.n1));
        }
        let f4 = n4_floor(cfg, self.n1);
        if !(self.n4 > f4) {
            bad.push(format!(
                "N4 > 2 beta/(3 gamma mag_mu) + mag_mu N1 + gamma mag_mu/8 = {f4} violated (N4 = {})",
                self.n4
            ));
        }
        let f3 = n3_floor(cfg, self.n1, self.n4);
        if !(self.n3 > f3) {
            bad.push(format!(
                "N3 > (2+gamma^2) beta/alpha1 + 1/2 + C_N4 N4/alpha1 - N1 = {f3} violated (N3 = {})",
                self.n3
            ));
        }
        let f2 = n2_floor(cfg, self.n1, self.n3, self.n4);
        if !(self.n2 > f2) {
            bad.push(format!("N2 lower bound {f2} violated (N2 = {})", self.n2));
        }
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs());
        let couplings = [
            ("N3/2 = eta3", self.n3 / 2.0, self.eta3),
            ("3 N4 eta4 = 4 beta", 3.0 * self.n4 * self.eta4, 4.0 * cfg.beta),
            ("N1 eta1 = beta", self.n1 * self.eta1, cfg.beta),
            ("N2 eta2 = beta", self.n2 * self.eta2, cfg.beta),
        ];
        for (name, lhs, rhs) in couplings {
            if !close(lhs, rhs) {
                bad.push(format!("coupling {name} violated ({lhs} vs {rhs})"));
            }
        }
        for (k, l) in self.lambdas(cfg).iter().enumerate() {
            if !(*l > 0.0) {
                bad.push(format!("lambda{} = {l} must be > 0", k + 1));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(PiezoError::LyapunovConstraint(bad.join("; ")))
        }
    }
}

fn slack(x: f64) -> f64 {
    if x > 0.0 {
        1.1 * x
    } else {
        0.1
    }
}

/// Pick multipliers in the order `N1, N4, N3, N2, N`, each 10% above its bound.
///
/// `N4` is taken above both the displayed bound and the root of `lambda4`; the
/// two coincide when `gamma = mag_mu = 1`.
pub fn feasible_constants(cfg: &BeamConfig) -> Result<LyapunovConfig> {
    cfg.validate()?;
    let n1 = slack(3.0);
    let n4 = slack(n4_floor(cfg, n1).max(n4_root(cfg, n1)));
    let n3 = slack(n3_floor(cfg, n1, n4));
    let n2 = if cfg.thermal && cfg.delta > 0.0 {
        slack(n2_floor(cfg, n1, n3, n4))
    } else {
        return Err(PiezoError::LyapunovConstraint(
            "the Lyapunov functional needs the thermal model with delta > 0".into(),
        ));
    };
    let mut out = LyapunovConfig {
        n: 0.0,
        n1,
        n2,
        n3,
        n4,
        eta1: cfg.beta / n1,
        eta2: cfg.beta / n2,
        eta3: n3 / 2.0,
        eta4: 4.0 * cfg.beta / (3.0 * n4),
        cp: poincare_constant(cfg.length),
        m_bound: m_bound(cfg),
    };
    let (f1, f2) = n_floors(cfg, &out);
    out.n = slack(f1.max(f2));
    out.validate(cfg)?;
    Ok(out)
}

/// `(I1, I2, I3, I4)` for a thermal state.
pub fn evaluate_functionals(cfg: &BeamConfig, grid: &Grid, state: &BeamState) -> Result<[f64; 4]> {
    let theta = state
        .theta
        .as_ref()
        .ok_or_else(|| PiezoError::Domain("I2 needs a thermal state".into()))?;
    let n = grid.n_cells;
    let dx = grid.dx;
    let (v, f, p, g) = (&state.v, &state.v_t, &state.p, &state.p_t);
    let (rho, mu, gm) = (cfg.rho, cfg.mag_mu, cfg.gamma);
    let (mut i1, mut i3, mut i4) = (0.0, 0.0, 0.0);
    for j in 0..=n {
        let w = grid.weight(j);
        let mix = gm * v[j] - p[j];
        i1 += w * (rho * f[j] * v[j] + mu * g[j] * p[j]);
        i3 += w * (rho * f[j] * v[j] + gm * mu * g[j] * v[j]);
        i4 += w * (rho * f[j] * mix + gm * mu * g[j] * mix);
    }
    // tail[j] = int_{x_j}^L V_t by cumulative trapezoid from the right
    let mut tail = vec![0.0; n + 1];
    for j in (0..n).rev() {
        tail[j] = tail[j + 1] + 0.5 * dx * (f[j] + f[j + 1]);
    }
    let mut i2 = 0.0;
    for (j, th) in theta.iter().enumerate() {
        // from the cell centre to node j+1, with V_t interpolated linearly
        let inner = tail[j + 1] + dx * (f[j] + 3.0 * f[j + 1]) / 8.0;
        i2 += dx * th * inner;
    }
    Ok([i1, rho * cfg.c_heat * i2, i3, i4])
}

/// Energy, functionals and residual at one instant of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSample {
    pub t: f64,
    pub energy: f64,
    pub functionals: [f64; 4],
    pub identity_residual: f64,
}

impl LyapunovSample {
    pub fn from_state(cfg: &BeamConfig, grid: &Grid, state: &BeamState, report: &EnergyReport) -> Result<Self> {
        Ok(Self {
            t: report.t,
            energy: compute_energy(cfg, grid, state),
            functionals: evaluate_functionals(cfg, grid, state)?,
            identity_residual: report.identity_residual,
        })
    }
}

/// Outcome of [`lyapunov_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub constants: LyapunovConfig,
    pub lambdas: [f64; 6],
    pub n0: f64,
    /// `min L/E` over the run.
    pub m1: f64,
    /// `max L/E` over the run.
    pub m2: f64,
    pub sandwich_holds: bool,
    /// Fraction of steps with `dL/dt <= -N0 E + tol`.
    pub derivative_fraction: f64,
    pub steps_checked: usize,
    /// Multiplier on the step's identity residual used as additive tolerance.
    pub tolerance_factor: f64,
}

/// Additive tolerance of the derivative check, in units of the identity residual.
pub const DERIVATIVE_TOLERANCE_FACTOR: f64 = 10.0;

/// Evaluate the Lyapunov functional along consecutive samples of one run.
///
/// The discrete derivative over each step is compared with `-N0` times the
/// mean energy of its endpoints.
pub fn lyapunov_check(cfg: &BeamConfig, samples: &[LyapunovSample], lcfg: &LyapunovConfig) -> Result<LyapunovReport> {
    lcfg.validate(cfg)?;
    if samples.len() < 2 {
        return Err(PiezoError::InsufficientSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let n0 = lcfg.n0(cfg);
    let mult = [lcfg.n1, lcfg.n2, lcfg.n3, lcfg.n4];
    let functional = |s: &LyapunovSample| -> f64 {
        lcfg.n * s.energy + mult.iter().zip(&s.functionals).map(|(m, i)| m * i).sum::<f64>()
    };
    let values: Vec<f64> = samples.iter().map(functional).collect();
    let (mut m1, mut m2) = (f64::INFINITY, f64::NEG_INFINITY);
    for (s, l) in samples.iter().zip(&values) {
        if s.energy > 0.0 {
            let r = l / s.energy;
            m1 = m1.min(r);
            m2 = m2.max(r);
        }
    }
    let mut ok = 0usize;
    for k in 0..samples.len() - 1 {
        let (a, b) = (&samples[k], &samples[k + 1]);
        let dt = b.t - a.t;
        let dl = (values[k + 1] - values[k]) / dt;
        let bound = -n0 * 0.5 * (a.energy + b.energy) + DERIVATIVE_TOLERANCE_FACTOR * b.identity_residual;
        if dl <= bound {
            ok += 1;
        }
    }
    let steps = samples.len() - 1;
    Ok(LyapunovReport {
        constants: *lcfg,
        lambdas: lcfg.lambdas(cfg),
        n0,
        m1,
        m2,
        sandwich_holds: m1.is_finite() && m1 > 0.0 && m1 <= m2,
        derivative_fraction: ok as f64 / steps as f64,
        steps_checked: steps,
        tolerance_factor: DERIVATIVE_TOLERANCE_FACTOR,
    })
}
