//! Resolvent norms `||(i lam - A)^-1||` in the energy norm.

use nalgebra::{DMatrix, DVector, Dyn, PermutationSequence};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beam_model::{BeamConfig, Grid};
use crate::error::{PiezoError, Result};

use super::decay::line_fit;

/// One sweep point; `norm` is `None` when the shift hit the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolventPoint {
    pub lambda: f64,
    pub norm: Option<f64>,
}

const MAX_ITERATIONS: usize = 500;
const REL_TOL: f64 = 1e-12;
/// Norms above `max(1, |lam|) / eps` count as an exact singularity.
const SINGULAR_GAP: f64 = f64::EPSILON;

fn shifted(a: &DMatrix<f64>, lambda: f64) -> DMatrix<Complex64> {
    let n = a.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { Complex64::new(0.0, lambda) } else { Complex64::new(0.0, 0.0) };
        diag - a[(i, j)]
    })
}

/// One factorization `P M = L U` serving solves with `M` and with `M^H`.
struct ShiftedLu {
    p: PermutationSequence<Dyn>,
    l: DMatrix<Complex64>,
    u: DMatrix<Complex64>,
}

impl ShiftedLu {
    fn new(a: &DMatrix<f64>, lambda: f64) -> Self {
        let (p, l, u) = shifted(a, lambda).lu().unpack();
        Self { p, l, u }
    }

    fn solve(&self, x: &mut DVector<Complex64>) -> bool {
        self.p.permute_rows(x);
        self.l.solve_lower_triangular_with_diag_mut(x, Complex64::new(1.0, 0.0));
        self.u.solve_upper_triangular_mut(x)
    }

    fn solve_adjoint(&self, x: &mut DVector<Complex64>) -> bool {
        if !self.u.ad_solve_upper_triangular_mut(x) || !self.l.ad_solve_lower_triangular_mut(x) {
            return false;
        }
        self.p.inv_permute_rows(x);
        true
    }
}

/// `1 / sigma_min(i lam I - A)` by power iteration on `M^-H M^-1`.
pub fn resolvent_norm(a: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(PiezoError::Domain("generator must be a non-empty square matrix".into()));
    }
    let n = a.nrows();
    let singular = || PiezoError::SingularSystem { row: 0, pivot: 0.0 };
    let lu = ShiftedLu::new(a, lambda);
    // deterministic start vector with every component nonzero
    let mut x = DVector::from_fn(n, |i, _| {
        Complex64::new(1.0 + 0.37 * (i as f64).sin(), 0.21 * (1.7 * i as f64).cos())
    });
    x /= Complex64::new(x.norm(), 0.0);
    let mut estimate = 0.0;
    for _ in 0..MAX_ITERATIONS {
        if !lu.solve(&mut x) {
            return Err(singular());
        }
        let next = x.norm();
        if !lu.solve_adjoint(&mut x) {
            return Err(singular());
        }
        let wn = x.norm();
        if !wn.is_finite() || wn == 0.0 {
            return Err(singular());
        }
        x /= Complex64::new(wn, 0.0);
        let done = (next - estimate).abs() <= REL_TOL * next;
        estimate = next;
        if done {
            break;
        }
    }
    if !estimate.is_finite() || estimate * SINGULAR_GAP > lambda.abs().max(1.0) {
        return Err(singular());
    }
    Ok(estimate)
}

/// Resolvent norms at each frequency; singular shifts are kept with `norm = None`.
pub fn resolvent_sweep(a: &DMatrix<f64>, lambdas: &[f64]) -> Vec<ResolventPoint> {
    lambdas
        .iter()
        .map(|&lambda| ResolventPoint {
            lambda,
            norm: resolvent_norm(a, lambda).ok(),
        })
        .collect()
}

/// Upper end of the frequency range the grid resolves, `0.5 pi c_min / dx`.
pub fn resolvable_frequency(cfg: &BeamConfig, grid: &Grid) -> f64 {
    0.5 * std::f64::consts::PI * cfg.min_wave_speed() / grid.dx
}

/// Number of points in a standard sweep.
pub const SWEEP_POINTS: usize = 40;

/// Sweep range from the quarter-wave frequency `0.5 pi c_min / L` up to the
/// resolvable frequency. The ratio of the ends is the cell count.
pub fn sweep_window(cfg: &BeamConfig, grid: &Grid) -> (f64, f64) {
    let lo = 0.5 * std::f64::consts::PI * cfg.min_wave_speed() / grid.length();
    (lo, resolvable_frequency(cfg, grid))
}

/// Mid-frequency part of a sweep window: a factor of 3 is trimmed at each end,
/// dropping the first resonances and the dispersive band near the grid cutoff.
pub fn mid_window((lo, hi): (f64, f64)) -> (f64, f64) {
    (3.0 * lo, hi / 3.0)
}

/// `count` logarithmically spaced frequencies on `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Imaginary parts of the eigenvalues of `a` lying in `[lo, hi]`, ascending.
/// At these frequencies the resolvent attains its local peaks.
pub fn resonance_frequencies(a: &DMatrix<f64>, lo: f64, hi: f64) -> Vec<f64> {
    let mut out: Vec<f64> = a
        .complex_eigenvalues()
        .iter()
        .map(|ev| ev.im)
        .filter(|&im| im >= lo && im <= hi)
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs());
    out
}

/// Least-squares slope of `ln norm` against `ln lambda`, skipping singular points.
pub fn loglog_slope(points: &[ResolventPoint]) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter_map(|p| p.norm.map(|v| (p.lambda.ln(), v.ln())))
        .unzip();
    (x.len() >= 2).then(|| line_fit(&x, &y).0)
}

/// Growth estimate of the resolvent along its resonance peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceSlope {
    pub window: (f64, f64),
    pub slope: f64,
    pub peaks: Vec<ResolventPoint>,
}

/// Log-log slope of the resolvent norm sampled at the resonance frequencies in `window`.
///
/// Between resonances the norm of a lightly damped system drops by orders of
/// magnitude, so a fixed frequency grid mostly samples valleys; the peaks carry
/// the growth rate.
pub fn resonance_slope(a: &DMatrix<f64>, window: (f64, f64)) -> Result<ResonanceSlope> {
    let freqs = resonance_frequencies(a, window.0, window.1);
    let peaks = resolvent_sweep(a, &freqs);
    let got = peaks.iter().filter(|p| p.norm.is_some()).count();
    let slope = loglog_slope(&peaks).ok_or(PiezoError::InsufficientSamples { needed: 2, got })?;
    Ok(ResonanceSlope { window, slope, peaks })
}
