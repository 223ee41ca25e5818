//! Least-squares decay models for energy histories.

use serde::{Deserialize, Serialize};

use crate::error::{PiezoError, Result};
use crate::time_integrator::EnergyReport;

/// Minimum number of samples inside the fit window.
pub const MIN_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayModel {
    Exponential,
    Polynomial,
}

/// Both fitted models over one window; `model` is the better one by R^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: DecayModel,
    /// `omega` in `E ~ E0 exp(-omega t)`.
    pub rate_omega: f64,
    /// `p` in `E ~ C t^(-p)`.
    pub exponent_p: f64,
    pub quality_exponential: f64,
    pub quality_polynomial: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Slope and coefficient of determination of the least-squares line through `(x, y)`.
pub(crate) fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

/// Fit `ln E` against `t` and against `ln t` on the samples with `t` in `window`.
pub fn fit_decay(series: &[EnergyReport], window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(PiezoError::Domain(format!(
            "fit window [{lo}, {hi}] must satisfy 0 < t_lo < t_hi"
        )));
    }
    let inside: Vec<&EnergyReport> = series.iter().filter(|r| r.t >= lo && r.t <= hi).collect();
    if inside.len() < MIN_SAMPLES {
        return Err(PiezoError::InsufficientSamples {
            needed: MIN_SAMPLES,
            got: inside.len(),
        });
    }
    if let Some(r) = inside.iter().find(|r| !(r.energy > 0.0)) {
        return Err(PiezoError::NonPositiveEnergy {
            t: r.t,
            value: r.energy,
        });
    }
    let t: Vec<f64> = inside.iter().map(|r| r.t).collect();
    let log_t: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let log_e: Vec<f64> = inside.iter().map(|r| r.energy.ln()).collect();
    let (slope_exp, q_exp) = line_fit(&t, &log_e);
    let (slope_pow, q_pow) = line_fit(&log_t, &log_e);
    Ok(DecayFit {
        model: if q_pow > q_exp {
            DecayModel::Polynomial
        } else {
            DecayModel::Exponential
        },
        rate_omega: -slope_exp,
        exponent_p: -slope_pow,
        quality_exponential: q_exp,
        quality_polynomial: q_pow,
        window,
        samples: inside.len(),
    })
}
