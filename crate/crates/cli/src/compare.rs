//! Side-by-side comparison of two run directories.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::SCHEMA_VERSION;
use crate::error::CliError;
use crate::scenario::{read_energy_csv, AnalysisReport, ENERGY_COLUMNS};
use piezobeam_core::time_integrator::EnergyReport;

/// Thresholds on the largest deviation of any energy-log column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { abs: 1e-12, rel: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDiff {
    pub column: String,
    pub max_abs: f64,
    pub max_rel: f64,
    /// Time at which `max_abs` occurs.
    pub at_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub schema_version: u32,
    pub common_times: usize,
    /// True when both logs share the same time stamps and no interpolation was needed.
    pub aligned: bool,
    pub columns: Vec<ColumnDiff>,
    pub tolerances: Tolerances,
    pub within_tolerance: bool,
}

fn load_report(dir: &Path) -> Result<AnalysisReport, CliError> {
    let path = dir.join("analysis.json");
    let text = fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        other => {
            return Err(CliError::Schema(format!(
                "{}: schema_version {other:?} is not {SCHEMA_VERSION}",
                path.display()
            )))
        }
    }
    serde_json::from_value(value).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

fn load_log(dir: &Path) -> Result<Vec<EnergyReport>, CliError> {
    let path = dir.join("energy.csv");
    let text = fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    read_energy_csv(&text)
}

fn columns(r: &EnergyReport) -> [f64; 4] {
    [r.energy, r.boundary_dissipation, r.thermal_dissipation, r.identity_residual]
}

/// Linear interpolation of every column of `log` at time `t` (inside its range).
fn sample_at(log: &[EnergyReport], t: f64) -> [f64; 4] {
    let k = log.partition_point(|r| r.t < t);
    if k == 0 {
        return columns(&log[0]);
    }
    if k == log.len() {
        return columns(&log[k - 1]);
    }
    let (a, b) = (&log[k - 1], &log[k]);
    if b.t == t {
        return columns(b);
    }
    let w = (t - a.t) / (b.t - a.t);
    let (ca, cb) = (columns(a), columns(b));
    std::array::from_fn(|i| ca[i] + w * (cb[i] - ca[i]))
}

/// Compare the energy logs of two runs. Times of `b` are interpolated onto the
/// times of `a` that fall inside both logs.
pub fn compare_logs(a: &[EnergyReport], b: &[EnergyReport], tol: Tolerances) -> Result<Comparison, CliError> {
    if a.is_empty() || b.is_empty() {
        return Err(CliError::Schema("empty energy log".into()));
    }
    let aligned = a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.t == y.t);
    let (lo, hi) = (a[0].t.max(b[0].t), a[a.len() - 1].t.min(b[b.len() - 1].t));
    let times: Vec<&EnergyReport> = a.iter().filter(|r| r.t >= lo && r.t <= hi).collect();
    if times.is_empty() {
        return Err(CliError::Schema(format!("energy logs share no time range (a ends {}, b starts {})", a[a.len() - 1].t, b[0].t)));
    }
    let mut diffs: Vec<ColumnDiff> = ENERGY_COLUMNS[1..]
        .iter()
        .map(|c| ColumnDiff {
            column: c.to_string(),
            max_abs: 0.0,
            max_rel: 0.0,
            at_t: times[0].t,
        })
        .collect();
    for ra in &times {
        let va = columns(ra);
        let vb = sample_at(b, ra.t);
        for (d, (x, y)) in diffs.iter_mut().zip(va.iter().zip(&vb)) {
            let abs = (x - y).abs();
            let scale = x.abs().max(y.abs());
            let rel = if scale > 0.0 { abs / scale } else { 0.0 };
            if abs > d.max_abs {
                d.max_abs = abs;
                d.at_t = ra.t;
            }
            d.max_rel = d.max_rel.max(rel);
        }
    }
    let within_tolerance = diffs.iter().all(|d| d.max_abs <= tol.abs || d.max_rel <= tol.rel);
    Ok(Comparison {
        schema_version: SCHEMA_VERSION,
        common_times: times.len(),
        aligned,
        columns: diffs,
        tolerances: tol,
        within_tolerance,
    })
}

/// Compare two run directories after checking both analysis reports carry the
/// supported schema version.
pub fn compare_runs(a: &Path, b: &Path, tol: Tolerances) -> Result<Comparison, CliError> {
    load_report(a)?;
    load_report(b)?;
    compare_logs(&load_log(a)?, &load_log(b)?, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(times: &[f64], f: impl Fn(f64) -> f64) -> Vec<EnergyReport> {
        times
            .iter()
            .map(|&t| EnergyReport {
                t,
                energy: f(t),
                boundary_dissipation: 0.0,
                thermal_dissipation: 0.0,
                identity_residual: 0.0,
                midpoint_balance: 0.0,
            })
            .collect()
    }

    #[test]
    fn identical_logs_have_zero_deviation() {
        let a = log(&[0.0, 0.5, 1.0], |t| 2.0 - t);
        let c = compare_logs(&a, &a, Tolerances::default()).unwrap();
        assert!(c.aligned && c.within_tolerance);
        assert!(c.columns.iter().all(|d| d.max_abs == 0.0));
    }

    #[test]
    fn linear_data_interpolates_exactly() {
        let a = log(&[0.0, 0.3, 0.6, 0.9], |t| 1.0 + 2.0 * t);
        let b = log(&[0.0, 0.5, 1.0], |t| 1.0 + 2.0 * t);
        let c = compare_logs(&a, &b, Tolerances::default()).unwrap();
        assert!(!c.aligned);
        assert_eq!(c.common_times, 4);
        assert!(c.columns[0].max_abs < 1e-14);
    }

    #[test]
    fn offset_is_reported() {
        let a = log(&[0.0, 1.0, 2.0], |_| 1.0);
        let b = log(&[0.0, 1.0, 2.0], |t| if t == 1.0 { 1.5 } else { 1.0 });
        let c = compare_logs(&a, &b, Tolerances::default()).unwrap();
        assert_eq!(c.columns[0].max_abs, 0.5);
        assert_eq!(c.columns[0].at_t, 1.0);
        assert!(!c.within_tolerance);
    }
}
