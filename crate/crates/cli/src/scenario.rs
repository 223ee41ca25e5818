//! Simulate-then-analyse pipeline and its on-disk artifacts.
//!
//! A run directory holds
//! - `scenario.json`: the resolved config,
//! - `energy.csv`: `t, energy, boundary_dissipation, thermal_dissipation, identity_residual`,
//! - `final.snapshot.csv`: the state at `t_end`,
//! - `resolvent.csv`: `lambda, norm` (when requested),
//! - `kernel_nodes_<i>.csv`: `k, xi, weight, mu` (kernel validation),
//! - `analysis.json`: every analysis result and invariant check,
//! - `failures.json`: written only when a check fails.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use piezobeam_core::frac_diffusive::{
    closed_form_moment, diffusive_caputo, reference_caputo, xi_max_for,
};
use piezobeam_core::stability_lab::resolvent::{log_spaced, SWEEP_POINTS};
use piezobeam_core::stability_lab::{
    assemble_generator, feasible_constants, fit_decay, lyapunov_check, mid_window, resolvent_norm, resolvent_sweep,
    resonance_slope, sweep_window, DecayFit, LyapunovReport, LyapunovSample, ResolventPoint,
};
use piezobeam_core::time_integrator::{default_dt, initial_report, EnergyReport};
use piezobeam_core::{
    build_quadrature, initial_condition_library, run, BeamConfig, BeamState, FracParams, Grid, PiezoError,
    RunOptions, Snapshot,
};
use serde::{Deserialize, Serialize};

use crate::config::{ScenarioConfig, SCHEMA_VERSION};
use crate::error::CliError;

pub const ENERGY_COLUMNS: [&str; 5] = ["t", "energy", "boundary_dissipation", "thermal_dissipation", "identity_residual"];

/// Relative tolerance on the per-step midpoint energy balance, in units of `E0 / dt`.
pub const BALANCE_TOLERANCE: f64 = 1e-9;
/// Kernel suite thresholds: moment error at the configured mode count, and
/// relative L2 distance of the realized derivative from the convolution oracle.
pub const MOMENT_TOLERANCE: f64 = 0.01;
pub const CAPUTO_TOLERANCE: f64 = 0.02;

/// One invariant or analysis check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dt: f64,
    pub steps: usize,
    pub energy_initial: f64,
    pub energy_final: f64,
    pub energy_increases: usize,
    pub max_identity_residual: f64,
    pub max_midpoint_balance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCase {
    pub damper: usize,
    pub a: f64,
    pub eta: f64,
    pub max_moment_error: f64,
    pub caputo_l2_ramp: f64,
    pub caputo_l2_sine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventSummary {
    pub points: Vec<ResolventPoint>,
    pub norm_at_zero: Option<f64>,
    pub mid_window: (f64, f64),
    pub resonance_slope: Option<f64>,
    pub expected_slope: f64,
}

/// Contents of `analysis.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub passed: bool,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub run: Option<RunSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub decay: Option<DecayFit>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lyapunov: Option<LyapunovReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub resolvent: Option<ResolventSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub kernel: Vec<KernelCase>,
}

/// Contents of `failures.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureManifest {
    pub schema_version: u32,
    pub failures: Vec<Check>,
}

/// What a scenario produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub output_dir: PathBuf,
    pub report: AnalysisReport,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.passed {
            0
        } else {
            1
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn energy_csv(reports: &[EnergyReport]) -> String {
    let mut out = ENERGY_COLUMNS.join(",");
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            num(r.t),
            num(r.energy),
            num(r.boundary_dissipation),
            num(r.thermal_dissipation),
            num(r.identity_residual)
        );
    }
    out
}

/// Parse an energy log written by [`energy_csv`].
pub fn read_energy_csv(text: &str) -> Result<Vec<EnergyReport>, CliError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != ENERGY_COLUMNS.join(",") {
        return Err(CliError::Schema(format!("unexpected energy log header '{header}'")));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let v = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Schema(format!("energy log row {}: {e}", i + 2)))?;
            if v.len() != ENERGY_COLUMNS.len() {
                return Err(CliError::Schema(format!("energy log row {} has {} columns", i + 2, v.len())));
            }
            Ok(EnergyReport {
                t: v[0],
                energy: v[1],
                boundary_dissipation: v[2],
                thermal_dissipation: v[3],
                identity_residual: v[4],
                midpoint_balance: 0.0,
            })
        })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Run directory: `output_dir`, placed under `root` when given and relative.
pub fn resolve_output_dir(cfg: &ScenarioConfig, root: Option<&Path>) -> PathBuf {
    match root {
        Some(r) if cfg.output_dir.is_relative() => r.join(&cfg.output_dir),
        _ => cfg.output_dir.clone(),
    }
}

fn initial_state(cfg: &ScenarioConfig, beam: &BeamConfig, grid: &Grid, base: &Path) -> Result<(BeamState, usize), CliError> {
    match cfg.snapshot_path(base) {
        None => Ok((initial_condition_library(&cfg.initial, beam, grid, cfg.grid.n_modes)?, 0)),
        Some(path) => {
            let snap = Snapshot::read(&path)?;
            if snap.grid != *grid {
                return Err(CliError::Invalid(vec![format!(
                    "initial: snapshot grid ({} cells, length {}) differs from the configured grid",
                    snap.grid.n_cells,
                    snap.grid.length()
                )]));
            }
            snap.state.check_invariants(beam, grid)?;
            Ok((snap.state, snap.step))
        }
    }
}

/// Kernel oracle suite for one damper's `(a, eta)` at `n_modes` modes.
pub fn validate_kernel(params: &FracParams, n_modes: usize, damper: usize) -> Result<KernelCase, PiezoError> {
    let p = FracParams::new(params.a, params.eta, 1.0)?;
    let mut max_moment_error: f64 = 0.0;
    for lam in [0.0, 1.0, 10.0] {
        let op = build_quadrature(p, n_modes, xi_max_for(&p, n_modes, 10.0)?)?;
        let exact = closed_form_moment(p.a, p.eta, lam)?;
        max_moment_error = max_moment_error.max((op.discrete_moment(lam) - exact).abs() / exact);
    }
    let n = 2048;
    let dt = 5.0 / n as f64;
    let mut l2 = [0.0; 2];
    for (slot, f) in l2.iter_mut().zip([|t: f64| t, |t: f64| t.sin()]) {
        let samples: Vec<f64> = (0..=n).map(|i| f(i as f64 * dt)).collect();
        let mut op = build_quadrature(p, n_modes, xi_max_for(&p, n_modes, 1.0 / dt)?)?;
        let got = diffusive_caputo(&mut op, &samples, dt);
        let want = reference_caputo(&samples, dt, p.a, p.eta)?;
        let num: f64 = got.iter().zip(&want).map(|(g, w)| (g - w).powi(2)).sum();
        let den: f64 = want.iter().map(|w| w * w).sum();
        *slot = (num / den).sqrt();
    }
    Ok(KernelCase {
        damper,
        a: p.a,
        eta: p.eta,
        max_moment_error,
        caputo_l2_ramp: l2[0],
        caputo_l2_sine: l2[1],
    })
}

fn kernel_table(beam: &BeamConfig, grid: &Grid, n_modes: usize) -> Result<[String; 2], PiezoError> {
    let (d1, d2) = piezobeam_core::beam_model::build_dampers(beam, grid, n_modes)?;
    Ok([d1, d2].map(|d| {
        let mut out = String::from("k,xi,weight,mu\n");
        for (k, xi, w, mu) in d.node_table() {
            let _ = writeln!(out, "{k},{},{},{}", num(xi), num(w), num(mu));
        }
        out
    }))
}

/// Kernel checks for both dampers; also writes the node tables.
fn kernel_checks(beam: &BeamConfig, grid: &Grid, n_modes: usize, dir: &Path, report: &mut AnalysisReport) -> Result<(), CliError> {
    for (i, params) in [beam.frac1, beam.frac2].iter().enumerate() {
        let case = validate_kernel(params, n_modes, i + 1)?;
        report.checks.push(Check::new(
            &format!("kernel_moment_{}", i + 1),
            case.max_moment_error <= MOMENT_TOLERANCE,
            format!("max relative moment error {:.3e} (tol {MOMENT_TOLERANCE})", case.max_moment_error),
        ));
        let worst = case.caputo_l2_ramp.max(case.caputo_l2_sine);
        report.checks.push(Check::new(
            &format!("kernel_caputo_{}", i + 1),
            worst <= CAPUTO_TOLERANCE,
            format!("relative L2 distance from convolution oracle {worst:.3e} (tol {CAPUTO_TOLERANCE})"),
        ));
        report.kernel.push(case);
    }
    let tables = kernel_table(beam, grid, n_modes)?;
    for (i, table) in tables.iter().enumerate() {
        fs::write(dir.join(format!("kernel_nodes_{}.csv", i + 1)), table)?;
    }
    Ok(())
}

fn resolvent_analysis(beam: &BeamConfig, grid: &Grid, n_modes: usize, dir: &Path, report: &mut AnalysisReport) -> Result<(), CliError> {
    let template = BeamState::zero(beam, grid, n_modes)?;
    let gen = assemble_generator(beam, grid, &template)?;
    let window = sweep_window(beam, grid);
    let points = resolvent_sweep(&gen.energy, &log_spaced(window.0, window.1, SWEEP_POINTS));
    let mut csv = String::from("lambda,norm\n");
    for p in &points {
        let norm = p.norm.map_or_else(|| "inf".to_string(), num);
        let _ = writeln!(csv, "{},{norm}", num(p.lambda));
    }
    fs::write(dir.join("resolvent.csv"), csv)?;
    let mid = mid_window(window);
    let slope = resonance_slope(&gen.energy, mid).ok().map(|s| s.slope);
    let at_zero = resolvent_norm(&gen.energy, 0.0).ok();
    let singular = points.iter().filter(|p| p.norm.is_none()).count();
    let damped = beam.frac1.gain > 0.0 || beam.frac2.gain > 0.0 || (beam.thermal && beam.delta > 0.0);
    report.checks.push(Check::new(
        "resolvent_at_zero",
        at_zero.is_some(),
        format!("norm at lambda = 0: {at_zero:?}"),
    ));
    if damped {
        report.checks.push(Check::new(
            "resolvent_finite_on_sweep",
            singular == 0,
            format!("{singular} of {} sweep points singular", points.len()),
        ));
    }
    report.resolvent = Some(ResolventSummary {
        points,
        norm_at_zero: at_zero,
        mid_window: mid,
        resonance_slope: slope,
        expected_slope: 1.0 - beam.frac1.a.max(beam.frac2.a),
    });
    Ok(())
}

/// Execute every requested analysis and write the artifacts.
///
/// `base` resolves relative snapshot paths; `root` overrides where relative
/// output directories go. Errors are returned only for problems that prevent
/// the run; failed checks are reported through [`Outcome::exit_code`].
pub fn run_scenario(cfg: &ScenarioConfig, base: &Path, root: Option<&Path>) -> Result<Outcome, CliError> {
    cfg.validate(base)?;
    let beam = cfg.beam_config();
    let grid = Grid::new(cfg.grid.n_cells, beam.length)?;
    let dir = resolve_output_dir(cfg, root);
    fs::create_dir_all(&dir)?;
    let _ = fs::remove_file(dir.join("failures.json"));
    fs::write(dir.join("scenario.json"), cfg.to_json() + "\n")?;

    let mut report = AnalysisReport {
        schema_version: SCHEMA_VERSION,
        passed: true,
        checks: Vec::new(),
        run: None,
        decay: None,
        lyapunov: None,
        resolvent: None,
        kernel: Vec::new(),
    };

    if cfg.analyses.kernel_validation {
        kernel_checks(&beam, &grid, cfg.grid.n_modes, &dir, &mut report)?;
    }

    if cfg.analyses.needs_run() {
        let (initial, start_step) = initial_state(cfg, &beam, &grid, base)?;
        let dt = cfg.time.dt.unwrap_or_else(|| default_dt(&beam, &grid));
        let opts = RunOptions {
            dt,
            t_end: cfg.time.t_end,
            report_every: cfg.time.report_cadence,
            start_step,
        };
        let mut samples = Vec::new();
        if cfg.analyses.lyapunov {
            let first = initial_report(&beam, &grid, &initial, start_step as f64 * dt);
            samples.push(LyapunovSample::from_state(&beam, &grid, &initial, &first)?);
        }
        let mut sample_error = None;
        let out = run(&beam, &grid, initial, &opts, &mut |_, state, r| {
            if cfg.analyses.lyapunov && sample_error.is_none() {
                match LyapunovSample::from_state(&beam, &grid, state, r) {
                    Ok(s) => samples.push(s),
                    Err(e) => sample_error = Some(e),
                }
            }
        })?;
        if let Some(e) = sample_error {
            return Err(e.into());
        }
        let e0 = out.reports[0].energy;
        let summary = RunSummary {
            dt,
            steps: out.final_step - start_step,
            energy_initial: e0,
            energy_final: out.reports.last().map_or(e0, |r| r.energy),
            energy_increases: out.energy_increases,
            max_identity_residual: out.max_identity_residual,
            max_midpoint_balance: out.max_midpoint_balance,
        };
        report.checks.push(Check::new(
            "energy_monotone",
            out.energy_increases == 0,
            format!("{} of {} steps increased the energy", out.energy_increases, summary.steps),
        ));
        let balance_tol = BALANCE_TOLERANCE * e0 / dt + f64::MIN_POSITIVE;
        report.checks.push(Check::new(
            "midpoint_energy_balance",
            out.max_midpoint_balance <= balance_tol,
            format!("max |dE/dt + D(midpoint)| = {:.3e} (tol {balance_tol:.3e})", out.max_midpoint_balance),
        ));
        if cfg.analyses.energy_log {
            fs::write(dir.join("energy.csv"), energy_csv(&out.reports))?;
        }
        Snapshot {
            t: out.final_step as f64 * dt,
            step: out.final_step,
            grid,
            state: out.final_state.clone(),
        }
        .write(&dir.join("final.snapshot.csv"))?;

        let at_rest = e0 == 0.0 && summary.energy_final == 0.0;
        if at_rest && (cfg.analyses.decay_fit || cfg.analyses.lyapunov) {
            report
                .checks
                .push(Check::new("at_rest", true, "zero energy throughout; decay and Lyapunov analyses skipped".into()));
        }
        if cfg.analyses.decay_fit && !at_rest {
            let t_end = cfg.time.t_end;
            let window = cfg.decay_window.map_or((0.5 * t_end, t_end), |[lo, hi]| (lo, hi));
            match fit_decay(&out.reports, window) {
                Ok(fit) => {
                    report.checks.push(Check::new(
                        "decay_fit",
                        true,
                        format!("{:?} preferred; omega {:.4e}, exponent {:.4}", fit.model, fit.rate_omega, fit.exponent_p),
                    ));
                    report.decay = Some(fit);
                }
                Err(e) => report.checks.push(Check::new("decay_fit", false, e.to_string())),
            }
        }
        if cfg.analyses.lyapunov && !at_rest {
            let constants = feasible_constants(&beam)?;
            let lr = lyapunov_check(&beam, &samples, &constants)?;
            report.checks.push(Check::new(
                "lyapunov_sandwich",
                lr.sandwich_holds,
                format!("L/E in [{:.4e}, {:.4e}]", lr.m1, lr.m2),
            ));
            report.checks.push(Check::new(
                "lyapunov_derivative",
                lr.derivative_fraction >= 0.99,
                format!("dL/dt <= -N0 E + tol on {:.2}% of steps", 100.0 * lr.derivative_fraction),
            ));
            report.lyapunov = Some(lr);
        }
        report.run = Some(summary);
    }

    if cfg.analyses.resolvent {
        resolvent_analysis(&beam, &grid, cfg.grid.n_modes, &dir, &mut report)?;
    }

    finish(report, &dir)
}

/// Set the overall verdict, write `analysis.json` and, on failure, `failures.json`.
pub fn finish(mut report: AnalysisReport, dir: &Path) -> Result<Outcome, CliError> {
    report.passed = report.checks.iter().all(|c| c.passed);
    write_json(&dir.join("analysis.json"), &report)?;
    if !report.passed {
        let failures = report.checks.iter().filter(|c| !c.passed).cloned().collect();
        write_json(
            &dir.join("failures.json"),
            &FailureManifest {
                schema_version: SCHEMA_VERSION,
                failures,
            },
        )?;
    }
    Ok(Outcome {
        output_dir: dir.to_path_buf(),
        report,
    })
}

/// Only the kernel oracle suite, whatever the analysis flags say.
pub fn run_kernel_validation(cfg: &ScenarioConfig, base: &Path, root: Option<&Path>) -> Result<Outcome, CliError> {
    let mut only = cfg.clone();
    only.analyses = crate::config::Analyses {
        energy_log: false,
        decay_fit: false,
        lyapunov: false,
        resolvent: false,
        kernel_validation: true,
    };
    run_scenario(&only, base, root)
}

/// Re-check an existing run directory from its energy log: monotonicity and a
/// decay fit. Writes `offline_analysis.json`.
pub fn analyze_run_dir(dir: &Path) -> Result<Outcome, CliError> {
    let cfg_text = fs::read_to_string(dir.join("scenario.json"))?;
    let cfg: ScenarioConfig = serde_json::from_str(&cfg_text).map_err(|e| CliError::Schema(e.to_string()))?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(CliError::Schema(format!("unsupported schema version {}", cfg.schema_version)));
    }
    let reports = read_energy_csv(&fs::read_to_string(dir.join("energy.csv"))?)?;
    let mut report = AnalysisReport {
        schema_version: SCHEMA_VERSION,
        passed: true,
        checks: Vec::new(),
        run: None,
        decay: None,
        lyapunov: None,
        resolvent: None,
        kernel: Vec::new(),
    };
    let rises = reports
        .windows(2)
        .filter(|w| w[1].energy > w[0].energy * (1.0 + piezobeam_core::time_integrator::MONOTONE_TOLERANCE))
        .count();
    report.checks.push(Check::new(
        "energy_monotone",
        rises == 0,
        format!("{rises} of {} logged intervals increased the energy", reports.len().saturating_sub(1)),
    ));
    let t_end = reports.last().map_or(0.0, |r| r.t);
    let window = cfg.decay_window.map_or((0.5 * t_end, t_end), |[lo, hi]| (lo, hi));
    match fit_decay(&reports, window) {
        Ok(fit) => {
            report.checks.push(Check::new(
                "decay_fit",
                true,
                format!("{:?} preferred; omega {:.4e}, exponent {:.4}", fit.model, fit.rate_omega, fit.exponent_p),
            ));
            report.decay = Some(fit);
        }
        Err(e) => report.checks.push(Check::new("decay_fit", false, e.to_string())),
    }
    report.passed = report.checks.iter().all(|c| c.passed);
    write_json(&dir.join("offline_analysis.json"), &report)?;
    Ok(Outcome {
        output_dir: dir.to_path_buf(),
        report,
    })
}
