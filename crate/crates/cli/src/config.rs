//! Scenario configuration: JSON on disk, validated as a whole on load.

use std::path::{Path, PathBuf};

use piezobeam_core::beam_model::INITIAL_CONDITIONS;
use piezobeam_core::{BeamConfig, FracParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Major version of every file this crate reads or writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Built-in parameter sets. Neither comes from measured data; they are unit
/// constants chosen so that every documented inequality holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Preset {
    #[default]
    #[serde(rename = "paper-nonthermal")]
    NonThermal,
    #[serde(rename = "paper-thermal")]
    Thermal,
}

impl Preset {
    pub fn config(self) -> BeamConfig {
        match self {
            Preset::NonThermal => BeamConfig::paper_nonthermal(),
            Preset::Thermal => BeamConfig::paper_thermal(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FracOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
}

impl FracOverrides {
    fn apply(&self, base: &mut FracParams) {
        base.a = self.a.unwrap_or(base.a);
        base.eta = self.eta.unwrap_or(base.eta);
        base.gain = self.gain.unwrap_or(base.gain);
    }
}

/// Per-field overrides on top of the preset.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mag_mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_heat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frac1: Option<FracOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frac2: Option<FracOverrides>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_cells")]
    pub n_cells: usize,
    /// Modes per boundary damper.
    #[serde(default = "default_modes")]
    pub n_modes: usize,
}

fn default_cells() -> usize {
    100
}

fn default_modes() -> usize {
    128
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_cells: default_cells(),
            n_modes: default_modes(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    /// Step size; `dx / (2 c_max)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// Steps between energy log rows.
    #[serde(default = "default_cadence")]
    pub report_cadence: usize,
}

fn default_t_end() -> f64 {
    10.0
}

fn default_cadence() -> usize {
    1
}

impl Default for TimeSpec {
    fn default() -> Self {
        Self {
            dt: None,
            t_end: default_t_end(),
            report_cadence: default_cadence(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analyses {
    #[serde(default = "yes")]
    pub energy_log: bool,
    #[serde(default)]
    pub decay_fit: bool,
    #[serde(default)]
    pub lyapunov: bool,
    #[serde(default)]
    pub resolvent: bool,
    #[serde(default)]
    pub kernel_validation: bool,
}

fn yes() -> bool {
    true
}

impl Default for Analyses {
    fn default() -> Self {
        Self {
            energy_log: true,
            decay_fit: false,
            lyapunov: false,
            resolvent: false,
            kernel_validation: false,
        }
    }
}

impl Analyses {
    /// Whether any requested analysis needs a simulation.
    pub fn needs_run(&self) -> bool {
        self.energy_log || self.decay_fit || self.lyapunov
    }
}

/// Everything needed to reproduce one scenario. Runs are fully deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub preset: Preset,
    #[serde(default)]
    pub beam: BeamOverrides,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub time: TimeSpec,
    /// Library state name, or a path to a snapshot file.
    #[serde(default = "default_initial")]
    pub initial: String,
    #[serde(default)]
    pub analyses: Analyses,
    /// Fit window for the decay analysis; the second half of the run when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_window: Option<[f64; 2]>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_initial() -> String {
    "fundamental".into()
}

fn default_output() -> PathBuf {
    PathBuf::from("piezobeam-out")
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl ScenarioConfig {
    /// Preset with overrides applied.
    pub fn beam_config(&self) -> BeamConfig {
        let mut cfg = self.preset.config();
        let b = &self.beam;
        cfg.rho = b.rho.unwrap_or(cfg.rho);
        cfg.alpha = b.alpha.unwrap_or(cfg.alpha);
        cfg.beta = b.beta.unwrap_or(cfg.beta);
        cfg.gamma = b.gamma.unwrap_or(cfg.gamma);
        cfg.mag_mu = b.mag_mu.unwrap_or(cfg.mag_mu);
        cfg.delta = b.delta.unwrap_or(cfg.delta);
        cfg.c_heat = b.c_heat.unwrap_or(cfg.c_heat);
        cfg.kappa = b.kappa.unwrap_or(cfg.kappa);
        cfg.length = b.length.unwrap_or(cfg.length);
        cfg.thermal = b.thermal.unwrap_or(cfg.thermal);
        if let Some(f) = &b.frac1 {
            f.apply(&mut cfg.frac1);
        }
        if let Some(f) = &b.frac2 {
            f.apply(&mut cfg.frac2);
        }
        cfg
    }

    /// Snapshot path when `initial` is not a library name. Relative paths
    /// resolve against `base` (the directory of the config file).
    pub fn snapshot_path(&self, base: &Path) -> Option<PathBuf> {
        if INITIAL_CONDITIONS.contains(&self.initial.as_str()) {
            None
        } else {
            Some(base.join(&self.initial))
        }
    }

    /// Every violated constraint, each prefixed with its field path.
    pub fn violations(&self, base: &Path) -> Vec<String> {
        let mut out = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            out.push(format!(
                "schema_version: unsupported major version {} (this build reads {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        out.extend(self.beam_config().violations("beam."));
        if self.grid.n_cells < 8 {
            out.push(format!("grid.n_cells = {} must be >= 8", self.grid.n_cells));
        }
        if self.grid.n_modes < 2 {
            out.push(format!("grid.n_modes = {} must be >= 2", self.grid.n_modes));
        }
        if let Some(dt) = self.time.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                out.push(format!("time.dt = {dt} must be > 0"));
            }
        }
        if !(self.time.t_end >= 0.0 && self.time.t_end.is_finite()) {
            out.push(format!("time.t_end = {} must be >= 0", self.time.t_end));
        }
        if self.time.report_cadence == 0 {
            out.push("time.report_cadence must be >= 1".into());
        }
        if let Some(path) = self.snapshot_path(base) {
            if !path.is_file() {
                out.push(format!(
                    "initial: '{}' is neither a library state ({}) nor a readable snapshot",
                    self.initial,
                    INITIAL_CONDITIONS.join(", ")
                ));
            }
        }
        if let Some([lo, hi]) = self.decay_window {
            if !(lo > 0.0 && hi > lo) {
                out.push(format!("decay_window = [{lo}, {hi}] must satisfy 0 < lo < hi"));
            }
        }
        if self.analyses.lyapunov && !self.beam_config().thermal {
            out.push("analyses.lyapunov requires beam.thermal = true".into());
        }
        out
    }

    pub fn validate(&self, base: &Path) -> Result<(), CliError> {
        let problems = self.violations(base);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Invalid(problems))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parse and validate a config from JSON text. `base` resolves relative paths.
pub fn parse_config(text: &str, base: &Path) -> Result<ScenarioConfig, CliError> {
    let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| CliError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    cfg.validate(base)?;
    Ok(cfg)
}

/// Read, parse and validate a config file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = parse_config("{}", Path::new(".")).unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert!(!cfg.beam_config().thermal);
        assert_eq!(cfg.beam_config(), BeamConfig::paper_nonthermal());
    }

    #[test]
    fn overrides_apply_on_top_of_preset() {
        let text = r#"{"preset": "paper-thermal", "beam": {"kappa": 2.5, "frac2": {"a": 0.3}}}"#;
        let cfg = parse_config(text, Path::new(".")).unwrap().beam_config();
        assert!(cfg.thermal);
        assert_eq!(cfg.kappa, 2.5);
        assert_eq!(cfg.frac2.a, 0.3);
        assert_eq!(cfg.frac1.a, 0.5);
    }

    #[test]
    fn all_problems_reported_together() {
        let text = r#"{"beam": {"alpha": 1.0}, "grid": {"n_cells": 4}, "time": {"dt": -1}, "initial": "nope"}"#;
        match parse_config(text, Path::new(".")) {
            Err(CliError::Invalid(list)) => {
                assert_eq!(list.len(), 4, "{list:?}");
                assert!(list[0].contains("alpha - gamma^2*beta must be > 0"));
            }
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        match parse_config("{\n  \"grid\": {\"n_cells\": }\n}", Path::new(".")) {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(parse_config(r#"{"bogus": 1}"#, Path::new(".")), Err(CliError::Parse { .. })));
    }

    #[test]
    fn round_trip_is_identity() {
        let text = r#"{"preset": "paper-thermal", "beam": {"gamma": 0.5}, "time": {"dt": 0.01, "t_end": 3},
                      "analyses": {"decay_fit": true}, "decay_window": [1, 3]}"#;
        let cfg = parse_config(text, Path::new(".")).unwrap();
        let again = parse_config(&cfg.to_json(), Path::new(".")).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.to_json(), again.to_json());
    }

    #[test]
    fn newer_schema_rejected() {
        let err = parse_config(r#"{"schema_version": 2}"#, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("schema_version"));
    }
}
