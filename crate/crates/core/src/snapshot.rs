//! Plain-text state snapshots for restart and golden files.
//!
//! ```text
//! # piezobeam-snapshot 1
//! # t=<t> step=<k> n_cells=<n> length=<L> thermal=<bool>
//! # damper1 a=<a> eta=<eta> gain=<l>
//! # damper2 a=<a> eta=<eta> gain=<l>
//! [nodes]
//! x,v,v_t,p,p_t
//! ...
//! [theta]            (thermal only)
//! x,theta
//! ...
//! [damper1]
//! xi,weight,phi
//! ...
//! [damper2]
//! xi,weight,phi
//! ...
//! ```
//!
//! Every number is written with 17 significant digits, so a write/read cycle
//! restores the state bit for bit.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::beam_model::{BeamState, Grid};
use crate::error::{PiezoError, Result};
use crate::frac_diffusive::{DiffusiveOperator, FracParams};

pub const SNAPSHOT_MAGIC: &str = "# piezobeam-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

/// A state together with its time stamp and grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub step: usize,
    pub grid: Grid,
    pub state: BeamState,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn bad(msg: impl Into<String>) -> PiezoError {
    PiezoError::Snapshot(msg.into())
}

impl Snapshot {
    pub fn to_text(&self) -> String {
        let s = &self.state;
        let mut out = String::new();
        let _ = writeln!(out, "{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}");
        let _ = writeln!(
            out,
            "# t={} step={} n_cells={} length={} thermal={}",
            num(self.t),
            self.step,
            self.grid.n_cells,
            num(self.grid.length()),
            s.theta.is_some()
        );
        for (name, d) in [("damper1", &s.damper1), ("damper2", &s.damper2)] {
            let p = d.params();
            let _ = writeln!(out, "# {name} a={} eta={} gain={}", num(p.a), num(p.eta), num(p.gain));
        }
        out.push_str("[nodes]\nx,v,v_t,p,p_t\n");
        for j in 0..s.v.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                num(self.grid.x(j)),
                num(s.v[j]),
                num(s.v_t[j]),
                num(s.p[j]),
                num(s.p_t[j])
            );
        }
        if let Some(th) = &s.theta {
            out.push_str("[theta]\nx,theta\n");
            for (x, v) in self.grid.centres().iter().zip(th) {
                let _ = writeln!(out, "{},{}", num(*x), num(*v));
            }
        }
        for (name, d) in [("damper1", &s.damper1), ("damper2", &s.damper2)] {
            let _ = writeln!(out, "[{name}]\nxi,weight,phi");
            for k in 0..d.len() {
                let _ = writeln!(
                    out,
                    "{},{},{}",
                    num(d.nodes()[k]),
                    num(d.weights()[k]),
                    num(d.modal_state()[k])
                );
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| bad("empty snapshot"))?;
        let version = first
            .strip_prefix(SNAPSHOT_MAGIC)
            .ok_or_else(|| bad("missing snapshot header"))?
            .trim()
            .parse::<u32>()
            .map_err(|_| bad("unreadable snapshot version"))?;
        if version != SNAPSHOT_VERSION {
            return Err(bad(format!("unsupported snapshot version {version}")));
        }

        let mut meta: HashMap<String, String> = HashMap::new();
        let mut sections: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
        let mut expect_header = false;
        for (lineno, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut words = rest.split_whitespace().peekable();
                let prefix = match words.peek() {
                    Some(w) if !w.contains('=') => format!("{}.", words.next().unwrap_or_default()),
                    _ => String::new(),
                };
                for w in words {
                    let (k, v) = w.split_once('=').ok_or_else(|| bad(format!("line {}: bad field '{w}'", lineno + 1)))?;
                    meta.insert(format!("{prefix}{k}"), v.to_string());
                }
            } else if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                sections.push((name.to_string(), Vec::new()));
                expect_header = true;
            } else if expect_header {
                expect_header = false;
            } else {
                let row = line
                    .split(',')
                    .map(|f| f.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?;
                sections
                    .last_mut()
                    .ok_or_else(|| bad(format!("line {}: data before any section", lineno + 1)))?
                    .1
                    .push(row);
            }
        }

        let field = |key: &str| -> Result<&str> {
            meta.get(key).map(String::as_str).ok_or_else(|| bad(format!("missing field '{key}'")))
        };
        let float = |key: &str| -> Result<f64> {
            field(key)?.parse().map_err(|_| bad(format!("field '{key}' is not a number")))
        };
        let t = float("t")?;
        let step = field("step")?.parse().map_err(|_| bad("field 'step' is not an integer"))?;
        let n_cells: usize = field("n_cells")?.parse().map_err(|_| bad("field 'n_cells' is not an integer"))?;
        let thermal = field("thermal")? == "true";
        let grid = Grid::new(n_cells, float("length")?)?;

        let section = |name: &str, cols: usize, rows: usize| -> Result<&Vec<Vec<f64>>> {
            let data = &sections
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| bad(format!("missing section [{name}]")))?
                .1;
            if data.len() != rows && rows != 0 {
                return Err(bad(format!("section [{name}] has {} rows, expected {rows}", data.len())));
            }
            if let Some(r) = data.iter().find(|r| r.len() != cols) {
                return Err(bad(format!("section [{name}] row with {} columns, expected {cols}", r.len())));
            }
            Ok(data)
        };
        let nodes = section("nodes", 5, n_cells + 1)?;
        let column = |data: &Vec<Vec<f64>>, c: usize| data.iter().map(|r| r[c]).collect::<Vec<f64>>();
        let theta = if thermal {
            Some(column(section("theta", 2, n_cells)?, 1))
        } else {
            None
        };
        let damper = |name: &str| -> Result<DiffusiveOperator> {
            let params = FracParams::new(
                float(&format!("{name}.a"))?,
                float(&format!("{name}.eta"))?,
                float(&format!("{name}.gain"))?,
            )?;
            let rows = section(name, 3, 0)?;
            DiffusiveOperator::from_parts(params, column(rows, 0), column(rows, 1), column(rows, 2))
        };
        let state = BeamState {
            v: column(nodes, 1),
            v_t: column(nodes, 2),
            p: column(nodes, 3),
            p_t: column(nodes, 4),
            theta,
            damper1: damper("damper1")?,
            damper2: damper("damper2")?,
        };
        Ok(Self { t, step, grid, state })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
