//! Dense semi-discrete generator in energy variables.

use nalgebra::DMatrix;

use crate::beam_model::{rhs_flat, BeamConfig, BeamState, Grid};
use crate::error::{PiezoError, Result};

/// The linear map `y -> y'` restricted to the free unknowns.
///
/// Unknown order: `v_1..v_n, v_t, p_1..p_n, p_t, phi1, phi2, theta`. Mode banks
/// with zero gain are left out: they are driven by the beam but never act back
/// on it and carry no energy.
#[derive(Debug, Clone)]
pub struct Generator {
    /// Generator in the raw unknowns.
    pub raw: DMatrix<f64>,
    /// Energy Gram matrix: `E = y^T H y / 2`.
    pub gram: DMatrix<f64>,
    /// `R A R^-1` with `H = R^T R`; the Euclidean norm of this matrix is the energy norm.
    pub energy: DMatrix<f64>,
    /// Flat-state index of each unknown.
    pub flat_index: Vec<usize>,
}

impl Generator {
    pub fn dim(&self) -> usize {
        self.flat_index.len()
    }

    /// Gather the free unknowns of a flat state.
    pub fn restrict(&self, y: &[f64]) -> Vec<f64> {
        self.flat_index.iter().map(|&i| y[i]).collect()
    }
}

/// Assemble the generator by applying the right-hand side to unit vectors.
/// `template` fixes the mode tables.
pub fn assemble_generator(cfg: &BeamConfig, grid: &Grid, template: &BeamState) -> Result<Generator> {
    cfg.validate()?;
    template.check_invariants(cfg, grid)?;
    let lay = template.layout();
    let n = grid.n_cells;
    let mut flat_index: Vec<usize> = Vec::new();
    for block in [lay.v(), lay.v_t(), lay.p(), lay.p_t()] {
        flat_index.extend(block.start + 1..block.end);
    }
    let d1 = &template.damper1;
    let d2 = &template.damper2;
    if cfg.frac1.gain > 0.0 {
        flat_index.extend(lay.phi1());
    }
    if cfg.frac2.gain > 0.0 {
        flat_index.extend(lay.phi2());
    }
    flat_index.extend(lay.theta());
    let dim = flat_index.len();

    let mut raw = DMatrix::zeros(dim, dim);
    let mut y = vec![0.0; lay.len()];
    let mut dy = vec![0.0; lay.len()];
    for (col, &idx) in flat_index.iter().enumerate() {
        y[idx] = 1.0;
        rhs_flat(cfg, grid, d1, d2, &y, &mut dy);
        y[idx] = 0.0;
        for (row, &out) in flat_index.iter().enumerate() {
            raw[(row, col)] = dy[out];
        }
    }

    // Gram matrix, block by block
    let mut gram = DMatrix::zeros(dim, dim);
    let dx = grid.dx;
    let (v0, f0, p0, g0) = (0, n, 2 * n, 3 * n);
    // node j (1..=n) sits at offset j - 1 inside each nodal block
    for j in 1..=n {
        gram[(f0 + j - 1, f0 + j - 1)] = cfg.rho * grid.weight(j);
        gram[(g0 + j - 1, g0 + j - 1)] = cfg.mag_mu * grid.weight(j);
    }
    let gb = cfg.gamma * cfg.beta;
    for cell in 0..n {
        // difference (node cell+1) - (node cell); node 0 is pinned
        let ends: Vec<(usize, f64)> = if cell == 0 {
            vec![(0, 1.0)]
        } else {
            vec![(cell, 1.0), (cell - 1, -1.0)]
        };
        for &(a, sa) in &ends {
            for &(b, sb) in &ends {
                let w = sa * sb / dx;
                gram[(v0 + a, v0 + b)] += cfg.alpha * w;
                gram[(p0 + a, p0 + b)] += cfg.beta * w;
                gram[(v0 + a, p0 + b)] -= gb * w;
                gram[(p0 + a, v0 + b)] -= gb * w;
            }
        }
    }
    let mut offset = 4 * n;
    for (d, gain) in [(d1, cfg.frac1.gain), (d2, cfg.frac2.gain)] {
        if gain > 0.0 {
            let scale = d.params().output_scale() * gain;
            for (k, w) in d.weights().iter().enumerate() {
                gram[(offset + k, offset + k)] = scale * w;
            }
            offset += d.len();
        }
    }
    if lay.thermal {
        for j in 0..n {
            gram[(offset + j, offset + j)] = cfg.c_heat * dx;
        }
    }

    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| PiezoError::Domain("energy Gram matrix is not positive definite".into()))?;
    let l = chol.l();
    // energy = L^T A L^-T, computed as (L^-1 (L^T A)^T)^T
    let lt_a = l.transpose() * &raw;
    let x = l
        .solve_lower_triangular(&lt_a.transpose())
        .ok_or_else(|| PiezoError::Domain("singular Cholesky factor".into()))?;
    Ok(Generator {
        raw,
        gram,
        energy: x.transpose(),
        flat_index,
    })
}
