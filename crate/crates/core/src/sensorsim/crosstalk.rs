//! Cross-talk inversion for a passively scanned grid.
//!
//! Without electrical isolation, probing crossing `(i, j)` (row `i` driven,
//! column `j` read, everything else floating) measures the effective
//! conductance of the whole network between the two electrodes, not the
//! crossing itself. Recovering the true crossing conductances means solving
//! the nonlinear system `G_eff(g) = G_measured` for all crossings at once.
//!
//! The solver runs damped Newton iterations in log-conductance. Each
//! iteration needs the effective conductances and their sensitivities, both
//! read off the inverse of the grounded network Laplacian: with a unit
//! voltage across the probed pair, the derivative of the effective
//! conductance with respect to an edge conductance is the squared voltage
//! drop across that edge.

use serde::Serialize;

use super::linalg::{invert, solve_dense};
use super::nodal::{nodal_oracle, Drive, ResistorGrid};
use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Topology {
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once the largest relative conductance update falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrosstalkSolution {
    /// Recovered crossing resistances, row-major.
    pub resistance: Vec<f64>,
    pub iterations: usize,
    /// Largest relative mismatch between modeled and measured conductances.
    pub residual: f64,
}

/// Forward model: effective two-terminal conductance for every row/column
/// pair, obtained from the nodal oracle with the pair driven and all other
/// electrodes floating.
pub fn floating_scan(grid: &ResistorGrid, v_drive: f64) -> Result<Vec<f64>, SimError> {
    let mut out = Vec::with_capacity(grid.rows() * grid.cols());
    for r in 0..grid.rows() {
        for c in 0..grid.cols() {
            let s = nodal_oracle(grid, &Drive::floating_pair(r, c), v_drive)?;
            out.push(s.row_currents[r] / v_drive);
        }
    }
    Ok(out)
}

/// Effective conductances and the log-sensitivity Jacobian for conductances `g`.
struct Linearization {
    effective: Vec<f64>,
    /// Row-major `m x m`, `m = rows * cols`: d G_eff(p) / d ln g(q).
    jacobian: Vec<f64>,
}

fn linearize(g: &[f64], topo: Topology) -> Result<Linearization, SimError> {
    let (rows, cols) = (topo.rows, topo.cols);
    let nodes = rows + cols;
    // Ground the last column; the remaining nodes index the reduced Laplacian.
    let n = nodes - 1;
    let mut lap = vec![0.0; n * n];
    for r in 0..rows {
        for c in 0..cols {
            let y = g[r * cols + c];
            let (a, b) = (r, rows + c);
            for (i, j, v) in [(a, a, y), (b, b, y), (a, b, -y), (b, a, -y)] {
                if i < n && j < n {
                    lap[i * n + j] += v;
                }
            }
        }
    }
    let x = invert(&lap, n)?;
    let xat = |i: usize, j: usize| if i < n && j < n { x[i * n + j] } else { 0.0 };

    let m = rows * cols;
    let mut effective = vec![0.0; m];
    let mut jacobian = vec![0.0; m * m];
    let mut phi = vec![0.0; nodes];
    for r in 0..rows {
        for c in 0..cols {
            let (a, b) = (r, rows + c);
            // Potentials for a unit current from a to b.
            for (k, p) in phi.iter_mut().enumerate() {
                *p = xat(k, a) - xat(k, b);
            }
            let r_eff = phi[a] - phi[b];
            if r_eff.is_nan() || r_eff <= 0.0 {
                return Err(SimError::Singular);
            }
            let p = r * cols + c;
            effective[p] = 1.0 / r_eff;
            let row = &mut jacobian[p * m..(p + 1) * m];
            for rr in 0..rows {
                for cc in 0..cols {
                    let drop = (phi[rr] - phi[rows + cc]) / r_eff;
                    let q = rr * cols + cc;
                    row[q] = g[q] * drop * drop;
                }
            }
        }
    }
    Ok(Linearization {
        effective,
        jacobian,
    })
}

/// Recovers crossing resistances from passively measured effective
/// conductances (row-major, siemens).
pub fn crosstalk_solve(
    measured: &[f64],
    topo: Topology,
    opts: SolverOptions,
) -> Result<CrosstalkSolution, SimError> {
    let m = topo.rows * topo.cols;
    if topo.rows == 0 || topo.cols == 0 || measured.len() != m {
        return Err(SimError::InvalidConfig(format!(
            "{} measurements for a {}x{} topology",
            measured.len(),
            topo.rows,
            topo.cols
        )));
    }
    if let Some(v) = measured.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(SimError::InvalidConfig(format!("bad measured conductance {v}")));
    }
    // Each effective conductance bounds its direct crossing from above.
    let mut g = measured.to_vec();
    let mut residual = f64::INFINITY;
    for iteration in 1..=opts.max_iterations {
        let lin = linearize(&g, topo)?;
        // Rows scaled by the measurement so the system is dimensionless.
        let mut rhs: Vec<f64> = lin
            .effective
            .iter()
            .zip(measured)
            .map(|(e, m)| -(e - m) / m)
            .collect();
        residual = rhs.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let mut jac = lin.jacobian;
        for (p, meas) in measured.iter().enumerate() {
            for v in &mut jac[p * m..(p + 1) * m] {
                *v /= meas;
            }
        }
        let mut step = solve_dense(&mut jac, &mut rhs, m)?;
        let largest = step.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if largest > 1.0 {
            step.iter_mut().for_each(|s| *s /= largest);
        }
        let mut max_rel = 0.0_f64;
        for (gi, s) in g.iter_mut().zip(&step) {
            let factor = s.exp();
            max_rel = max_rel.max((factor - 1.0).abs());
            *gi *= factor;
        }
        if max_rel < opts.tolerance {
            let check = linearize(&g, topo)?;
            residual = check
                .effective
                .iter()
                .zip(measured)
                .fold(0.0_f64, |a, (e, m)| a.max(((e - m) / m).abs()));
            return Ok(CrosstalkSolution {
                resistance: g.iter().map(|y| 1.0 / y).collect(),
                iterations: iteration,
                residual,
            });
        }
    }
    Err(SimError::NonConvergence {
        iterations: opts.max_iterations,
        residual,
    })
}
