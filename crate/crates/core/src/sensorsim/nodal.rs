//! Kirchhoff solve of the full row/column resistor network.
//!
//! Every electrode is a node; every crossing `(row, col)` is a resistor
//! between row node `row` and column node `col`. Electrodes are either pinned
//! by an ideal source (ground or `v_ref`) or left floating. Floating node
//! potentials follow from current conservation, and the current each pinned
//! electrode sources into the network is reported.

use super::linalg::solve_dense;
use super::SimError;

/// Largest electrode count per side the oracle accepts.
pub const MAX_SIDE: usize = 32;

/// A `rows x cols` matrix of crossing resistances in ohms, row-major.
/// `f64::INFINITY` marks an open crossing.
#[derive(Debug, Clone, PartialEq)]
pub struct ResistorGrid {
    rows: usize,
    cols: usize,
    ohms: Vec<f64>,
}

impl ResistorGrid {
    pub fn new(rows: usize, cols: usize, ohms: Vec<f64>) -> Result<Self, SimError> {
        if rows == 0 || cols == 0 || rows > MAX_SIDE || cols > MAX_SIDE {
            return Err(SimError::InvalidConfig(format!(
                "grid {rows}x{cols} outside 1..={MAX_SIDE} per side"
            )));
        }
        if ohms.len() != rows * cols {
            return Err(SimError::InvalidConfig(format!(
                "{} resistances for a {rows}x{cols} grid",
                ohms.len()
            )));
        }
        if let Some(r) = ohms.iter().find(|r| r.is_nan() || **r <= 0.0) {
            return Err(SimError::InvalidConfig(format!("non-positive resistance {r}")));
        }
        Ok(Self { rows, cols, ohms })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn ohms(&self) -> &[f64] {
        &self.ohms
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.ohms[row * self.cols + col]
    }

    pub(crate) fn conductance(&self, row: usize, col: usize) -> f64 {
        1.0 / self.get(row, col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    Row(usize),
    Col(usize),
}

/// Which electrodes are grounded and which are held at the reference voltage.
/// Anything in neither set floats.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Drive {
    pub grounded: Vec<Node>,
    pub pulled_up: Vec<Node>,
}

impl Drive {
    /// Isolation scheme: one row grounded, every other electrode at `v_ref`.
    pub fn isolation(rows: usize, cols: usize, grounded_row: usize) -> Self {
        Self {
            grounded: vec![Node::Row(grounded_row)],
            pulled_up: (0..rows)
                .filter(|&r| r != grounded_row)
                .map(Node::Row)
                .chain((0..cols).map(Node::Col))
                .collect(),
        }
    }

    /// Passive two-terminal probe: `row` at `v_ref`, `col` at ground, the
    /// rest floating.
    pub fn floating_pair(row: usize, col: usize) -> Self {
        Self {
            grounded: vec![Node::Col(col)],
            pulled_up: vec![Node::Row(row)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodalSolution {
    pub row_potentials: Vec<f64>,
    pub col_potentials: Vec<f64>,
    /// Current each row source pushes into the network (0 for floating rows).
    pub row_currents: Vec<f64>,
    /// Current each column source pushes into the network (0 for floating
    /// columns). In the isolation scheme this is what the column amplifier
    /// converts through its feedback resistor.
    pub col_currents: Vec<f64>,
}

enum Pin {
    Fixed(f64),
    Free(usize),
}

pub fn nodal_oracle(grid: &ResistorGrid, drive: &Drive, v_ref: f64) -> Result<NodalSolution, SimError> {
    let (rows, cols) = (grid.rows, grid.cols);
    if grid.ohms.iter().all(|r| r.is_infinite()) {
        return Err(SimError::Singular);
    }
    let node_index = |n: Node| -> Result<usize, SimError> {
        match n {
            Node::Row(r) if r < rows => Ok(r),
            Node::Col(c) if c < cols => Ok(rows + c),
            _ => Err(SimError::InvalidConfig(format!("{n:?} outside {rows}x{cols} grid"))),
        }
    };
    let mut fixed: Vec<Option<f64>> = vec![None; rows + cols];
    for (nodes, v) in [(&drive.grounded, 0.0), (&drive.pulled_up, v_ref)] {
        for &n in nodes {
            let i = node_index(n)?;
            if fixed[i].is_some() {
                return Err(SimError::InvalidConfig(format!("{n:?} driven twice")));
            }
            fixed[i] = Some(v);
        }
    }
    let mut free_count = 0;
    let pins: Vec<Pin> = fixed
        .iter()
        .map(|f| match f {
            Some(v) => Pin::Fixed(*v),
            None => {
                free_count += 1;
                Pin::Free(free_count - 1)
            }
        })
        .collect();

    // Conductance matrix over the floating nodes.
    let n = free_count;
    let mut g = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for r in 0..rows {
        for c in 0..cols {
            let y = grid.conductance(r, c);
            if y == 0.0 {
                continue;
            }
            match (&pins[r], &pins[rows + c]) {
                (Pin::Free(i), Pin::Free(j)) => {
                    g[i * n + i] += y;
                    g[j * n + j] += y;
                    g[i * n + j] -= y;
                    g[j * n + i] -= y;
                }
                (Pin::Free(i), Pin::Fixed(v)) | (Pin::Fixed(v), Pin::Free(i)) => {
                    g[i * n + i] += y;
                    b[*i] += y * v;
                }
                (Pin::Fixed(_), Pin::Fixed(_)) => {}
            }
        }
    }
    let x = if n > 0 { solve_dense(&mut g, &mut b, n)? } else { Vec::new() };
    let potential = |i: usize| match pins[i] {
        Pin::Fixed(v) => v,
        Pin::Free(k) => x[k],
    };
    let row_potentials: Vec<f64> = (0..rows).map(potential).collect();
    let col_potentials: Vec<f64> = (0..cols).map(|c| potential(rows + c)).collect();

    let mut row_currents = vec![0.0; rows];
    let mut col_currents = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            let y = grid.conductance(r, c);
            let i = y * (row_potentials[r] - col_potentials[c]);
            row_currents[r] += i;
            col_currents[c] -= i;
        }
    }
    for (i, cur) in row_currents.iter_mut().enumerate() {
        if matches!(pins[i], Pin::Free(_)) {
            *cur = 0.0;
        }
    }
    for (c, cur) in col_currents.iter_mut().enumerate() {
        if matches!(pins[rows + c], Pin::Free(_)) {
            *cur = 0.0;
        }
    }
    Ok(NodalSolution {
        row_potentials,
        col_potentials,
        row_currents,
        col_currents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_crossing() {
        let g = ResistorGrid::new(1, 1, vec![2e3]).unwrap();
        let s = nodal_oracle(&g, &Drive::isolation(1, 1, 0), 1.2).unwrap();
        assert!((s.col_currents[0] - 1.2 / 2e3).abs() < 1e-15);
    }

    #[test]
    fn uniform_2x2_isolation_is_exact() {
        let r = 10e3;
        let g = ResistorGrid::new(2, 2, vec![r; 4]).unwrap();
        let s = nodal_oracle(&g, &Drive::isolation(2, 2, 0), 1.2).unwrap();
        for c in 0..2 {
            assert!((s.col_currents[c] - 1.2 / r).abs() < 1e-15);
        }
    }

    #[test]
    fn floating_pair_on_uniform_2x2() {
        // Direct path R in parallel with the three-resistor detour 3R.
        let r = 1e3;
        let g = ResistorGrid::new(2, 2, vec![r; 4]).unwrap();
        let s = nodal_oracle(&g, &Drive::floating_pair(0, 0), 1.0).unwrap();
        let expected = 1.0 / r + 1.0 / (3.0 * r);
        assert!((s.row_currents[0] - expected).abs() < 1e-15);
        assert!((s.col_currents[0] + expected).abs() < 1e-15);
    }

    #[test]
    fn open_network_is_singular() {
        let g = ResistorGrid::new(2, 2, vec![f64::INFINITY; 4]).unwrap();
        assert!(matches!(
            nodal_oracle(&g, &Drive::floating_pair(0, 0), 1.0),
            Err(SimError::Singular)
        ));
        assert!(matches!(
            nodal_oracle(&g, &Drive::isolation(2, 2, 0), 1.0),
            Err(SimError::Singular)
        ));
    }

    #[test]
    fn rejects_oversize_and_bad_drives() {
        assert!(ResistorGrid::new(33, 2, vec![1.0; 66]).is_err());
        let g = ResistorGrid::new(2, 2, vec![1.0; 4]).unwrap();
        let twice = Drive {
            grounded: vec![Node::Row(0)],
            pulled_up: vec![Node::Row(0)],
        };
        assert!(nodal_oracle(&g, &twice, 1.0).is_err());
        let outside = Drive {
            grounded: vec![Node::Col(5)],
            pulled_up: vec![],
        };
        assert!(nodal_oracle(&g, &outside, 1.0).is_err());
    }
}
