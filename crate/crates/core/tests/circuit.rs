//! Readout and cross-talk solver against independent circuit formulations.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tactile::sensorsim::{
    adc_quantize, crosstalk_solve, floating_scan, nodal_oracle, scan_matrix, Drive, Node, ReadoutConfig,
    ResistorGrid, SolverOptions, Topology,
};

fn random_grid(rng: &mut impl Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> ResistorGrid {
    let ohms = (0..rows * cols).map(|_| lo * (hi / lo).powf(rng.random::<f64>())).collect();
    ResistorGrid::new(rows, cols, ohms).unwrap()
}

/// Modified nodal analysis with one voltage source per driven electrode.
/// Returns the current each source delivers, indexed by node (rows first).
fn mna_source_currents(grid: &ResistorGrid, drive: &Drive, v_ref: f64) -> Vec<f64> {
    let (rows, cols) = (grid.rows(), grid.cols());
    let nodes = rows + cols;
    let idx = |n: &Node| match *n {
        Node::Row(r) => r,
        Node::Col(c) => rows + c,
    };
    let sources: Vec<(usize, f64)> = drive
        .grounded
        .iter()
        .map(|n| (idx(n), 0.0))
        .chain(drive.pulled_up.iter().map(|n| (idx(n), v_ref)))
        .collect();
    let dim = nodes + sources.len();
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut b = DVector::<f64>::zeros(dim);
    for r in 0..rows {
        for c in 0..cols {
            let g = 1.0 / grid.get(r, c);
            let (i, j) = (r, rows + c);
            a[(i, i)] += g;
            a[(j, j)] += g;
            a[(i, j)] -= g;
            a[(j, i)] -= g;
        }
    }
    for (k, &(node, v)) in sources.iter().enumerate() {
        a[(node, nodes + k)] = -1.0;
        a[(nodes + k, node)] = 1.0;
        b[nodes + k] = v;
    }
    let x = a.lu().solve(&b).expect("MNA system is regular");
    let mut out = vec![0.0; nodes];
    for (k, &(node, _)) in sources.iter().enumerate() {
        out[node] = x[nodes + k];
    }
    out
}

#[test]
fn nodal_oracle_matches_mna_on_8x8() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let grid = random_grid(&mut rng, 8, 8, 1e3, 1e6);
    let drives = (0..8)
        .map(|r| Drive::isolation(8, 8, r))
        .chain([Drive::floating_pair(2, 5), Drive::floating_pair(7, 0)]);
    for drive in drives {
        let s = nodal_oracle(&grid, &drive, 1.2).unwrap();
        let mna = mna_source_currents(&grid, &drive, 1.2);
        let ours: Vec<f64> = s.row_currents.iter().chain(&s.col_currents).copied().collect();
        // Electrodes at the same potential as all neighbours carry exactly
        // zero, so the tolerance is relative to the largest current.
        let scale = mna.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in ours.iter().zip(&mna) {
            assert!((a - b).abs() <= 1e-9 * scale, "{a} vs {b}");
        }
    }
}

#[test]
fn one_by_one_grid_carries_v_over_r() {
    let grid = ResistorGrid::new(1, 1, vec![4.7e3]).unwrap();
    let s = nodal_oracle(&grid, &Drive::isolation(1, 1, 0), 1.2).unwrap();
    assert!((s.col_currents[0] - 1.2 / 4.7e3).abs() < 1e-15);
}

#[test]
fn isolation_scan_matches_nodal_analysis() {
    let cfg = ReadoutConfig {
        noise_sigma: 0.0,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let grid = random_grid(&mut rng, 16, 16, 1e3, 1e6);
        let scanned = scan_matrix(grid.ohms(), 1e6, 1.0, &cfg, 0);
        for r in 0..16 {
            let s = nodal_oracle(&grid, &Drive::isolation(16, 16, r), cfg.v_ref).unwrap();
            for c in 0..16 {
                // The column amplifier holds its input at v_ref and sinks the
                // crossing current through the feedback resistor.
                let v = cfg.v_ref + s.col_currents[c] * cfg.r_fb;
                let expected = adc_quantize(v, &cfg) as i32;
                let got = scanned[r * 16 + c] as i32;
                assert!((got - expected).abs() <= 1, "({r},{c}): {got} vs {expected}");
            }
        }
    }
}

fn diagonal_dominant_grid(rng: &mut impl Rng, n: usize) -> ResistorGrid {
    let ohms = (0..n * n)
        .map(|i| {
            if i / n == i % n {
                rng.random_range(1e3..2e3)
            } else {
                rng.random_range(2e4..2e5)
            }
        })
        .collect();
    ResistorGrid::new(n, n, ohms).unwrap()
}

fn assert_inverts(grid: &ResistorGrid, tol: f64) {
    let meas = floating_scan(grid, 1.0).unwrap();
    let topo = Topology {
        rows: grid.rows(),
        cols: grid.cols(),
    };
    let sol = crosstalk_solve(&meas, topo, SolverOptions::default()).unwrap();
    for (got, truth) in sol.resistance.iter().zip(grid.ohms()) {
        assert!((got - truth).abs() / truth < tol, "{got} vs {truth}");
    }
}

#[test]
fn crosstalk_solver_inverts_diagonal_dominant_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for i in 0..20 {
        let n = 4 + i % 5;
        assert_inverts(&diagonal_dominant_grid(&mut rng, n), 1e-6);
    }
}

#[test]
fn crosstalk_solver_inverts_random_16x16() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    assert_inverts(&random_grid(&mut rng, 16, 16, 1e3, 1e5), 1e-6);
}
