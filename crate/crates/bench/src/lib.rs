//! Fixtures shared by the solver benchmarks.

use voltra::{build_grid, simulate_forward, BasisSpec, ConstantVolatility, PathEnsemble, Regressor};

/// Scalar Brownian ensemble on `[0, 1]` with a cubic regression basis.
pub fn fixture(n_steps: usize, n_paths: usize) -> (PathEnsemble, Regressor) {
    let grid = build_grid(1.0, n_steps).expect("valid grid");
    let ens = simulate_forward(&ConstantVolatility::scalar(1.0), &[0.0], &grid, n_paths, 1).expect("simulation");
    let reg = Regressor::new(&ens, &BasisSpec::polynomial(3)).expect("regressor");
    (ens, reg)
}
