//! Shared instances for the integration tests.
#![allow(dead_code)]

use voltra::bsvie::{BsvieOptions, FnBsvie};
use voltra::oracle::{TreeSolution, TreeSpec};
use voltra::{build_grid, BasisSpec, ConstantVolatility, PathEnsemble, PicardOptions, Regressor};

/// Tree ensemble, filtration regressor and matching oracle spec.
pub fn tree_setup(n_steps: usize, x0: f64, sigma: f64) -> (PathEnsemble, Regressor, TreeSpec) {
    let grid = build_grid(1.0, n_steps).unwrap();
    let ens = PathEnsemble::binary_tree(&ConstantVolatility::scalar(sigma), &[x0], &grid).unwrap();
    let reg = Regressor::new(&ens, &BasisSpec::filtration()).unwrap();
    let spec = TreeSpec {
        x0,
        sigma,
        horizon: 1.0,
        n_steps,
    };
    (ens, reg, spec)
}

pub fn tight_options() -> BsvieOptions {
    BsvieOptions {
        picard: PicardOptions {
            tol: 1e-14,
            max_iter: 400,
            ..Default::default()
        },
        ..Default::default()
    }
}

/// `ξ(s, x) = s·x`, `f ≡ 0`.
pub fn linear_free_term() -> FnBsvie {
    FnBsvie::free_term(1, |s, x, o| o[0] = s * x[0], |_, x, o| o[0] = x[0])
}

/// Nonlinear, `s`-dependent data reading both diagonal slots.
pub fn coupled_scalar() -> FnBsvie {
    FnBsvie::free_term(
        1,
        |s, x, o| o[0] = s * x[0] + s.cos() * x[0] * x[0],
        |s, x, o| o[0] = x[0] - s.sin() * x[0] * x[0],
    )
    .with_generator(
        |_, s, x, y, z, u, v, o| o[0] = -0.5 * y[0] + 0.3 * s.sin() * z[0] + 0.2 * u[0] - 0.1 * v[0] * v[0] + 0.1 * s * x[0].cos(),
        |_, s, x, dy, dz, _, z, _, _, o| o[0] = 0.3 * s.cos() * z[0] + 0.1 * x[0].cos() - 0.5 * dy[0] + 0.3 * s.sin() * dz[0],
    )
}

/// Two components with cross-coupling through the diagonal.
pub fn coupled_pair() -> FnBsvie {
    FnBsvie::free_term(
        2,
        |s, x, o| {
            o[0] = (s * x[0]).tanh();
            o[1] = 1.0 + 0.5 * s * s;
        },
        |s, x, o| {
            let t = (s * x[0]).tanh();
            o[0] = x[0] * (1.0 - t * t);
            o[1] = s;
        },
    )
    .with_generator(
        |_, s, _, y, z, u, v, o| {
            o[0] = -0.3 * y[1] + 0.2 * s * z[0] + 0.1 * u[1] * u[0].sin();
            o[1] = 0.1 * y[0] * y[0] - 0.2 * v[0] + 0.05 * s * z[1];
        },
        |_, s, _, dy, dz, y, z, _, _, o| {
            o[0] = 0.2 * z[0] - 0.3 * dy[1] + 0.2 * s * dz[0];
            o[1] = 0.05 * z[1] + 0.2 * y[0] * dy[0] + 0.05 * s * dz[1];
        },
    )
}

/// Largest deviation between solver fields and the oracle on every node/path.
pub fn oracle_gap(sol: &voltra::bsvie::BsvieSolution, tree: &TreeSolution) -> [f64; 7] {
    let n = tree.spec.n_steps;
    let mut gap = [0.0f64; 7];
    let mut upd = |k: usize, a: &[f64], b: &[f64]| {
        for (x, y) in a.iter().zip(b) {
            gap[k] = gap[k].max((x - y).abs());
        }
    };
    for p in 0..tree.n_leaves() {
        for i in 0..=n {
            let k = tree.prefix(i, p);
            for j in 0..=n {
                upd(0, sol.y(j).get(i, p), &tree.y[j][i][k]);
                upd(1, sol.dy(j).get(i, p), &tree.dy[j][i][k]);
                if i < n {
                    upd(2, sol.z(j).get(i, p), &tree.z[j][i][k]);
                    upd(3, sol.dz(j).get(i, p), &tree.dz[j][i][k]);
                }
            }
            upd(4, sol.diag_y().get(i, p), &tree.diag_y[i][k]);
            upd(5, sol.diag_z().get(i, p), &tree.diag_z[i][k]);
            upd(6, sol.diag_dy().get(i, p), &tree.diag_dy[i][k]);
        }
    }
    gap
}
