//! Brute-force reference solution of a BSVIE on the two-point tree.
//!
//! Every conditional expectation is an explicit average over the two children
//! of a tree node; nothing here goes through [`crate::regression`] or the path
//! ensemble. At each node the coupling between `𝒴`, `Y^t` and `∂Y^t` is
//! resolved by a damped fixed-point iteration.

use crate::bsvie::FnBsvie;
use crate::error::{Error, Result};

/// Scalar tree `X_{i+1} = X_i ± σ√Δ` on a uniform grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeSpec {
    pub x0: f64,
    pub sigma: f64,
    pub horizon: f64,
    pub n_steps: usize,
}

/// Largest tree the oracle accepts.
pub const MAX_TREE_STEPS: usize = 3;

/// `[node][prefix][component]`.
pub type TreeField = Vec<Vec<Vec<f64>>>;

/// Exact solution on every tree node. Prefix `k` at node `i` has children
/// `2k` (down) and `2k + 1` (up).
#[derive(Clone, Debug, PartialEq)]
pub struct TreeSolution {
    pub spec: TreeSpec,
    pub times: Vec<f64>,
    /// `[node][prefix]`.
    pub x: Vec<Vec<f64>>,
    pub cal_y: TreeField,
    pub cal_z: TreeField,
    /// `[s-node][node][prefix][component]`.
    pub y: Vec<TreeField>,
    pub z: Vec<TreeField>,
    pub dy: Vec<TreeField>,
    pub dz: Vec<TreeField>,
    pub diag_y: TreeField,
    pub diag_z: TreeField,
    pub diag_dy: TreeField,
    /// Largest number of inner iterations used at any node.
    pub inner_iterations: usize,
}

impl TreeSolution {
    /// Tree node visited by leaf `path` at time node `i`.
    pub fn prefix(&self, i: usize, path: usize) -> usize {
        path >> (self.spec.n_steps - i)
    }

    pub fn n_leaves(&self) -> usize {
        1 << self.spec.n_steps
    }

    /// Flow residuals per pair and leaf, pair-major, `d` entries each.
    pub fn flow_residual(&self, coeffs: &FnBsvie, pairs: &[(usize, usize)], with_correction: bool) -> Vec<f64> {
        let d = coeffs.dim;
        let n = self.spec.n_steps;
        let mut out = Vec::new();
        let mut fv = vec![0.0; d];
        for &(a, b) in pairs {
            for leaf in 0..self.n_leaves() {
                let ka = self.prefix(a, leaf);
                let kb = self.prefix(b, leaf);
                let mut r: Vec<f64> = (0..d).map(|c| self.diag_y[a][ka][c] - self.diag_y[b][kb][c]).collect();
                for i in a..b {
                    let k = self.prefix(i, leaf);
                    let dt = self.times[i + 1] - self.times[i];
                    let up = (leaf >> (n - 1 - i)) & 1 == 1;
                    let db = if up { dt.sqrt() } else { -dt.sqrt() };
                    let (y, z) = (&self.diag_y[i][k], &self.diag_z[i][k]);
                    (coeffs.f)(self.times[i], self.times[i], &[self.x[i][k]], y, z, y, z, &mut fv);
                    for c in 0..d {
                        let corr = if with_correction { self.diag_dy[i][k][c] } else { 0.0 };
                        r[c] -= dt * (fv[c] - corr) - z[c] * db;
                    }
                }
                out.extend(r);
            }
        }
        out
    }
}

fn empty(n: usize, d: usize) -> TreeField {
    (0..=n).map(|i| vec![vec![0.0; d]; 1 << i]).collect()
}

const INNER_TOL: f64 = 1e-14;
const INNER_MAX: usize = 100_000;
const DAMPING: f64 = 0.5;

/// Solves the BSVIE exactly on the tree of `spec`.
pub fn tree_oracle(coeffs: &FnBsvie, spec: &TreeSpec) -> Result<TreeSolution> {
    let n = spec.n_steps;
    if n == 0 || n > MAX_TREE_STEPS {
        return Err(Error::Oracle(format!("tree needs 1..={MAX_TREE_STEPS} steps, got {n}")));
    }
    let d = coeffs.dim;
    let step = spec.horizon / n as f64;
    let times: Vec<f64> = (0..=n).map(|i| if i == n { spec.horizon } else { i as f64 * step }).collect();
    let mut x: Vec<Vec<f64>> = vec![vec![spec.x0]];
    for i in 0..n {
        let h = (times[i + 1] - times[i]).sqrt();
        let next = x[i]
            .iter()
            .flat_map(|&xi| [xi - spec.sigma * h, xi + spec.sigma * h])
            .collect();
        x.push(next);
    }

    let mut cal_y = empty(n, d);
    let mut cal_z = empty(n, d);
    let mut y: Vec<TreeField> = vec![empty(n, d); n + 1];
    let mut z: Vec<TreeField> = vec![empty(n, d); n + 1];
    let mut dy: Vec<TreeField> = vec![empty(n, d); n + 1];
    let mut dz: Vec<TreeField> = vec![empty(n, d); n + 1];
    let mut diag_y = empty(n, d);
    let mut diag_z = empty(n, d);
    let mut diag_dy = empty(n, d);

    for k in 0..(1 << n) {
        let xt = [x[n][k]];
        (coeffs.xi)(times[n], &xt, &mut cal_y[n][k]);
        for j in 0..=n {
            (coeffs.xi)(times[j], &xt, &mut y[j][n][k]);
            (coeffs.d_xi)(times[j], &xt, &mut dy[j][n][k]);
        }
        diag_y[n][k] = y[n][n][k].clone();
        diag_dy[n][k] = dy[n][n][k].clone();
    }

    let mut inner_iterations = 0;
    let mut fv = vec![0.0; d];
    let mut gv = vec![0.0; d];
    for i in (0..n).rev() {
        let t = times[i];
        let dt = times[i + 1] - t;
        let h = dt.sqrt();
        for k in 0..(1 << i) {
            let xs = [x[i][k]];
            // Mean and increment-weighted mean over the two children.
            let split = |f: &TreeField| -> (Vec<f64>, Vec<f64>) {
                let (lo, hi) = (&f[i + 1][2 * k], &f[i + 1][2 * k + 1]);
                let e = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
                let zz = lo.iter().zip(hi).map(|(a, b)| (b - a) / (2.0 * h)).collect();
                (e, zz)
            };
            let (ey, zy) = split(&cal_y);
            let mut eu = Vec::with_capacity(n + 1);
            let mut edu = Vec::with_capacity(n + 1);
            for j in 0..=n {
                let (e, zz) = split(&y[j]);
                eu.push(e);
                z[j][i][k] = zz;
                let (e, zz) = split(&dy[j]);
                edu.push(e);
                dz[j][i][k] = zz;
            }
            let mut zdiag = z[n][i][k].clone();
            for j in i..n {
                let hj = times[j + 1] - times[j];
                for c in 0..d {
                    zdiag[c] -= dz[j][i][k][c] * hj;
                }
            }

            // Members given a candidate 𝒴 at this node.
            let members = |cy: &[f64], j: usize, u: &mut [f64], du: &mut [f64], buf: &mut [f64]| {
                (coeffs.f)(t, times[j], &xs, &eu[j], &z[j][i][k], cy, &zy, buf);
                for c in 0..d {
                    u[c] = eu[j][c] + dt * buf[c];
                }
                (coeffs.grad_f)(t, times[j], &xs, &edu[j], &dz[j][i][k], u, &z[j][i][k], cy, &zy, buf);
                for c in 0..d {
                    du[c] = edu[j][c] + dt * buf[c];
                }
            };

            let mut cy = ey.clone();
            let mut ui = vec![0.0; d];
            let mut dui = vec![0.0; d];
            let mut converged = false;
            for it in 1..=INNER_MAX {
                members(&cy, i, &mut ui, &mut dui, &mut gv);
                (coeffs.f)(t, t, &xs, &ey, &zy, &ui, &zdiag, &mut fv);
                let mut gap = 0.0f64;
                let mut scale = 1.0f64;
                for c in 0..d {
                    let target = ey[c] + dt * (fv[c] - dui[c]);
                    gap = gap.max((target - cy[c]).abs());
                    scale = scale.max(target.abs());
                    cy[c] += DAMPING * (target - cy[c]);
                }
                if !gap.is_finite() {
                    return Err(Error::Oracle(format!("non-finite iterate at node {i}, prefix {k}")));
                }
                if gap <= INNER_TOL * scale {
                    inner_iterations = inner_iterations.max(it);
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::Oracle(format!("inner iteration stalled at node {i}, prefix {k}")));
            }
            for j in 0..=n {
                let mut u = vec![0.0; d];
                let mut du = vec![0.0; d];
                members(&cy, j, &mut u, &mut du, &mut gv);
                y[j][i][k] = u;
                dy[j][i][k] = du;
            }
            cal_y[i][k] = cy;
            cal_z[i][k] = zy;
            diag_y[i][k] = y[i][i][k].clone();
            diag_dy[i][k] = dy[i][i][k].clone();
            diag_z[i][k] = zdiag;
        }
    }
    Ok(TreeSolution {
        spec: *spec,
        times,
        x,
        cal_y,
        cal_z,
        y,
        z,
        dy,
        dz,
        diag_y,
        diag_z,
        diag_dy,
        inner_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize) -> TreeSpec {
        TreeSpec {
            x0: 0.0,
            sigma: 1.0,
            horizon: 1.0,
            n_steps: n,
        }
    }

    #[test]
    fn one_step_driverless_is_branch_average() {
        let b = FnBsvie::free_term(1, |s, x, o| o[0] = s * x[0] + x[0] * x[0], |_, x, o| o[0] = x[0]);
        let sol = tree_oracle(&b, &spec(1)).unwrap();
        for (j, s) in [0.0, 1.0].into_iter().enumerate() {
            let expect = 0.5 * ((-s + 1.0) + (s * 1.0 + 1.0));
            assert!((sol.y[j][0][0][0] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn two_step_discount_recursion() {
        // Y_i = E[Y_{i+1}] - Δ·E[Y_{i+1}] with ξ ≡ 1 gives (1 - Δ)^{N - i}.
        let b = FnBsvie::free_term(1, |_, _, o| o[0] = 1.0, |_, _, o| o[0] = 0.0).with_generator(
            |_, _, _, y, _, _, _, o| o[0] = -y[0],
            |_, _, _, dy, _, _, _, _, _, o| o[0] = -dy[0],
        );
        let sol = tree_oracle(&b, &spec(2)).unwrap();
        assert!((sol.y[0][0][0][0] - 0.25).abs() < 1e-15);
        assert!((sol.y[2][1][1][0] - 0.5).abs() < 1e-15);
        assert!((sol.cal_y[0][0][0] - 0.25).abs() < 1e-13);
    }

    #[test]
    fn rejects_large_trees() {
        let b = FnBsvie::free_term(1, |_, _, o| o[0] = 0.0, |_, _, o| o[0] = 0.0);
        assert!(tree_oracle(&b, &spec(4)).is_err());
    }
}
