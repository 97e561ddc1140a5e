//! Backward sweep for a single BSDE `Y_t = ξ + ∫_t^T f(r, X, Y_r, Z_r) dr - ∫_t^T Z_r dX_r`.
//!
//! `Z` is reported as the aggregate `σᵀZ`, laid out as a row-major `d × m`
//! block per path: entry `(c, j)` is `E_i[Y^c_{i+1} ΔB^j_i] / Δ_i`.
//! Driver integrals use the left-point rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ProcessField;
use crate::paths::{PathEnsemble, Point};
use crate::regression::Regressor;

/// Tolerance of the implicit inner fixed point.
pub const IMPLICIT_TOL: f64 = 1e-12;
/// Iteration cap of the implicit inner fixed point.
pub const IMPLICIT_MAX_ITER: usize = 50;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Scheme {
    /// The driver sees `E_i[Y_{i+1}]` in its `y` slot.
    #[default]
    Explicit,
    /// The driver sees the solution of `y = E_i[Y_{i+1}] + Δ f(y, Z)`, found by
    /// relaxed iteration with the given damping in `(0, 1]`.
    Implicit { damping: f64 },
}


/// Driver callback: `(point, y, z, out)` with `z` the `d × m` aggregate.
pub trait Driver: Sync {
    fn eval(&self, pt: &Point<'_>, y: &[f64], z: &[f64], out: &mut [f64]);
}

impl<F> Driver for F
where
    F: Fn(&Point<'_>, &[f64], &[f64], &mut [f64]) + Sync,
{
    fn eval(&self, pt: &Point<'_>, y: &[f64], z: &[f64], out: &mut [f64]) {
        self(pt, y, z, out)
    }
}

/// Solution `(Y, σᵀZ)` of one backward sweep. `z` at node `N` is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsdeSlice {
    pub y: ProcessField,
    pub z: ProcessField,
}

/// Largest `|Y|` and `|σᵀZ|` (Euclidean) at one node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDiagnostics {
    pub node: usize,
    pub max_abs_y: f64,
    pub max_abs_z: f64,
}

impl BsdeSlice {
    pub fn node_diagnostics(&self) -> Vec<NodeDiagnostics> {
        (0..self.y.n_nodes())
            .map(|i| {
                let norm = |f: &ProcessField, p: usize| f.get(i, p).iter().map(|v| v * v).sum::<f64>().sqrt();
                let np = self.y.n_paths();
                NodeDiagnostics {
                    node: i,
                    max_abs_y: (0..np).map(|p| norm(&self.y, p)).fold(0.0, f64::max),
                    max_abs_z: (0..np).map(|p| norm(&self.z, p)).fold(0.0, f64::max),
                }
            })
            .collect()
    }
}

/// Stacks `[Y_{i+1}, Y_{i+1} ⊗ ΔB_i]` per path for one regression call.
pub(crate) fn regression_block(ens: &PathEnsemble, next: &[f64], d: usize, interval: usize) -> Vec<f64> {
    let m = ens.noise_dim();
    let w = d + d * m;
    let mut block = vec![0.0; ens.n_paths() * w];
    block.par_chunks_mut(w).enumerate().for_each(|(p, row)| {
        let y = &next[p * d..(p + 1) * d];
        let db = ens.db(p, interval);
        row[..d].copy_from_slice(y);
        for c in 0..d {
            for j in 0..m {
                row[d + c * m + j] = y[c] * db[j];
            }
        }
    });
    block
}

/// Conditional mean `E_i[Y_{i+1}]` and `σᵀZ_i` for all paths at interval `i`.
pub(crate) fn project_step(
    ens: &PathEnsemble,
    reg: &Regressor,
    next: &[f64],
    d: usize,
    i: usize,
) -> (Vec<f64>, Vec<f64>) {
    let m = ens.noise_dim();
    let w = d + d * m;
    let block = regression_block(ens, next, d, i);
    let fitted = reg.project(i, &block, w);
    let dt = ens.grid().dt(i);
    let n_paths = ens.n_paths();
    let mut ey = vec![0.0; n_paths * d];
    let mut z = vec![0.0; n_paths * d * m];
    for p in 0..n_paths {
        let row = &fitted[p * w..(p + 1) * w];
        ey[p * d..(p + 1) * d].copy_from_slice(&row[..d]);
        for (dst, src) in z[p * d * m..(p + 1) * d * m].iter_mut().zip(&row[d..]) {
            *dst = src / dt;
        }
    }
    (ey, z)
}

/// One step `y = ey + Δ f(y_proxy, z)` on a single path.
pub(crate) fn step_path<D: Driver + ?Sized>(
    driver: &D,
    pt: &Point<'_>,
    ey: &[f64],
    z: &[f64],
    dt: f64,
    scheme: Scheme,
    out: &mut [f64],
) -> Result<()> {
    let d = ey.len();
    let mut f = vec![0.0; d];
    match scheme {
        Scheme::Explicit => {
            driver.eval(pt, ey, z, &mut f);
            for c in 0..d {
                out[c] = ey[c] + dt * f[c];
            }
        }
        Scheme::Implicit { damping } => {
            let mut y = ey.to_vec();
            let mut residual = f64::INFINITY;
            for _ in 0..IMPLICIT_MAX_ITER {
                driver.eval(pt, &y, z, &mut f);
                residual = 0.0;
                for c in 0..d {
                    let target = ey[c] + dt * f[c];
                    let next = (1.0 - damping) * y[c] + damping * target;
                    residual = f64::max(residual, (next - y[c]).abs());
                    y[c] = next;
                }
                if !residual.is_finite() {
                    break;
                }
                if residual <= IMPLICIT_TOL * (1.0 + y.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
                    driver.eval(pt, &y, z, &mut f);
                    for c in 0..d {
                        out[c] = ey[c] + dt * f[c];
                    }
                    return check_finite(out, pt);
                }
            }
            return Err(Error::ImplicitStep {
                node: pt.node,
                path: pt.path,
                residual,
            });
        }
    }
    check_finite(out, pt)
}

fn check_finite(out: &[f64], pt: &Point<'_>) -> Result<()> {
    if out.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what: "driver output".into(),
            node: pt.node,
            path: pt.path,
        })
    }
}

/// Backward sweep for a `d`-dimensional BSDE with per-path `terminal`
/// (`n_paths × d`). Regressions at every node use `reg`.
pub fn backward_sweep<D: Driver + ?Sized>(
    terminal: &[f64],
    d: usize,
    driver: &D,
    ens: &PathEnsemble,
    reg: &Regressor,
    scheme: Scheme,
) -> Result<BsdeSlice> {
    let n_paths = ens.n_paths();
    let m = ens.noise_dim();
    let steps = ens.grid().n_steps();
    if terminal.len() != n_paths * d {
        return Err(Error::Config(format!(
            "terminal block has length {}, expected {}",
            terminal.len(),
            n_paths * d
        )));
    }
    if let Scheme::Implicit { damping } = scheme {
        if !(damping > 0.0 && damping <= 1.0) {
            return Err(Error::Config(format!("implicit damping must lie in (0, 1], got {damping}")));
        }
    }
    let mut y = ProcessField::zeros(steps + 1, n_paths, d);
    let mut z = ProcessField::zeros(steps + 1, n_paths, d * m);
    y.node_mut(steps).copy_from_slice(terminal);
    for i in (0..steps).rev() {
        let (ey, zi) = project_step(ens, reg, y.node(i + 1), d, i);
        let dt = ens.grid().dt(i);
        y.node_mut(i)
            .par_chunks_mut(d)
            .enumerate()
            .try_for_each(|(p, out)| {
                let pt = ens.point(i, p);
                step_path(
                    driver,
                    &pt,
                    &ey[p * d..(p + 1) * d],
                    &zi[p * d * m..(p + 1) * d * m],
                    dt,
                    scheme,
                    out,
                )
            })?;
        z.node_mut(i).copy_from_slice(&zi);
    }
    Ok(BsdeSlice { y, z })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{build_grid, simulate_forward, ConstantVolatility, PathEnsemble};
    use crate::regression::BasisSpec;

    #[test]
    fn unit_driver_gives_time_to_go_on_tree() {
        let g = build_grid(1.0, 3).unwrap();
        let e = PathEnsemble::binary_tree(&ConstantVolatility::scalar(1.0), &[0.0], &g).unwrap();
        let r = Regressor::new(&e, &BasisSpec::filtration()).unwrap();
        let one = |_: &Point<'_>, _: &[f64], _: &[f64], o: &mut [f64]| o[0] = 1.0;
        let s = backward_sweep(&[0.0; 8], 1, &one, &e, &r, Scheme::Explicit).unwrap();
        for i in 0..=3 {
            for p in 0..8 {
                assert!((s.y.get(i, p)[0] - (1.0 - g.t(i))).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn implicit_linear_step_matches_closed_form() {
        let g = build_grid(1.0, 4).unwrap();
        let e = simulate_forward(&ConstantVolatility::scalar(1.0), &[0.0], &g, 16, 1).unwrap();
        let r = Regressor::new(&e, &BasisSpec::polynomial(1)).unwrap();
        let lin = |_: &Point<'_>, y: &[f64], _: &[f64], o: &mut [f64]| o[0] = -y[0];
        let s = backward_sweep(&[1.0; 16], 1, &lin, &e, &r, Scheme::Implicit { damping: 1.0 }).unwrap();
        let expect = (1.0f64 / 1.25).powi(4);
        assert!((s.y.get(0, 3)[0] - expect).abs() < 1e-11);
    }

    #[test]
    fn implicit_failure_names_node() {
        let g = build_grid(1.0, 2).unwrap();
        let e = simulate_forward(&ConstantVolatility::scalar(1.0), &[0.0], &g, 8, 1).unwrap();
        let r = Regressor::new(&e, &BasisSpec::polynomial(1)).unwrap();
        let stiff = |_: &Point<'_>, y: &[f64], _: &[f64], o: &mut [f64]| o[0] = -10.0 * y[0] + 1.0;
        let err = backward_sweep(&[1.0; 8], 1, &stiff, &e, &r, Scheme::Implicit { damping: 1.0 }).unwrap_err();
        assert!(matches!(err, Error::ImplicitStep { node: 1, .. }), "{err}");
    }
}
