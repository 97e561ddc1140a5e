//! The `s`-indexed families `(U^s, V^s)` and `(∂U^s, ∂V^s)` on the shared grid,
//! and the diagonal processes read off them.
//!
//! `s` runs over the time grid itself, so `U[j]` is the family member with
//! `s = t_j` and the diagonal at node `i` is a direct index, no interpolation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsde::{backward_sweep, Driver, Scheme};
use crate::error::{Error, Result};
use crate::field::ProcessField;
use crate::paths::{PathEnsemble, PathRef, Point};
use crate::regression::Regressor;

/// Driver of one family member, selected by its `s`-node.
pub trait FamilyDriver: Sync {
    /// `own` and `own_z` are the member's own `(y, σᵀz)` slots.
    fn eval(&self, s_node: usize, pt: &Point<'_>, own: &[f64], own_z: &[f64], out: &mut [f64]);
}

/// Generator `g(s, x, u, v, y, z)` together with its composite derivative
/// `∇g(s, x, u', v', u, v, y, z) = ∂_s g + ∂_u g·u' + Σ_i ∂_{v:i} g·v'_i`.
pub trait FamilyGenerator: Sync {
    #[allow(clippy::too_many_arguments)]
    fn g(&self, s: f64, pt: &Point<'_>, u: &[f64], v: &[f64], y: &[f64], z: &[f64], out: &mut [f64]);

    #[allow(clippy::too_many_arguments)]
    fn grad_g(
        &self,
        s: f64,
        pt: &Point<'_>,
        du: &[f64],
        dv: &[f64],
        u: &[f64],
        v: &[f64],
        y: &[f64],
        z: &[f64],
        out: &mut [f64],
    );
}

/// Central-difference assembly of `∇g` along the direction `(1, u', v')`.
#[allow(clippy::too_many_arguments)]
pub fn fd_grad_g<G: FamilyGenerator + ?Sized>(
    gen: &G,
    step: f64,
    s: f64,
    pt: &Point<'_>,
    du: &[f64],
    dv: &[f64],
    u: &[f64],
    v: &[f64],
    y: &[f64],
    z: &[f64],
    out: &mut [f64],
) {
    let shift = |base: &[f64], dir: &[f64], h: f64| -> Vec<f64> {
        base.iter().zip(dir).map(|(a, b)| a + h * b).collect()
    };
    let mut plus = vec![0.0; out.len()];
    let mut minus = vec![0.0; out.len()];
    gen.g(s + step, pt, &shift(u, du, step), &shift(v, dv, step), y, z, &mut plus);
    gen.g(s - step, pt, &shift(u, du, -step), &shift(v, dv, -step), y, z, &mut minus);
    for (o, (a, b)) in out.iter_mut().zip(plus.iter().zip(&minus)) {
        *o = (a - b) / (2.0 * step);
    }
}

/// Solved families and their diagonals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyField {
    pub u: Vec<ProcessField>,
    pub v: Vec<ProcessField>,
    pub du: Vec<ProcessField>,
    pub dv: Vec<ProcessField>,
    pub diag_u: ProcessField,
    pub diag_v: ProcessField,
    pub diag_du: ProcessField,
}

impl FamilyField {
    /// Zero families for `n_nodes` grid nodes.
    pub fn zeros(n_nodes: usize, n_paths: usize, d: usize, m: usize) -> Self {
        let u = vec![ProcessField::zeros(n_nodes, n_paths, d); n_nodes];
        let v = vec![ProcessField::zeros(n_nodes, n_paths, d * m); n_nodes];
        Self {
            du: u.clone(),
            dv: v.clone(),
            diag_u: ProcessField::zeros(n_nodes, n_paths, d),
            diag_v: ProcessField::zeros(n_nodes, n_paths, d * m),
            diag_du: ProcessField::zeros(n_nodes, n_paths, d),
            u,
            v,
        }
    }

    /// Assembles the field and reconstructs its diagonals.
    pub fn from_parts(
        u: Vec<ProcessField>,
        v: Vec<ProcessField>,
        du: Vec<ProcessField>,
        dv: Vec<ProcessField>,
        ens: &PathEnsemble,
    ) -> Self {
        let (diag_u, diag_v, diag_du) = reconstruct_diagonals(&u, &du, &v, &dv, ens);
        Self {
            u,
            v,
            du,
            dv,
            diag_u,
            diag_v,
            diag_du,
        }
    }

    /// Direct read `V[i][i]`, kept for consistency checks against `diag_v`.
    pub fn direct_diag_v(&self) -> ProcessField {
        let n = self.v.len();
        let np = self.v[0].n_paths();
        ProcessField::from_fn(n, np, self.v[0].dim(), |i, p, o| o.copy_from_slice(self.v[i].get(i, p)))
    }
}

/// Solves one backward sweep per `s`-node with terminal `eta(s_j, ·)`.
pub fn solve_family<E, D>(
    eta: &E,
    d: usize,
    driver: &D,
    ens: &PathEnsemble,
    reg: &Regressor,
    scheme: Scheme,
) -> Result<(Vec<ProcessField>, Vec<ProcessField>)>
where
    E: Fn(usize, PathRef<'_>, &mut [f64]) + Sync + ?Sized,
    D: FamilyDriver + ?Sized,
{
    let n_nodes = ens.n_nodes();
    let n_paths = ens.n_paths();
    let solved: Vec<(ProcessField, ProcessField)> = (0..n_nodes)
        .into_par_iter()
        .map(|j| {
            let mut terminal = vec![0.0; n_paths * d];
            for (p, chunk) in terminal.chunks_mut(d).enumerate() {
                eta(j, ens.path(p), chunk);
            }
            let member = Member { driver, s_node: j };
            backward_sweep(&terminal, d, &member, ens, reg, scheme)
                .map(|s| (s.y, s.z))
                .map_err(|e| e.in_stage(format!("family member s-node {j}")))
        })
        .collect::<Result<_>>()?;
    Ok(solved.into_iter().unzip())
}

struct Member<'a, D: ?Sized> {
    driver: &'a D,
    s_node: usize,
}

impl<D: FamilyDriver + ?Sized> Driver for Member<'_, D> {
    fn eval(&self, pt: &Point<'_>, y: &[f64], z: &[f64], out: &mut [f64]) {
        self.driver.eval(self.s_node, pt, y, z, out)
    }
}

/// `g(s, ·, u, v, 𝒴, 𝒵)` with `(𝒴, 𝒵)` frozen on the grid.
pub struct FrozenGenerator<'a, G: ?Sized> {
    pub gen: &'a G,
    pub y: &'a ProcessField,
    pub z: &'a ProcessField,
}

impl<G: FamilyGenerator + ?Sized> FamilyDriver for FrozenGenerator<'_, G> {
    fn eval(&self, s_node: usize, pt: &Point<'_>, u: &[f64], v: &[f64], out: &mut [f64]) {
        let s = pt.ens.grid().t(s_node);
        self.gen.g(s, pt, u, v, self.y.get(pt.node, pt.path), self.z.get(pt.node, pt.path), out)
    }
}

/// `∇g(s, ·, ∂u, ∂v, U^s, V^s, 𝒴, 𝒵)` with the solved family and `(𝒴, 𝒵)` frozen.
pub struct FrozenGradient<'a, G: ?Sized> {
    pub gen: &'a G,
    pub u: &'a [ProcessField],
    pub v: &'a [ProcessField],
    pub y: &'a ProcessField,
    pub z: &'a ProcessField,
}

impl<G: FamilyGenerator + ?Sized> FamilyDriver for FrozenGradient<'_, G> {
    fn eval(&self, s_node: usize, pt: &Point<'_>, du: &[f64], dv: &[f64], out: &mut [f64]) {
        let s = pt.ens.grid().t(s_node);
        let (i, p) = (pt.node, pt.path);
        self.gen.grad_g(
            s,
            pt,
            du,
            dv,
            self.u[s_node].get(i, p),
            self.v[s_node].get(i, p),
            self.y.get(i, p),
            self.z.get(i, p),
            out,
        )
    }
}

/// Solves the derivative family: terminal `∂_s η(s_j, ·)` and driver `∇g`.
/// The caller wires the solved `(U, V)` into `driver`, e.g. via [`FrozenGradient`].
pub fn solve_grad_family<E, D>(
    d_eta: &E,
    d: usize,
    driver: &D,
    ens: &PathEnsemble,
    reg: &Regressor,
    scheme: Scheme,
) -> Result<(Vec<ProcessField>, Vec<ProcessField>)>
where
    E: Fn(usize, PathRef<'_>, &mut [f64]) + Sync + ?Sized,
    D: FamilyDriver + ?Sized,
{
    solve_family(d_eta, d, driver, ens, reg, scheme)
        .map_err(|e| e.in_stage("derivative family"))
}

/// Diagonals `U[i][i]`, `∂U[i][i]` and the reconstructed
/// `V̂_i = V[N][i] - Σ_{j ≥ i} ∂V[j][i] Δ_j` (left-point rule in `s`).
pub fn reconstruct_diagonals(
    u: &[ProcessField],
    du: &[ProcessField],
    v: &[ProcessField],
    dv: &[ProcessField],
    ens: &PathEnsemble,
) -> (ProcessField, ProcessField, ProcessField) {
    let grid = ens.grid();
    let n = grid.n_steps();
    let np = u[0].n_paths();
    let diag_u = ProcessField::from_fn(n + 1, np, u[0].dim(), |i, p, o| o.copy_from_slice(u[i].get(i, p)));
    let diag_du = ProcessField::from_fn(n + 1, np, du[0].dim(), |i, p, o| o.copy_from_slice(du[i].get(i, p)));
    let dim_v = v[0].dim();
    let mut diag_v = ProcessField::zeros(n + 1, np, dim_v);
    let rows: Vec<Vec<f64>> = (0..=n)
        .into_par_iter()
        .map(|i| {
            let mut row = v[n].node(i).to_vec();
            for (j, dvj) in dv.iter().enumerate().take(n).skip(i) {
                let h = grid.dt(j);
                for (r, d) in row.iter_mut().zip(dvj.node(i)) {
                    *r -= d * h;
                }
            }
            row
        })
        .collect();
    for (i, row) in rows.into_iter().enumerate() {
        diag_v.node_mut(i).copy_from_slice(&row);
    }
    (diag_u, diag_v, diag_du)
}

/// Largest deviation between a user `∇g` and its finite-difference assembly
/// at `samples` random points drawn on `ens`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub max_deviation: f64,
    pub worst_point: String,
}

/// Compares `grad_g` with central differences of `g` (step `step`) and fails if
/// the largest deviation exceeds `tol`.
#[allow(clippy::too_many_arguments)]
pub fn grad_consistency_check<G: FamilyGenerator + ?Sized>(
    gen: &G,
    d1: usize,
    d2: usize,
    ens: &PathEnsemble,
    samples: usize,
    seed: u64,
    step: f64,
    tol: f64,
) -> Result<GradCheck> {
    let m = ens.noise_dim();
    let horizon = ens.grid().horizon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = GradCheck {
        max_deviation: 0.0,
        worst_point: String::new(),
    };
    let mut normal = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect() };
    for _ in 0..samples {
        let u = normal(d2);
        let v = normal(d2 * m);
        let du = normal(d2);
        let dv = normal(d2 * m);
        let y = normal(d1);
        let z = normal(d1 * m);
        let extra = normal(3);
        let frac = |x: f64| 0.5 * (1.0 + (x / (1.0 + x.abs())));
        let s = step + (horizon - 2.0 * step) * frac(extra[0]);
        let node = ((frac(extra[1]) * ens.grid().n_steps() as f64) as usize).min(ens.grid().n_steps() - 1);
        let path = ((frac(extra[2]) * ens.n_paths() as f64) as usize).min(ens.n_paths() - 1);
        let pt = ens.point(node, path);
        let mut exact = vec![0.0; d2];
        let mut approx = vec![0.0; d2];
        gen.grad_g(s, &pt, &du, &dv, &u, &v, &y, &z, &mut exact);
        fd_grad_g(gen, step, s, &pt, &du, &dv, &u, &v, &y, &z, &mut approx);
        let dev = exact
            .iter()
            .zip(&approx)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        if !(dev <= worst.max_deviation) {
            worst = GradCheck {
                max_deviation: dev,
                worst_point: format!("s={s:.6}, node={node}, path={path}, u={u:?}, v={v:?}, du={du:?}, dv={dv:?}"),
            };
        }
    }
    if !(worst.max_deviation <= tol) {
        return Err(Error::GradCheck {
            deviation: worst.max_deviation,
            tolerance: tol,
            point: worst.worst_point,
        });
    }
    Ok(worst)
}
