//! The coupled system
//!
//! ```text
//! 𝒴_t   = ξ   + ∫_t^T h(r, X, 𝒴_r, 𝒵_r, U_r^r, V_r^r, ∂U_r^r) dr − ∫_t^T 𝒵_r dX_r
//! U_t^s = η(s) + ∫_t^T g(s, r, X, U_r^s, V_r^s, 𝒴_r, 𝒵_r) dr − ∫_t^T V_r^s dX_r
//! ∂U_t^s = ∂_sη(s) + ∫_t^T ∇g(s, r, X, ∂U_r^s, ∂V_r^s, U_r^s, V_r^s, 𝒴_r, 𝒵_r) dr − ∫_t^T ∂V_r^s dX_r
//! ```
//!
//! solved by Picard iteration of the map 𝔗 from the zero iterate.
//!
//! One application of 𝔗 takes `z = 𝒵`, `v = V`, `∂v = ∂V` and the diagonals
//! from the input iterate. It then sweeps the `𝒴` equation, the `U` family
//! (reading the new `𝒴`), and the `∂U` family (reading the new `U`). Each
//! equation reads its own unknown through the scheme's `y`-proxy; every other
//! argument is frozen, and the outer loop closes the coupling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsde::{backward_sweep, project_step, Scheme};
use crate::error::{Error, Result};
use crate::family::{reconstruct_diagonals, solve_family, FamilyDriver, FamilyField, FamilyGenerator};
use crate::field::ProcessField;
use crate::norms::{bmo_sq_many, s_inf_norm};
use crate::paths::{PathEnsemble, PathRef, Point};
use crate::regression::Regressor;

/// Coefficients of the system. `z`, `v`, `dv` arguments are `σᵀ`-aggregates
/// laid out as row-major `d × m` blocks.
pub trait SystemCoefficients: Sync {
    /// Dimension of `𝒴`.
    fn d1(&self) -> usize;
    /// Dimension of each `U^s`.
    fn d2(&self) -> usize;

    fn xi(&self, path: PathRef<'_>, out: &mut [f64]);
    fn eta(&self, s: f64, path: PathRef<'_>, out: &mut [f64]);
    fn d_eta(&self, s: f64, path: PathRef<'_>, out: &mut [f64]);

    /// `h(t, x, y, z, u, v, ∂u)` with `(u, v, ∂u)` the diagonal slots.
    #[allow(clippy::too_many_arguments)]
    fn h(&self, pt: &Point<'_>, y: &[f64], z: &[f64], u: &[f64], v: &[f64], du: &[f64], out: &mut [f64]);

    /// `g(s, t, x, u, v, y, z)`.
    #[allow(clippy::too_many_arguments)]
    fn g(&self, s: f64, pt: &Point<'_>, u: &[f64], v: &[f64], y: &[f64], z: &[f64], out: &mut [f64]);

    /// `∇g(s, t, x, ∂u, ∂v, u, v, y, z)`.
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

/// Borrows a system's `(g, ∇g)` as a [`FamilyGenerator`].
pub struct Generator<'a, S: ?Sized>(pub &'a S);

impl<S: SystemCoefficients + ?Sized> FamilyGenerator for Generator<'_, S> {
    fn g(&self, s: f64, pt: &Point<'_>, u: &[f64], v: &[f64], y: &[f64], z: &[f64], out: &mut [f64]) {
        self.0.g(s, pt, u, v, y, z, out)
    }
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
    ) {
        self.0.grad_g(s, pt, du, dv, u, v, y, z, out)
    }
}

/// A point of the solution space: `(𝒴, 𝒵)` and the two families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub cal_y: ProcessField,
    pub cal_z: ProcessField,
    pub family: FamilyField,
}

impl Iterate {
    pub fn zeros(ens: &PathEnsemble, d1: usize, d2: usize) -> Self {
        let (n, np, m) = (ens.n_nodes(), ens.n_paths(), ens.noise_dim());
        Self {
            cal_y: ProcessField::zeros(n, np, d1),
            cal_z: ProcessField::zeros(n, np, d1 * m),
            family: FamilyField::zeros(n, np, d2, m),
        }
    }

    /// Entrywise map over every stored field, diagonals included.
    pub fn map(&self, f: impl Fn(f64) -> f64 + Copy) -> Self {
        let fam = &self.family;
        let mapv = |v: &[ProcessField]| v.iter().map(|x| x.map(f)).collect::<Vec<_>>();
        Self {
            cal_y: self.cal_y.map(f),
            cal_z: self.cal_z.map(f),
            family: FamilyField {
                u: mapv(&fam.u),
                v: mapv(&fam.v),
                du: mapv(&fam.du),
                dv: mapv(&fam.dv),
                diag_u: fam.diag_u.map(f),
                diag_v: fam.diag_v.map(f),
                diag_du: fam.diag_du.map(f),
            },
        }
    }

    /// Entrywise difference.
    pub fn sub(&self, other: &Self) -> Self {
        let (a, b) = (&self.family, &other.family);
        let subv = |x: &[ProcessField], y: &[ProcessField]| x.iter().zip(y).map(|(p, q)| p.sub(q)).collect::<Vec<_>>();
        Self {
            cal_y: self.cal_y.sub(&other.cal_y),
            cal_z: self.cal_z.sub(&other.cal_z),
            family: FamilyField {
                u: subv(&a.u, &b.u),
                v: subv(&a.v, &b.v),
                du: subv(&a.du, &b.du),
                dv: subv(&a.dv, &b.dv),
                diag_u: a.diag_u.sub(&b.diag_u),
                diag_v: a.diag_v.sub(&b.diag_v),
                diag_du: a.diag_du.sub(&b.diag_du),
            },
        }
    }

    /// Largest absolute entry across all fields.
    pub fn max_abs(&self) -> f64 {
        let f = &self.family;
        let m = |v: &[ProcessField]| v.iter().map(|x| x.max_abs()).fold(0.0, f64::max);
        [
            self.cal_y.max_abs(),
            self.cal_z.max_abs(),
            m(&f.u),
            m(&f.v),
            m(&f.du),
            m(&f.dv),
            f.diag_v.max_abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Component norms in the discrete `𝓗^c` space. BMO entries are not squared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterateNorms {
    pub cal_y: f64,
    pub cal_z: f64,
    pub u: f64,
    pub v: f64,
    pub diag_v: f64,
    pub du: f64,
    pub dv: f64,
    /// Square root of the sum of squared components.
    pub total: f64,
}

/// Discrete `𝓗^c` norm: sup-norms for the `Y`-type fields, BMO for the
/// `Z`-type fields, suprema over `s` for families.
pub fn iterate_norms(it: &Iterate, c: f64, ens: &PathEnsemble, reg: &Regressor) -> IterateNorms {
    let grid = ens.grid();
    let f = &it.family;
    let n_s = f.u.len();
    let mut zs: Vec<&ProcessField> = Vec::with_capacity(2 * n_s + 2);
    zs.push(&it.cal_z);
    zs.push(&f.diag_v);
    zs.extend(f.v.iter());
    zs.extend(f.dv.iter());
    let bmo = bmo_sq_many(&zs, c, ens, reg);
    let sup_s = |v: &[ProcessField]| v.par_iter().map(|x| s_inf_norm(x, c, grid)).reduce(|| 0.0, f64::max);
    let sup_b = |r: std::ops::Range<usize>| bmo[r].iter().copied().fold(0.0, f64::max).sqrt();
    let mut out = IterateNorms {
        cal_y: s_inf_norm(&it.cal_y, c, grid),
        cal_z: bmo[0].sqrt(),
        diag_v: bmo[1].sqrt(),
        u: sup_s(&f.u),
        v: sup_b(2..2 + n_s),
        du: sup_s(&f.du),
        dv: sup_b(2 + n_s..2 + 2 * n_s),
        total: 0.0,
    };
    out.total = [out.cal_y, out.cal_z, out.u, out.v, out.diag_v, out.du, out.dv]
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    out
}

struct HDriver<'a, S: ?Sized> {
    sys: &'a S,
    input: &'a Iterate,
}

impl<S: SystemCoefficients + ?Sized> crate::bsde::Driver for HDriver<'_, S> {
    fn eval(&self, pt: &Point<'_>, y: &[f64], _own_z: &[f64], out: &mut [f64]) {
        let (i, p) = (pt.node, pt.path);
        let f = &self.input.family;
        self.sys.h(
            pt,
            y,
            self.input.cal_z.get(i, p),
            f.diag_u.get(i, p),
            f.diag_v.get(i, p),
            f.diag_du.get(i, p),
            out,
        )
    }
}

struct GDriver<'a, S: ?Sized> {
    sys: &'a S,
    input: &'a Iterate,
    cal_y: &'a ProcessField,
}

impl<S: SystemCoefficients + ?Sized> FamilyDriver for GDriver<'_, S> {
    fn eval(&self, s_node: usize, pt: &Point<'_>, u: &[f64], _own_v: &[f64], out: &mut [f64]) {
        let (i, p) = (pt.node, pt.path);
        let s = pt.ens.grid().t(s_node);
        self.sys.g(
            s,
            pt,
            u,
            self.input.family.v[s_node].get(i, p),
            self.cal_y.get(i, p),
            self.input.cal_z.get(i, p),
            out,
        )
    }
}

struct GradDriver<'a, S: ?Sized> {
    sys: &'a S,
    input: &'a Iterate,
    cal_y: &'a ProcessField,
    u: &'a [ProcessField],
}

impl<S: SystemCoefficients + ?Sized> FamilyDriver for GradDriver<'_, S> {
    fn eval(&self, s_node: usize, pt: &Point<'_>, du: &[f64], _own_dv: &[f64], out: &mut [f64]) {
        let (i, p) = (pt.node, pt.path);
        let s = pt.ens.grid().t(s_node);
        let f = &self.input.family;
        self.sys.grad_g(
            s,
            pt,
            du,
            f.dv[s_node].get(i, p),
            self.u[s_node].get(i, p),
            f.v[s_node].get(i, p),
            self.cal_y.get(i, p),
            self.input.cal_z.get(i, p),
            out,
        )
    }
}

fn terminal_block(n_paths: usize, d: usize, f: impl Fn(usize, &mut [f64])) -> Vec<f64> {
    let mut t = vec![0.0; n_paths * d];
    for (p, c) in t.chunks_mut(d).enumerate() {
        f(p, c);
    }
    t
}

/// One application of 𝔗.
pub fn apply_t<S: SystemCoefficients + ?Sized>(
    input: &Iterate,
    sys: &S,
    ens: &PathEnsemble,
    reg: &Regressor,
    scheme: Scheme,
) -> Result<Iterate> {
    let (d1, d2) = (sys.d1(), sys.d2());
    let np = ens.n_paths();
    let xi = terminal_block(np, d1, |p, o| sys.xi(ens.path(p), o));
    let top = backward_sweep(&xi, d1, &HDriver { sys, input }, ens, reg, scheme)
        .map_err(|e| e.in_stage("𝒴 equation"))?;
    let grid = ens.grid();
    let eta = |j: usize, path: PathRef<'_>, o: &mut [f64]| sys.eta(grid.t(j), path, o);
    let (u, v) = solve_family(&eta, d2, &GDriver { sys, input, cal_y: &top.y }, ens, reg, scheme)
        .map_err(|e| e.in_stage("U family"))?;
    let d_eta = |j: usize, path: PathRef<'_>, o: &mut [f64]| sys.d_eta(grid.t(j), path, o);
    let grad = GradDriver {
        sys,
        input,
        cal_y: &top.y,
        u: &u,
    };
    let (du, dv) = solve_family(&d_eta, d2, &grad, ens, reg, scheme).map_err(|e| e.in_stage("∂U family"))?;
    let (diag_u, diag_v, diag_du) = reconstruct_diagonals(&u, &du, &v, &dv, ens);
    Ok(Iterate {
        cal_y: top.y,
        cal_z: top.z,
        family: FamilyField {
            u,
            v,
            du,
            dv,
            diag_u,
            diag_v,
            diag_du,
        },
    })
}

/// Picard loop settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Weight `c` of the stopping norm.
    pub c: f64,
    pub scheme: Scheme,
    /// Radius `R`: iterates whose norm exceeds it are scaled back onto the ball.
    pub truncation: Option<f64>,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 50,
            c: 0.0,
            scheme: Scheme::Explicit,
            truncation: None,
        }
    }
}

/// One row of the convergence trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Norms of the new iterate.
    pub norms: IterateNorms,
    /// Norms of the difference to the previous iterate.
    pub diff: IterateNorms,
}

/// Result of [`picard_solve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSolution {
    pub iterate: Iterate,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
}

impl SystemSolution {
    /// Successive ratios of the difference norms.
    pub fn diff_ratios(&self) -> Vec<f64> {
        self.trace
            .windows(2)
            .map(|w| w[1].diff.total / w[0].diff.total)
            .collect()
    }

    pub fn final_diff(&self) -> f64 {
        self.trace.last().map_or(f64::INFINITY, |t| t.diff.total)
    }
}

/// Iterates 𝔗 from `start` (zero if `None`) until the weighted norm of the
/// difference drops below `tol`, or `max_iter` applications.
pub fn picard_solve<S: SystemCoefficients + ?Sized>(
    sys: &S,
    ens: &PathEnsemble,
    reg: &Regressor,
    opts: &PicardOptions,
    start: Option<Iterate>,
) -> Result<SystemSolution> {
    if opts.max_iter == 0 {
        return Err(Error::Config("max_iter must be at least 1".into()));
    }
    if let Some(r) = opts.truncation {
        if !(r > 0.0) {
            return Err(Error::Config(format!("truncation radius must be positive, got {r}")));
        }
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Config(format!("Picard tolerance must be positive, got {}", opts.tol)));
    }
    let mut current = start.unwrap_or_else(|| Iterate::zeros(ens, sys.d1(), sys.d2()));
    let mut trace = Vec::new();
    let mut converged = false;
    for k in 1..=opts.max_iter {
        let mut next =
            apply_t(&current, sys, ens, reg, opts.scheme).map_err(|e| e.in_stage(format!("Picard iteration {k}")))?;
        let mut norms = iterate_norms(&next, opts.c, ens, reg);
        if let Some(r) = opts.truncation {
            if norms.total > r {
                // Slightly inside the ball so rounding cannot push the norm past R.
                let scale = r / norms.total * (1.0 - 1e-12);
                next = next.map(|x| x * scale);
                norms = iterate_norms(&next, opts.c, ens, reg);
            }
        }
        let diff = iterate_norms(&next.sub(&current), opts.c, ens, reg);
        log::debug!("picard iteration {k}: diff {:.3e}, norm {:.3e}", diff.total, norms.total);
        trace.push(TraceEntry {
            iteration: k,
            norms,
            diff,
        });
        current = next;
        if diff.total < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(SystemSolution {
        iterate: current,
        trace,
        converged,
    })
}

/// Residual statistics of one equation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EquationResidual {
    /// RMS over nodes and paths of `Y_i − E_i[Y_{i+1}] − Δ_i f`.
    pub projected_rms: f64,
    pub projected_max: f64,
    /// RMS of the pathwise `Y_i − Y_{i+1} − Δ_i f + σᵀZ_i·ΔB_i`.
    pub raw_rms: f64,
    pub raw_max: f64,
}

/// Plug-back residuals of the three equations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub cal_y: EquationResidual,
    pub family: EquationResidual,
    pub grad_family: EquationResidual,
}

impl ResidualReport {
    pub fn max_projected_rms(&self) -> f64 {
        self.cal_y.projected_rms.max(self.family.projected_rms).max(self.grad_family.projected_rms)
    }
    pub fn max_projected(&self) -> f64 {
        self.cal_y.projected_max.max(self.family.projected_max).max(self.grad_family.projected_max)
    }
}

/// Pointwise residual callback `(node, path, y, out)`.
type NodeFn<'a> = dyn Fn(usize, usize, &[f64], &mut [f64]) + Sync + 'a;

#[derive(Default)]
struct Acc {
    sum_p: f64,
    max_p: f64,
    sum_r: f64,
    max_r: f64,
    count: usize,
}

impl Acc {
    fn merge(mut self, o: Acc) -> Acc {
        self.sum_p += o.sum_p;
        self.max_p = self.max_p.max(o.max_p);
        self.sum_r += o.sum_r;
        self.max_r = self.max_r.max(o.max_r);
        self.count += o.count;
        self
    }
    fn finish(self) -> EquationResidual {
        let n = self.count.max(1) as f64;
        EquationResidual {
            projected_rms: (self.sum_p / n).sqrt(),
            projected_max: self.max_p,
            raw_rms: (self.sum_r / n).sqrt(),
            raw_max: self.max_r,
        }
    }
}

/// Residuals of one equation given its fields and a driver evaluator
/// `f(node, path, proxy, out)`.
fn equation_residual(
    y: &ProcessField,
    z: &ProcessField,
    ens: &PathEnsemble,
    reg: &Regressor,
    scheme: Scheme,
    f: &NodeFn<'_>,
) -> Acc {
    let d = y.dim();
    let m = ens.noise_dim();
    let mut acc = Acc::default();
    for i in 0..ens.grid().n_steps() {
        let (ey, _) = project_step(ens, reg, y.node(i + 1), d, i);
        let dt = ens.grid().dt(i);
        let part = (0..ens.n_paths())
            .into_par_iter()
            .map(|p| {
                let yi = y.get(i, p);
                let proxy = match scheme {
                    Scheme::Explicit => &ey[p * d..(p + 1) * d],
                    Scheme::Implicit { .. } => yi,
                };
                let mut fv = vec![0.0; d];
                f(i, p, proxy, &mut fv);
                let zi = z.get(i, p);
                let db = ens.db(p, i);
                let ynext = y.get(i + 1, p);
                let mut a = Acc::default();
                for c in 0..d {
                    let proj = yi[c] - ey[p * d + c] - dt * fv[c];
                    let mart: f64 = (0..m).map(|j| zi[c * m + j] * db[j]).sum();
                    let raw = yi[c] - ynext[c] - dt * fv[c] + mart;
                    a.sum_p += proj * proj;
                    a.max_p = a.max_p.max(proj.abs());
                    a.sum_r += raw * raw;
                    a.max_r = a.max_r.max(raw.abs());
                    a.count += 1;
                }
                a
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(Acc::default(), Acc::merge);
        acc = acc.merge(part);
    }
    acc
}

/// Plugs the solution back into all three equations, with every argument
/// taken from the solution itself.
pub fn residual_check<S: SystemCoefficients + ?Sized>(
    sol: &Iterate,
    sys: &S,
    ens: &PathEnsemble,
    reg: &Regressor,
    scheme: Scheme,
) -> ResidualReport {
    let f = &sol.family;
    let grid = ens.grid();
    let cal_y = equation_residual(&sol.cal_y, &sol.cal_z, ens, reg, scheme, &|i, p, proxy, out| {
        let pt = ens.point(i, p);
        sys.h(&pt, proxy, sol.cal_z.get(i, p), f.diag_u.get(i, p), f.diag_v.get(i, p), f.diag_du.get(i, p), out)
    })
    .finish();
    let n_s = f.u.len();
    let family = (0..n_s)
        .into_par_iter()
        .map(|j| {
            let s = grid.t(j);
            equation_residual(&f.u[j], &f.v[j], ens, reg, scheme, &|i, p, proxy, out| {
                let pt = ens.point(i, p);
                sys.g(s, &pt, proxy, f.v[j].get(i, p), sol.cal_y.get(i, p), sol.cal_z.get(i, p), out)
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Acc::default(), Acc::merge)
        .finish();
    let grad_family = (0..n_s)
        .into_par_iter()
        .map(|j| {
            let s = grid.t(j);
            equation_residual(&f.du[j], &f.dv[j], ens, reg, scheme, &|i, p, proxy, out| {
                let pt = ens.point(i, p);
                sys.grad_g(
                    s,
                    &pt,
                    proxy,
                    f.dv[j].get(i, p),
                    f.u[j].get(i, p),
                    f.v[j].get(i, p),
                    sol.cal_y.get(i, p),
                    sol.cal_z.get(i, p),
                    out,
                )
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Acc::default(), Acc::merge)
        .finish();
    ResidualReport {
        cal_y,
        family,
        grad_family,
    }
}
