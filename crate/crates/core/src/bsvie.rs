//! Extended type-I BSVIEs
//!
//! ```text
//! Y_t^s = ξ(s) + ∫_t^T f(r, s, X, Y_r^s, Z_r^s, Y_r^r, Z_r^r) dr − ∫_t^T Z_r^s dX_r
//! ```
//!
//! are solved through the equivalent system with `h = f(t, t, ·) − ∂Y_t^t`,
//! `g = f(t, s, ·)`, `∇g = ∇f`, `η = ξ(s)` and `ξ_sys = ξ(T)`.

use serde::{Deserialize, Serialize};

use crate::certify::{certify_system, CertReport, CertSettings};
use crate::error::{Error, Result};
use crate::family::{grad_consistency_check, GradCheck};
use crate::field::ProcessField;
use crate::paths::{PathEnsemble, PathRef, Point};
use crate::regression::Regressor;
use crate::system::{
    picard_solve, residual_check, Generator, Iterate, PicardOptions, ResidualReport, SystemCoefficients, SystemSolution,
};

/// Data of a BSVIE. `z`/`v` arguments are `σᵀ`-aggregates (`d × m`, row-major).
pub trait BsvieCoefficients: Sync {
    fn dim(&self) -> usize;

    /// Free term `ξ(s)` on a path.
    fn xi(&self, s: f64, path: PathRef<'_>, out: &mut [f64]);

    /// `∂_s ξ(s)`.
    fn d_xi(&self, s: f64, path: PathRef<'_>, out: &mut [f64]);

    /// `f(t, s, x, y, z, u, v)`: `(y, z)` is the member's own pair `(Y^s, Z^s)`,
    /// `(u, v)` the diagonal `(Y_t^t, Z_t^t)`. `t` is `pt.t`.
    #[allow(clippy::too_many_arguments)]
    fn f(&self, s: f64, pt: &Point<'_>, y: &[f64], z: &[f64], u: &[f64], v: &[f64], out: &mut [f64]);

    /// `∇f(t, s, x, y', z', y, z, u, v) = ∂_s f + ∂_y f·y' + Σ_i ∂_{z:i} f·z'_i`.
    #[allow(clippy::too_many_arguments)]
    fn grad_f(
        &self,
        s: f64,
        pt: &Point<'_>,
        dy: &[f64],
        dz: &[f64],
        y: &[f64],
        z: &[f64],
        u: &[f64],
        v: &[f64],
        out: &mut [f64],
    );
}

/// A BSVIE seen as a coupled system.
pub struct BsvieSystem<'a, B: ?Sized>(pub &'a B);

/// Wraps BSVIE data into the system format.
pub fn build_system<B: BsvieCoefficients + ?Sized>(coeffs: &B) -> BsvieSystem<'_, B> {
    BsvieSystem(coeffs)
}

impl<B: BsvieCoefficients + ?Sized> SystemCoefficients for BsvieSystem<'_, B> {
    fn d1(&self) -> usize {
        self.0.dim()
    }
    fn d2(&self) -> usize {
        self.0.dim()
    }
    fn xi(&self, path: PathRef<'_>, out: &mut [f64]) {
        self.0.xi(path.ens.grid().horizon(), path, out)
    }
    fn eta(&self, s: f64, path: PathRef<'_>, out: &mut [f64]) {
        self.0.xi(s, path, out)
    }
    fn d_eta(&self, s: f64, path: PathRef<'_>, out: &mut [f64]) {
        self.0.d_xi(s, path, out)
    }
    fn h(&self, pt: &Point<'_>, y: &[f64], z: &[f64], u: &[f64], v: &[f64], du: &[f64], out: &mut [f64]) {
        self.0.f(pt.t, pt, y, z, u, v, out);
        for (o, d) in out.iter_mut().zip(du) {
            *o -= d;
        }
    }
    fn g(&self, s: f64, pt: &Point<'_>, u: &[f64], v: &[f64], y: &[f64], z: &[f64], out: &mut [f64]) {
        self.0.f(s, pt, u, v, y, z, out)
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
        self.0.grad_f(s, pt, du, dv, u, v, y, z, out)
    }
}

type TermFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
type GenFn = dyn Fn(f64, f64, &[f64], &[f64], &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;
type GradFn = dyn Fn(f64, f64, &[f64], &[f64], &[f64], &[f64], &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;

/// BSVIE data given by closures of the current state.
///
/// * `xi(s, x_T, out)` and `d_xi(s, x_T, out)`;
/// * `f(t, s, x, y, z, u, v, out)`;
/// * `grad_f(t, s, x, y', z', y, z, u, v, out)`.
pub struct FnBsvie {
    pub dim: usize,
    pub xi: Box<TermFn>,
    pub d_xi: Box<TermFn>,
    pub f: Box<GenFn>,
    pub grad_f: Box<GradFn>,
}

impl FnBsvie {
    /// Driverless BSVIE with free term `xi` and its `s`-derivative.
    pub fn free_term(
        dim: usize,
        xi: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        d_xi: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            xi: Box::new(xi),
            d_xi: Box::new(d_xi),
            f: Box::new(|_, _, _, _, _, _, _, o: &mut [f64]| o.fill(0.0)),
            grad_f: Box::new(|_, _, _, _, _, _, _, _, _, o: &mut [f64]| o.fill(0.0)),
        }
    }

    /// Replaces the generator and its composite derivative.
    pub fn with_generator(
        mut self,
        f: impl Fn(f64, f64, &[f64], &[f64], &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        grad_f: impl Fn(f64, f64, &[f64], &[f64], &[f64], &[f64], &[f64], &[f64], &[f64], &mut [f64])
            + Send
            + Sync
            + 'static,
    ) -> Self {
        self.f = Box::new(f);
        self.grad_f = Box::new(grad_f);
        self
    }
}

impl BsvieCoefficients for FnBsvie {
    fn dim(&self) -> usize {
        self.dim
    }
    fn xi(&self, s: f64, path: PathRef<'_>, out: &mut [f64]) {
        (self.xi)(s, path.terminal(), out)
    }
    fn d_xi(&self, s: f64, path: PathRef<'_>, out: &mut [f64]) {
        (self.d_xi)(s, path.terminal(), out)
    }
    fn f(&self, s: f64, pt: &Point<'_>, y: &[f64], z: &[f64], u: &[f64], v: &[f64], out: &mut [f64]) {
        (self.f)(pt.t, s, pt.x, y, z, u, v, out)
    }
    fn grad_f(
        &self,
        s: f64,
        pt: &Point<'_>,
        dy: &[f64],
        dz: &[f64],
        y: &[f64],
        z: &[f64],
        u: &[f64],
        v: &[f64],
        out: &mut [f64],
    ) {
        (self.grad_f)(pt.t, s, pt.x, dy, dz, y, z, u, v, out)
    }
}

/// Settings of the generator consistency check run before solving.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckSettings {
    pub samples: usize,
    pub step: f64,
    pub tol: f64,
    pub seed: u64,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        Self {
            samples: 64,
            step: 1e-5,
            tol: 1e-4,
            seed: 0,
        }
    }
}

/// Options of [`solve_bsvie`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BsvieOptions {
    pub picard: PicardOptions,
    /// Certification settings; `None` skips certification.
    pub cert: Option<CertSettings>,
    /// `None` skips the `∇f` consistency check.
    pub grad_check: Option<GradCheckSettings>,
}

/// Solution of a BSVIE: the family `Y^s` with derivatives and diagonals, plus
/// the auxiliary `(𝒴, 𝒵)` it was computed through.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsvieSolution {
    pub system: SystemSolution,
    /// Picard settings the solution was computed with.
    pub picard: PicardOptions,
    pub cert: Option<CertReport>,
    pub grad_check: Option<GradCheck>,
    /// `max |Y_t^t − 𝒴_t|`.
    pub diag_y_deviation: f64,
    /// `max |σᵀZ_t^t − σᵀ𝒵_t|`.
    pub diag_z_deviation: f64,
}

impl BsvieSolution {
    pub fn iterate(&self) -> &Iterate {
        &self.system.iterate
    }
    /// `Y^{s_j}`.
    pub fn y(&self, s_node: usize) -> &ProcessField {
        &self.system.iterate.family.u[s_node]
    }
    /// `σᵀZ^{s_j}`.
    pub fn z(&self, s_node: usize) -> &ProcessField {
        &self.system.iterate.family.v[s_node]
    }
    pub fn dy(&self, s_node: usize) -> &ProcessField {
        &self.system.iterate.family.du[s_node]
    }
    pub fn dz(&self, s_node: usize) -> &ProcessField {
        &self.system.iterate.family.dv[s_node]
    }
    /// `Y_t^t`.
    pub fn diag_y(&self) -> &ProcessField {
        &self.system.iterate.family.diag_u
    }
    /// Reconstructed `σᵀZ_t^t`.
    pub fn diag_z(&self) -> &ProcessField {
        &self.system.iterate.family.diag_v
    }
    /// `∂Y_t^t`.
    pub fn diag_dy(&self) -> &ProcessField {
        &self.system.iterate.family.diag_du
    }
    pub fn converged(&self) -> bool {
        self.system.converged
    }
}

/// Runs the optional `∇f` check and certification, then the Picard solve.
/// A failed certification is logged and recorded but does not stop the solve.
pub fn solve_bsvie<B: BsvieCoefficients + ?Sized>(
    coeffs: &B,
    ens: &PathEnsemble,
    reg: &Regressor,
    opts: &BsvieOptions,
) -> Result<BsvieSolution> {
    let sys = build_system(coeffs);
    let grad_check = match &opts.grad_check {
        Some(gc) => Some(
            grad_consistency_check(&Generator(&sys), sys.d1(), sys.d2(), ens, gc.samples, gc.seed, gc.step, gc.tol)
                .map_err(|e| e.in_stage("∇f validation"))?,
        ),
        None => None,
    };
    let cert = match &opts.cert {
        Some(settings) => {
            let (report, _) = certify_system(&sys, settings, ens)?;
            if !report.pass {
                log::warn!(
                    "κ = {} conditions not met (sqrt {}, I₀ {}, radius {}, weight {}); solving anyway",
                    report.kappa,
                    report.sqrt_condition,
                    report.i0_condition,
                    report.radius_condition,
                    report.weight_condition
                );
            }
            Some(report)
        }
        None => None,
    };
    let system = picard_solve(&sys, ens, reg, &opts.picard, None)?;
    let it = &system.iterate;
    let diag_y_deviation = it.family.diag_u.max_abs_diff(&it.cal_y);
    let diag_z_deviation = it.family.diag_v.max_abs_diff(&it.cal_z);
    Ok(BsvieSolution {
        system,
        picard: opts.picard,
        cert,
        grad_check,
        diag_y_deviation,
        diag_z_deviation,
    })
}

/// Plug-back residuals of the underlying system.
pub fn bsvie_residuals<B: BsvieCoefficients + ?Sized>(
    sol: &BsvieSolution,
    coeffs: &B,
    ens: &PathEnsemble,
    reg: &Regressor,
) -> ResidualReport {
    residual_check(sol.iterate(), &build_system(coeffs), ens, reg, sol.picard.scheme)
}

/// Statistics of the discrete flow identity over node pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub pairs: Vec<(usize, usize)>,
    /// Whether the `−∂Y_r^r` correction was included.
    pub with_correction: bool,
    pub mean: f64,
    pub rms: f64,
    pub max: f64,
    /// Residual per pair and path, pair-major, `d` entries each.
    pub values: Vec<f64>,
}

/// Residual of
/// `Y_a^a − Y_b^b − Σ_{a ≤ i < b} [Δ_i (f(t_i, t_i, X, Y_i^i, Z_i^i, Y_i^i, Z_i^i) − ∂Y_i^i) − σᵀZ_i^i·ΔB_i]`
/// for every pair `(a, b)` with `a < b` and every path. With
/// `with_correction = false` the `∂Y` term is dropped.
pub fn flow_residual<B: BsvieCoefficients + ?Sized>(
    sol: &BsvieSolution,
    coeffs: &B,
    ens: &PathEnsemble,
    pairs: &[(usize, usize)],
    with_correction: bool,
) -> Result<FlowReport> {
    let n = ens.grid().n_steps();
    let d = coeffs.dim();
    let m = ens.noise_dim();
    for &(a, b) in pairs {
        if a >= b || b > n {
            return Err(Error::Config(format!("flow pair ({a}, {b}) must satisfy a < b ≤ {n}")));
        }
    }
    let (dy, dz, ddy) = (sol.diag_y(), sol.diag_z(), sol.diag_dy());
    let mut values = Vec::with_capacity(pairs.len() * ens.n_paths() * d);
    let mut fv = vec![0.0; d];
    for &(a, b) in pairs {
        for p in 0..ens.n_paths() {
            let mut r: Vec<f64> = dy.get(a, p).iter().zip(dy.get(b, p)).map(|(x, y)| x - y).collect();
            for i in a..b {
                let pt = ens.point(i, p);
                let (y, z) = (dy.get(i, p), dz.get(i, p));
                coeffs.f(pt.t, &pt, y, z, y, z, &mut fv);
                let dt = ens.grid().dt(i);
                let db = ens.db(p, i);
                for c in 0..d {
                    let corr = if with_correction { ddy.get(i, p)[c] } else { 0.0 };
                    let mart: f64 = (0..m).map(|j| z[c * m + j] * db[j]).sum();
                    r[c] -= dt * (fv[c] - corr) - mart;
                }
            }
            values.extend_from_slice(&r);
        }
    }
    let count = values.len().max(1) as f64;
    Ok(FlowReport {
        pairs: pairs.to_vec(),
        with_correction,
        mean: values.iter().sum::<f64>() / count,
        rms: (values.iter().map(|v| v * v).sum::<f64>() / count).sqrt(),
        max: values.iter().fold(0.0, |a, v| a.max(v.abs())),
        values,
    })
}

/// All consecutive pairs `(i, i+1)` and the full span `(0, N)`.
pub fn default_flow_pairs(n_steps: usize) -> Vec<(usize, usize)> {
    let mut v: Vec<_> = (0..n_steps).map(|i| (i, i + 1)).collect();
    if n_steps > 1 {
        v.push((0, n_steps));
    }
    v
}
