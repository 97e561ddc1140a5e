//! Well-posedness constants: `L★`, `c^ε`, `I₀^ε`, the radius bound `𝒰(κ)` and
//! the four κ-conditions.
//!
//! Two readings of the admissible radius exist. The theorem statements give
//! `1/(168 κ L★²)` (Lipschitz-quadratic) and `1/(336 κ L★² max{2,T²})`
//! (quadratic). Following the contraction argument with a general κ instead
//! yields `1/(168 κ² L★²)` and `1/(336 κ² L★² max{2,T²})`, which agree with the
//! explicit κ = 10 values `1/16800` and `1/33600` carried through the proofs.
//! [`certify`] evaluates both and, by default, enforces the smaller one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::PathEnsemble;
use crate::system::SystemCoefficients;

/// Which assumption set is certified.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Lipschitz in `(y, u, ∂u)`, quadratic in `(z, v, ∂v)`.
    LipschitzQuadratic,
    /// Quadratic in every argument except the `∂u` slot of `h`.
    Quadratic,
}

impl Mode {
    /// Right-hand side factor of the square-root condition.
    pub fn sqrt_factor(self) -> f64 {
        match self {
            Mode::LipschitzQuadratic => 28.0,
            Mode::Quadratic => 56.0,
        }
    }

    /// Number of ε entries the mode consumes.
    pub fn eps_len(self) -> usize {
        match self {
            Mode::LipschitzQuadratic => 11,
            Mode::Quadratic => 6,
        }
    }
}

/// Growth constants. `l_du` and `l_dv` belong to the `∂U` and `∂V` slots.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthConstants {
    pub l_y: f64,
    pub l_u: f64,
    pub l_du: f64,
    pub l_z: f64,
    pub l_v: f64,
    pub l_dv: f64,
}

impl GrowthConstants {
    pub fn uniform(l: f64) -> Self {
        Self {
            l_y: l,
            l_u: l,
            l_du: l,
            l_z: l,
            l_v: l,
            l_dv: l,
        }
    }
}

/// `L★`: the largest quadratic-growth constant of the mode.
pub fn l_star(k: &GrowthConstants, mode: Mode) -> f64 {
    match mode {
        Mode::LipschitzQuadratic => k.l_z.max(k.l_v).max(k.l_dv),
        Mode::Quadratic => k.l_y.max(k.l_u).max(k.l_du).max(k.l_z).max(k.l_v).max(k.l_dv),
    }
}

fn check_eps(eps: &[f64], needed: usize) -> Result<()> {
    if eps.len() < needed {
        return Err(Error::Config(format!("need {needed} ε entries, got {}", eps.len())));
    }
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::Config(format!("ε entries must be positive and finite, got {e}")));
    }
    Ok(())
}

/// Weight threshold `c^ε`. `eps[0]` is `ε₁`.
pub fn compute_c_eps(eps: &[f64], k: &GrowthConstants, horizon: f64, mode: Mode) -> Result<f64> {
    let t = horizon;
    match mode {
        Mode::Quadratic => {
            check_eps(eps, 2)?;
            let (e1, e2) = (eps[0], eps[1]);
            Ok((7.0 * t * k.l_du.powi(2) / e1).max(7.0 * t / e2).max(2.0 * k.l_du))
        }
        Mode::LipschitzQuadratic => {
            check_eps(eps, 11)?;
            let e = |i: usize| eps[i - 1];
            let (ly, lu, ldu) = (k.l_y, k.l_u, k.l_du);
            let terms = [
                2.0 * ly + 7.0 * t * ldu * ldu / e(1) + (e(1) + e(2)) * t * ly * ly + lu * lu / e(7) + e(8) + e(9) + e(10),
                2.0 * lu + 7.0 * t / e(2) + e(7) + ly * ly / e(8),
                2.0 * ldu + ly * ly / e(10) + lu * lu / e(11),
                2.0 * lu + (e(1) + e(2)) * t * lu * lu + ly * ly / e(9) + e(11),
                8.0 * ly + 2.0 * t * ly + 2.0 * t * ldu * ly,
                4.0 * lu + 2.0 * t * lu + 2.0 * t * ldu * lu,
            ];
            Ok(terms.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        }
    }
}

/// Expands the five-parameter choice `ε₁=ε₂=ε₆=ẽ₁, ε₃=ẽ₂, ε₄=ε₅=ẽ₃,
/// ε₇=ε₁₁=ẽ₄, ε₈=ε₉=ε₁₀=ẽ₅` to the full vector.
pub fn expand_simplified(et: [f64; 5]) -> [f64; 11] {
    let [a, b, c, d, e] = et;
    [a, a, b, c, c, a, d, e, e, e, d]
}

/// `c^ε` of the five-parameter choice, written out directly.
pub fn c_eps_simplified(et: [f64; 5], k: &GrowthConstants, horizon: f64) -> f64 {
    let [e1, _e2, _e3, e4, e5] = et;
    let t = horizon;
    let (ly, lu, ldu) = (k.l_y, k.l_u, k.l_du);
    [
        2.0 * ly + 7.0 * t * ldu * ldu / e1 + 2.0 * e1 * t * ly * ly + lu * lu / e4 + 3.0 * e5,
        2.0 * lu + 7.0 * t / e1 + e4 + ly * ly / e5,
        2.0 * ldu + ly * ly / e5 + lu * lu / e4,
        2.0 * lu + 2.0 * e1 * t * lu * lu + ly * ly / e5 + e4,
        8.0 * ly + 2.0 * t * ly + 2.0 * t * ldu * ly,
        4.0 * lu + 2.0 * t * lu + 2.0 * t * ldu * lu,
    ]
    .iter()
    .copied()
    .fold(f64::NEG_INFINITY, f64::max)
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(Error::Config(format!("κ must be at least 1, got {kappa}")));
    }
    Ok(())
}

fn radius_denominator(mode: Mode, horizon: f64) -> f64 {
    match mode {
        Mode::LipschitzQuadratic => 168.0,
        Mode::Quadratic => 336.0 * horizon.powi(2).max(2.0),
    }
}

/// `𝒰(κ)` as stated in the theorems; `+∞` when `L★ = 0`.
pub fn compute_radius_bound(kappa: f64, l_star: f64, horizon: f64, mode: Mode) -> Result<f64> {
    check_kappa(kappa)?;
    if l_star == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / (radius_denominator(mode, horizon) * kappa * l_star * l_star))
}

/// Radius bound obtained by running the contraction argument with κ:
/// `𝒰(κ)/κ`; `+∞` when `L★ = 0`.
pub fn proof_radius_bound(kappa: f64, l_star: f64, horizon: f64, mode: Mode) -> Result<f64> {
    check_kappa(kappa)?;
    if l_star == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / (radius_denominator(mode, horizon) * kappa * kappa * l_star * l_star))
}

/// Largest `ε₁ + ε₂` allowed by the square-root condition:
/// `(√(Kκ) − √(3κ))² − 3κ` with `K = 28` or `56`.
pub fn max_eps_sum(kappa: f64, mode: Mode) -> f64 {
    let a = (mode.sqrt_factor() * kappa).sqrt() - (3.0 * kappa).sqrt();
    a * a - 3.0 * kappa
}

/// Sample-max estimates of the data norms entering `I₀^ε`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DataNorms {
    /// `‖ξ‖_{𝓛^{∞,c}}`.
    pub xi: f64,
    /// `sup_s ‖η(s)‖_{𝓛^{∞,c}}`.
    pub eta: f64,
    /// `sup_s ‖∂_s η(s)‖_{𝓛^{∞,c}}`.
    pub d_eta: f64,
    /// `‖h(·, 0)‖_{𝕃^{1,∞,c}}`.
    pub h0: f64,
    /// `sup_s ‖g(s, ·, 0)‖_{𝕃^{1,∞,c}}`.
    pub g0: f64,
    /// `sup_s ‖∂_s g(s, ·, 0)‖_{𝕃^{1,∞,c}}`.
    pub dg0: f64,
}

/// `I₀^ε` from the data norms; uses `ε₁ … ε₆`.
pub fn assemble_i0(n: &DataNorms, eps: &[f64]) -> Result<f64> {
    check_eps(eps, 6)?;
    let e = |i: usize| eps[i - 1];
    Ok(n.xi.powi(2)
        + 2.0 * n.eta.powi(2)
        + (1.0 + e(1) + e(2)) * n.d_eta.powi(2)
        + e(3) * n.h0.powi(2)
        + (e(4) + e(5)) * n.g0.powi(2)
        + (e(1) + e(2) + e(6)) * n.dg0.powi(2))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Estimates the data norms on `ens`. The zero-argument drivers are
/// `h(·, 0)`, `g(s, ·, 0)` and `∇g(s, ·, 0) = ∂_s g(s, ·, 0)`.
pub fn estimate_data_norms<S: SystemCoefficients + ?Sized>(sys: &S, c: f64, ens: &PathEnsemble) -> DataNorms {
    let grid = ens.grid();
    let n = grid.n_steps();
    let (d1, d2, m) = (sys.d1(), sys.d2(), ens.noise_dim());
    let wt = (0.5 * c * grid.horizon()).exp();
    let z1 = vec![0.0; d1];
    let z1m = vec![0.0; d1 * m];
    let z2 = vec![0.0; d2];
    let z2m = vec![0.0; d2 * m];
    let mut out = DataNorms::default();
    let mut b1 = vec![0.0; d1];
    let mut b2 = vec![0.0; d2];
    for p in 0..ens.n_paths() {
        let path = ens.path(p);
        sys.xi(path, &mut b1);
        out.xi = out.xi.max(wt * norm(&b1));
        for j in 0..=n {
            let s = grid.t(j);
            sys.eta(s, path, &mut b2);
            out.eta = out.eta.max(wt * norm(&b2));
            sys.d_eta(s, path, &mut b2);
            out.d_eta = out.d_eta.max(wt * norm(&b2));
        }
        let mut h_int = 0.0;
        for i in 0..n {
            let pt = ens.point(i, p);
            sys.h(&pt, &z1, &z1m, &z2, &z2m, &z2, &mut b1);
            h_int += (0.5 * c * grid.t(i)).exp() * norm(&b1) * grid.dt(i);
        }
        out.h0 = out.h0.max(h_int);
        for j in 0..=n {
            let s = grid.t(j);
            let (mut g_int, mut dg_int) = (0.0, 0.0);
            for i in 0..n {
                let pt = ens.point(i, p);
                let w = (0.5 * c * grid.t(i)).exp() * grid.dt(i);
                sys.g(s, &pt, &z2, &z2m, &z1, &z1m, &mut b2);
                g_int += w * norm(&b2);
                sys.grad_g(s, &pt, &z2, &z2m, &z2, &z2m, &z1, &z1m, &mut b2);
                dg_int += w * norm(&b2);
            }
            out.g0 = out.g0.max(g_int);
            out.dg0 = out.dg0.max(dg_int);
        }
    }
    out
}

/// `I₀^ε` estimated on `ens`, with the constituent norms.
pub fn estimate_i0<S: SystemCoefficients + ?Sized>(
    sys: &S,
    eps: &[f64],
    c: f64,
    ens: &PathEnsemble,
) -> Result<(f64, DataNorms)> {
    let norms = estimate_data_norms(sys, c, ens);
    Ok((assemble_i0(&norms, eps)?, norms))
}

/// Which radius bound the certifier enforces.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusPolicy {
    /// The smaller of the stated and the proof-derived bound.
    #[default]
    Conservative,
    /// The bound printed in the theorem statements.
    Statement,
}

/// `C_ε` at the optimal split of the contraction argument, `1 - κ/(2κ) = 1/2`;
/// the default `γ` is half of it.
pub const DEFAULT_GAMMA: f64 = 0.25;

/// Inputs of [`certify`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertInput {
    pub kappa: f64,
    pub eps: Vec<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    pub r_sq: f64,
    pub c: f64,
    pub mode: Mode,
    pub constants: GrowthConstants,
    pub horizon: f64,
    #[serde(default)]
    pub radius_policy: RadiusPolicy,
}

/// Certification outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub kappa: f64,
    pub mode: Mode,
    pub l_star: f64,
    pub eps: Vec<f64>,
    pub gamma: f64,
    pub c_eps: f64,
    pub c_used: f64,
    pub i0: f64,
    /// `𝒰(κ)` as stated.
    pub u_kappa: f64,
    /// Bound from the contraction argument run with κ.
    pub u_kappa_proof: f64,
    /// The bound enforced by the radius condition.
    pub r_sq_bound: f64,
    pub r_sq: f64,
    pub radius_policy: RadiusPolicy,
    /// `(√(ε₁+ε₂+3κ) + √(3κ))²`.
    pub sqrt_lhs: f64,
    pub sqrt_rhs: f64,
    pub sqrt_condition: bool,
    pub i0_condition: bool,
    pub radius_condition: bool,
    pub weight_condition: bool,
    pub pass: bool,
    pub notes: Vec<String>,
}

/// Evaluates the four κ-conditions for a given `I₀^ε`.
pub fn certify(input: &CertInput, i0: f64) -> Result<CertReport> {
    let mode = input.mode;
    check_eps(&input.eps, mode.eps_len())?;
    let gamma = input.gamma.unwrap_or(DEFAULT_GAMMA);
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Config(format!("γ must be positive, got {gamma}")));
    }
    for (name, v) in [("R²", input.r_sq), ("c", input.c), ("I₀", i0), ("T", input.horizon)] {
        if !v.is_finite() {
            return Err(Error::Config(format!("{name} must be finite")));
        }
    }
    let kappa = input.kappa;
    let ls = l_star(&input.constants, mode);
    let c_eps = compute_c_eps(&input.eps, &input.constants, input.horizon, mode)?;
    let u_kappa = compute_radius_bound(kappa, ls, input.horizon, mode)?;
    let u_kappa_proof = proof_radius_bound(kappa, ls, input.horizon, mode)?;
    let r_sq_bound = match input.radius_policy {
        RadiusPolicy::Conservative => u_kappa.min(u_kappa_proof),
        RadiusPolicy::Statement => u_kappa,
    };
    let eps_sum = input.eps[0] + input.eps[1];
    let sqrt_lhs = ((eps_sum + 3.0 * kappa).sqrt() + (3.0 * kappa).sqrt()).powi(2);
    let sqrt_rhs = mode.sqrt_factor() * kappa;
    // Compared through the equivalent closed form so the boundary value itself passes.
    let sqrt_condition = eps_sum <= max_eps_sum(kappa, mode);
    let i0_condition = i0 <= gamma * input.r_sq / kappa;
    let radius_condition = input.r_sq < r_sq_bound;
    let weight_condition = input.c >= c_eps;
    let mut notes = Vec::new();
    if u_kappa_proof < u_kappa {
        notes.push(format!(
            "stated radius bound {u_kappa:.6e} exceeds the proof-derived bound {u_kappa_proof:.6e} by a factor κ = {kappa}; enforcing the {} bound",
            match input.radius_policy {
                RadiusPolicy::Conservative => "smaller",
                RadiusPolicy::Statement => "stated",
            }
        ));
    }
    if ls == 0.0 {
        notes.push("L★ = 0: the radius is unbounded".into());
    }
    Ok(CertReport {
        kappa,
        mode,
        l_star: ls,
        eps: input.eps.clone(),
        gamma,
        c_eps,
        c_used: input.c,
        i0,
        u_kappa,
        u_kappa_proof,
        r_sq_bound,
        r_sq: input.r_sq,
        radius_policy: input.radius_policy,
        sqrt_lhs,
        sqrt_rhs,
        sqrt_condition,
        i0_condition,
        radius_condition,
        weight_condition,
        pass: sqrt_condition && i0_condition && radius_condition && weight_condition,
        notes,
    })
}

/// Certification settings for a concrete system. Unset `c` defaults to `c^ε`
/// and unset `R²` to the smallest radius meeting the `I₀` condition,
/// `κ I₀^ε / γ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertSettings {
    pub kappa: f64,
    pub eps: Vec<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub r_sq: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    pub mode: Mode,
    pub constants: GrowthConstants,
    #[serde(default)]
    pub radius_policy: RadiusPolicy,
}

/// Estimates `I₀^ε` for `sys` on `ens` and evaluates the κ-conditions.
pub fn certify_system<S: SystemCoefficients + ?Sized>(
    sys: &S,
    settings: &CertSettings,
    ens: &PathEnsemble,
) -> Result<(CertReport, DataNorms)> {
    let horizon = ens.grid().horizon();
    let c = match settings.c {
        Some(c) => c,
        None => compute_c_eps(&settings.eps, &settings.constants, horizon, settings.mode)?,
    };
    let (i0, norms) = estimate_i0(sys, &settings.eps, c, ens)?;
    let gamma = settings.gamma.unwrap_or(DEFAULT_GAMMA);
    let r_sq = settings.r_sq.unwrap_or(settings.kappa * i0 / gamma);
    let input = CertInput {
        kappa: settings.kappa,
        eps: settings.eps.clone(),
        gamma: Some(gamma),
        r_sq,
        c,
        mode: settings.mode,
        constants: settings.constants,
        horizon,
        radius_policy: settings.radius_policy,
    };
    Ok((certify(&input, i0)?, norms))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_c_eps_examples() {
        let k = GrowthConstants { l_du: 1.0, ..Default::default() };
        let c = compute_c_eps(&[7.0, 7.0], &k, 1.0, Mode::Quadratic).unwrap();
        assert_eq!(c, 2.0);
        let zero = GrowthConstants::default();
        let c = compute_c_eps(&[3.0, 2.0], &zero, 1.5, Mode::Quadratic).unwrap();
        assert_eq!(c, 7.0 * 1.5 / 2.0);
        assert!(compute_c_eps(&[0.0, 1.0], &zero, 1.0, Mode::Quadratic).is_err());
    }

    #[test]
    fn radius_bounds() {
        assert_eq!(compute_radius_bound(10.0, 1.0, 1.0, Mode::LipschitzQuadratic).unwrap(), 1.0 / 1680.0);
        assert_eq!(compute_radius_bound(10.0, 1.0, 1.0, Mode::Quadratic).unwrap(), 1.0 / 6720.0);
        assert_eq!(compute_radius_bound(7.0, 1.0, 1.0, Mode::LipschitzQuadratic).unwrap(), 1.0 / 1176.0);
        assert_eq!(proof_radius_bound(10.0, 1.0, 1.0, Mode::LipschitzQuadratic).unwrap(), 1.0 / 16800.0);
        assert_eq!(proof_radius_bound(10.0, 1.0, 1.0, Mode::Quadratic).unwrap(), 1.0 / 67200.0);
        assert!(compute_radius_bound(10.0, 0.0, 1.0, Mode::Quadratic).unwrap().is_infinite());
        assert!(compute_radius_bound(0.5, 1.0, 1.0, Mode::Quadratic).is_err());
    }
}
