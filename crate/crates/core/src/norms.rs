//! Discrete weighted norms and the energy inequalities.
//!
//! Approximations: essential suprema become sample maxima, and the BMO
//! supremum over stopping times becomes a maximum over grid times, which
//! bounds the true norm from below.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::ProcessField;
use crate::paths::{PathEnsemble, TimeGrid};
use crate::regression::Regressor;

#[inline]
fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Norm estimates of a pair `(Y, σᵀZ)` (or a family, taking the sup over `s`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub c: f64,
    /// `max_{i,p} e^{c t_i / 2} |Y|`.
    pub s_inf: f64,
    /// `(E Σ_i e^{c t_i} |σᵀZ_i|² Δ_i)^{1/2}`.
    pub h2: f64,
    /// Squared BMO estimate `max_i max_p E_i[Σ_{j ≥ i} e^{c t_j} |σᵀZ_j|² Δ_j]`.
    pub bmo_sq: f64,
}

impl NormReport {
    pub fn bmo(&self) -> f64 {
        self.bmo_sq.sqrt()
    }

    /// Entrywise maximum of two reports with the same weight.
    pub fn sup(self, other: Self) -> Self {
        Self {
            c: self.c,
            s_inf: self.s_inf.max(other.s_inf),
            h2: self.h2.max(other.h2),
            bmo_sq: self.bmo_sq.max(other.bmo_sq),
        }
    }
}

/// `max_{i,p} e^{c t_i / 2} |Y_i|`.
pub fn s_inf_norm(y: &ProcessField, c: f64, grid: &TimeGrid) -> f64 {
    (0..y.n_nodes())
        .map(|i| {
            let w = (0.5 * c * grid.t(i)).exp();
            (0..y.n_paths()).map(|p| w * sq(y.get(i, p)).sqrt()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Pathwise `A_p(i) = Σ_{j ≥ i} e^{c t_j} |Z_j|² Δ_j` for every node (the last is 0).
pub fn tail_integrals(z: &ProcessField, c: f64, grid: &TimeGrid) -> ProcessField {
    let n = grid.n_steps();
    let np = z.n_paths();
    let mut tails = ProcessField::zeros(n + 1, np, 1);
    for i in (0..n).rev() {
        let w = (c * grid.t(i)).exp() * grid.dt(i);
        for p in 0..np {
            let next = tails.get(i + 1, p)[0];
            tails.get_mut(i, p)[0] = next + w * sq(z.get(i, p));
        }
    }
    tails
}

/// `(E Σ_i e^{c t_i}|Z_i|² Δ_i)^{1/2}`.
pub fn h2_norm(z: &ProcessField, c: f64, grid: &TimeGrid) -> f64 {
    let tails = tail_integrals(z, c, grid);
    let np = z.n_paths();
    ((0..np).map(|p| tails.get(0, p)[0]).sum::<f64>() / np as f64).sqrt()
}

/// Squared BMO estimates for several `σᵀZ` fields at once (one regression per node).
pub fn bmo_sq_many(zs: &[&ProcessField], c: f64, ens: &PathEnsemble, reg: &Regressor) -> Vec<f64> {
    if zs.is_empty() {
        return Vec::new();
    }
    let grid = ens.grid();
    let k = zs.len();
    let np = ens.n_paths();
    let tails: Vec<ProcessField> = zs.par_iter().map(|z| tail_integrals(z, c, grid)).collect();
    let per_node: Vec<Vec<f64>> = (0..grid.n_steps())
        .into_par_iter()
        .map(|i| {
            let mut block = vec![0.0; np * k];
            for p in 0..np {
                for (q, t) in tails.iter().enumerate() {
                    block[p * k + q] = t.get(i, p)[0];
                }
            }
            let fitted = reg.project(i, &block, k);
            let mut best = vec![0.0f64; k];
            for p in 0..np {
                for q in 0..k {
                    best[q] = best[q].max(fitted[p * k + q]);
                }
            }
            best
        })
        .collect();
    (0..k)
        .map(|q| per_node.iter().map(|b| b[q]).fold(0.0, f64::max))
        .collect()
}

/// Squared BMO estimate of one field.
pub fn bmo_sq(z: &ProcessField, c: f64, ens: &PathEnsemble, reg: &Regressor) -> f64 {
    bmo_sq_many(&[z], c, ens, reg)[0]
}

/// Norm report of a pair; either part may be absent.
pub fn weighted_norms(
    y: Option<&ProcessField>,
    z: Option<&ProcessField>,
    c: f64,
    ens: &PathEnsemble,
    reg: &Regressor,
) -> NormReport {
    let grid = ens.grid();
    NormReport {
        c,
        s_inf: y.map_or(0.0, |y| s_inf_norm(y, c, grid)),
        h2: z.map_or(0.0, |z| h2_norm(z, c, grid)),
        bmo_sq: z.map_or(0.0, |z| bmo_sq(z, c, ens, reg)),
    }
}

/// Per-`s` reports of a family and their supremum.
pub fn family_norms(
    u: &[ProcessField],
    v: &[ProcessField],
    c: f64,
    ens: &PathEnsemble,
    reg: &Regressor,
) -> (NormReport, Vec<NormReport>) {
    let grid = ens.grid();
    let refs: Vec<&ProcessField> = v.iter().collect();
    let bmos = bmo_sq_many(&refs, c, ens, reg);
    let per_s: Vec<NormReport> = u
        .par_iter()
        .zip(v.par_iter())
        .zip(bmos.par_iter())
        .map(|((u, v), &b)| NormReport {
            c,
            s_inf: s_inf_norm(u, c, grid),
            h2: h2_norm(v, c, grid),
            bmo_sq: b,
        })
        .collect();
    let sup = per_s.iter().fold(NormReport { c, ..Default::default() }, |a, r| a.sup(*r));
    (sup, per_s)
}

/// Outcome of an inequality check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `E[(∫ e^{cr}|σᵀZ_r|² dr)^p] ≤ p! ‖Z‖_BMO^{2p}` with relative slack `1e-6`.
pub fn energy_check(z: &ProcessField, c: f64, p: u32, ens: &PathEnsemble, reg: &Regressor) -> InequalityCheck {
    let tails = tail_integrals(z, c, ens.grid());
    let np = z.n_paths();
    let lhs = (0..np).map(|q| tails.get(0, q)[0].powi(p as i32)).sum::<f64>() / np as f64;
    let factorial: f64 = (1..=p).map(f64::from).product();
    let rhs = factorial * bmo_sq(z, c, ens, reg).powi(p as i32);
    InequalityCheck {
        lhs,
        rhs,
        pass: lhs <= rhs * (1.0 + 1e-6),
    }
}

/// Diagonal inequality at `t = 0`, checked on every path:
///
/// `Σ_u w_u|V̂_u^u|²Δ_u ≤ Σ_u w_u|V̂_u^0|²Δ_u + Σ_r Δ_r Σ_{u>r} w_u Δ_u (ε|V̂_u^{r+1}|² + ε⁻¹|∂V_u^r|²)`
///
/// with `w_u = e^{cu}` and `V̂^r_u = V[N][u] - Σ_{j ≥ r} ∂V[j][u] Δ_j`, the family
/// rebuilt from its terminal member and its derivative. Along this family the
/// increments in `s` are exactly `∂V Δ`, which makes the discrete statement
/// hold pathwise. The reported `lhs`/`rhs` belong to the path with the
/// smallest margin.
pub fn diagonal_energy_check(
    v: &[ProcessField],
    dv: &[ProcessField],
    c: f64,
    eps: f64,
    ens: &PathEnsemble,
) -> InequalityCheck {
    let grid = ens.grid();
    let n = grid.n_steps();
    let np = v[0].n_paths();
    let dim = v[0].dim();
    let rows: Vec<(f64, f64)> = (0..np)
        .into_par_iter()
        .map(|p| {
            // hat[r][u], r = 0..=N, u = 0..N, built backwards in r.
            let mut hat = vec![vec![0.0; dim]; (n + 1) * n];
            for u in 0..n {
                hat[n * n + u].copy_from_slice(v[n].get(u, p));
            }
            for r in (0..n).rev() {
                let h = grid.dt(r);
                for u in 0..n {
                    let d = dv[r].get(u, p);
                    let next = hat[(r + 1) * n + u].clone();
                    for (k, slot) in hat[r * n + u].iter_mut().enumerate() {
                        *slot = next[k] - d[k] * h;
                    }
                }
            }
            let w = |u: usize| (c * grid.t(u)).exp() * grid.dt(u);
            let lhs: f64 = (0..n).map(|u| w(u) * sq(&hat[u * n + u])).sum();
            let mut rhs: f64 = (0..n).map(|u| w(u) * sq(&hat[u])).sum();
            for r in 0..n {
                let h = grid.dt(r);
                for u in (r + 1)..n {
                    rhs += h * w(u) * (eps * sq(&hat[(r + 1) * n + u]) + sq(dv[r].get(u, p)) / eps);
                }
            }
            (lhs, rhs)
        })
        .collect();
    let (lhs, rhs) = rows
        .iter()
        .copied()
        .fold((0.0, f64::INFINITY), |best, cur| {
            if cur.1 - cur.0 < best.1 - best.0 {
                cur
            } else {
                best
            }
        });
    let pass = rows.iter().all(|(l, r)| *l <= *r + 1e-9);
    InequalityCheck { lhs, rhs, pass }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{build_grid, simulate_forward, ConstantVolatility};
    use crate::regression::BasisSpec;

    fn setup() -> (PathEnsemble, Regressor) {
        let g = build_grid(1.0, 8).unwrap();
        let e = simulate_forward(&ConstantVolatility::scalar(1.0), &[0.0], &g, 64, 4).unwrap();
        let r = Regressor::new(&e, &BasisSpec::polynomial(3)).unwrap();
        (e, r)
    }

    #[test]
    fn constant_fields_have_closed_form_norms() {
        let (e, r) = setup();
        let y = ProcessField::from_fn(9, 64, 1, |_, _, o| o[0] = 2.0);
        let z = ProcessField::from_fn(9, 64, 1, |i, _, o| o[0] = if i < 8 { 1.0 } else { 0.0 });
        let rep = weighted_norms(Some(&y), Some(&z), 0.0, &e, &r);
        assert_eq!(rep.s_inf, 2.0);
        assert!((rep.bmo_sq - 1.0).abs() < 1e-12);
        assert!((rep.h2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_weight_cancels() {
        let (e, _) = setup();
        let c = 0.8;
        let y = ProcessField::from_fn(9, 64, 1, |i, _, o| o[0] = (-0.5 * c * e.grid().t(i)).exp());
        assert!((s_inf_norm(&y, c, e.grid()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn energy_for_deterministic_and_zero_fields() {
        let (e, r) = setup();
        let one = ProcessField::from_fn(9, 64, 1, |i, _, o| o[0] = if i < 8 { 1.0 } else { 0.0 });
        let chk = energy_check(&one, 0.0, 2, &e, &r);
        assert!((chk.lhs - 1.0).abs() < 1e-12 && (chk.rhs - 2.0).abs() < 1e-12 && chk.pass);
        let zero = ProcessField::zeros(9, 64, 1);
        let chk = energy_check(&zero, 0.0, 2, &e, &r);
        assert!(chk.lhs == 0.0 && chk.rhs == 0.0 && chk.pass);
    }
}
