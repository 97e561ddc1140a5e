//! Least-squares estimation of `E[· | F_{t_i}]` across an ensemble.
//!
//! A [`Regressor`] factorises one design per node and reuses it for every
//! right-hand side, so projections are linear in the data. Three bases exist:
//! polynomials in the standardised current state, equal-width bins on the first
//! state component, and grouping by the exact increment prefix. The last one is
//! the exact conditional expectation on a tree of equiprobable paths.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::PathEnsemble;

/// Rows per block in reductions. Fixed so sums do not depend on thread count.
const BLOCK: usize = 2048;
/// Condition number above which the Gram matrix is treated as rank deficient.
const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BasisKind {
    /// Monomials of total degree `≤ degree` in the current state.
    Polynomial { degree: usize },
    /// Piecewise constants on `count` equal-width bins of the first state component.
    Bins { count: usize },
    /// One cell per distinct increment prefix.
    Filtration,
}

/// Serialized as a flat table: `kind`, its parameter, and an optional `clip`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FlatBasis", into = "FlatBasis")]
pub struct BasisSpec {
    pub kind: BasisKind,
    /// Fitted values are clipped to `[-clip, clip]` when set.
    pub clip: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum FlatKind {
    Polynomial,
    Bins,
    Filtration,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlatBasis {
    kind: FlatKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    degree: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clip: Option<f64>,
}

impl TryFrom<FlatBasis> for BasisSpec {
    type Error = String;

    fn try_from(f: FlatBasis) -> std::result::Result<Self, String> {
        let kind = match (f.kind, f.degree, f.count) {
            (FlatKind::Polynomial, Some(degree), None) => BasisKind::Polynomial { degree },
            (FlatKind::Bins, None, Some(count)) => BasisKind::Bins { count },
            (FlatKind::Filtration, None, None) => BasisKind::Filtration,
            (FlatKind::Polynomial, ..) => return Err("polynomial basis takes `degree` (and no `count`)".into()),
            (FlatKind::Bins, ..) => return Err("bins basis takes `count` (and no `degree`)".into()),
            (FlatKind::Filtration, ..) => return Err("filtration basis takes no `degree` or `count`".into()),
        };
        Ok(Self { kind, clip: f.clip })
    }
}

impl From<BasisSpec> for FlatBasis {
    fn from(b: BasisSpec) -> Self {
        let (kind, degree, count) = match b.kind {
            BasisKind::Polynomial { degree } => (FlatKind::Polynomial, Some(degree), None),
            BasisKind::Bins { count } => (FlatKind::Bins, None, Some(count)),
            BasisKind::Filtration => (FlatKind::Filtration, None, None),
        };
        Self { kind, degree, count, clip: b.clip }
    }
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self::polynomial(3)
    }
}

impl BasisSpec {
    pub fn polynomial(degree: usize) -> Self {
        Self { kind: BasisKind::Polynomial { degree }, clip: None }
    }
    pub fn bins(count: usize) -> Self {
        Self { kind: BasisKind::Bins { count }, clip: None }
    }
    pub fn filtration() -> Self {
        Self { kind: BasisKind::Filtration, clip: None }
    }
    pub fn with_clip(mut self, level: f64) -> Self {
        self.clip = Some(level);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let BasisKind::Bins { count: 0 } = self.kind {
            return Err(Error::Config("bin count must be at least 1".into()));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip level must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// Diagnostics of the design at one node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub node: usize,
    /// Number of basis functions or occupied cells.
    pub size: usize,
    /// Condition number of the Gram matrix (1 for cell bases).
    pub condition: f64,
    /// Whether the ridge fallback was used.
    pub ridge: bool,
}

enum Projector {
    Linear {
        /// `n_paths × k` row-major design.
        design: Vec<f64>,
        k: usize,
        /// Inverse of the (possibly regularised) Gram matrix.
        gram_inv: DMatrix<f64>,
    },
    Cells {
        ids: Vec<u32>,
        counts: Vec<u32>,
    },
}

/// Cached per-node projectors for one ensemble and basis.
pub struct Regressor {
    basis: BasisSpec,
    n_paths: usize,
    nodes: Vec<Projector>,
    reports: Vec<NodeReport>,
}

impl Regressor {
    /// Factorises the design at nodes `0..N`.
    pub fn new(ens: &PathEnsemble, basis: &BasisSpec) -> Result<Self> {
        basis.validate()?;
        let steps = ens.grid().n_steps();
        let built: Vec<(Projector, NodeReport)> = (0..steps)
            .into_par_iter()
            .map(|i| build_projector(ens, i, basis))
            .collect();
        let (nodes, reports) = built.into_iter().unzip();
        Ok(Self {
            basis: basis.clone(),
            n_paths: ens.n_paths(),
            nodes,
            reports,
        })
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn reports(&self) -> &[NodeReport] {
        &self.reports
    }

    /// True if any node needed the ridge fallback.
    pub fn ridge_used(&self) -> bool {
        self.reports.iter().any(|r| r.ridge)
    }

    /// Projects `values` (`n_paths × dim`, row-major) at `node < N`.
    pub fn project(&self, node: usize, values: &[f64], dim: usize) -> Vec<f64> {
        assert_eq!(values.len(), self.n_paths * dim, "value block has the wrong shape");
        let mut out = match &self.nodes[node] {
            Projector::Linear { design, k, gram_inv } => {
                project_linear(design, *k, gram_inv, values, dim, self.n_paths)
            }
            Projector::Cells { ids, counts } => project_cells(ids, counts, values, dim),
        };
        if let Some(c) = self.basis.clip {
            out.iter_mut().for_each(|v| *v = v.clamp(-c, c));
        }
        out
    }
}

/// One-shot conditional expectation of `values` at `node`.
pub fn condexp(
    values: &[f64],
    dim: usize,
    ens: &PathEnsemble,
    node: usize,
    basis: &BasisSpec,
) -> Result<Vec<f64>> {
    basis.validate()?;
    if node >= ens.grid().n_steps() {
        return Err(Error::Config(format!("regression node {node} must be below N")));
    }
    if let Some(p) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "regression input".into(),
            node,
            path: p / dim.max(1),
        });
    }
    let (proj, _) = build_projector(ens, node, basis);
    let mut out = match &proj {
        Projector::Linear { design, k, gram_inv } => {
            project_linear(design, *k, gram_inv, values, dim, ens.n_paths())
        }
        Projector::Cells { ids, counts } => project_cells(ids, counts, values, dim),
    };
    if let Some(c) = basis.clip {
        out.iter_mut().for_each(|v| *v = v.clamp(-c, c));
    }
    Ok(out)
}

fn build_projector(ens: &PathEnsemble, node: usize, basis: &BasisSpec) -> (Projector, NodeReport) {
    match basis.kind {
        BasisKind::Polynomial { degree } => polynomial_projector(ens, node, degree),
        BasisKind::Bins { count } => {
            let xs: Vec<f64> = (0..ens.n_paths()).map(|p| ens.x(p, node)[0]).collect();
            let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
            let width = hi - lo;
            let raw: Vec<u32> = xs
                .iter()
                .map(|&v| {
                    if width > 0.0 {
                        (((v - lo) / width * count as f64) as usize).min(count - 1) as u32
                    } else {
                        0
                    }
                })
                .collect();
            cells(node, raw)
        }
        BasisKind::Filtration => {
            let mut seen: HashMap<Vec<u64>, u32> = HashMap::new();
            let raw: Vec<u32> = (0..ens.n_paths())
                .map(|p| {
                    let key: Vec<u64> = (0..node)
                        .flat_map(|i| ens.db(p, i).iter().map(|v| v.to_bits()))
                        .collect();
                    let next = seen.len() as u32;
                    *seen.entry(key).or_insert(next)
                })
                .collect();
            cells(node, raw)
        }
    }
}

/// Relabels raw cell ids densely in order of first appearance.
fn cells(node: usize, raw: Vec<u32>) -> (Projector, NodeReport) {
    let mut relabel: HashMap<u32, u32> = HashMap::new();
    let ids: Vec<u32> = raw
        .into_iter()
        .map(|r| {
            let next = relabel.len() as u32;
            *relabel.entry(r).or_insert(next)
        })
        .collect();
    let mut counts = vec![0u32; relabel.len()];
    for &id in &ids {
        counts[id as usize] += 1;
    }
    let report = NodeReport {
        node,
        size: counts.len(),
        condition: 1.0,
        ridge: false,
    };
    (Projector::Cells { ids, counts }, report)
}

fn project_cells(ids: &[u32], counts: &[u32], values: &[f64], dim: usize) -> Vec<f64> {
    let mut sums = vec![0.0; counts.len() * dim];
    for (p, &id) in ids.iter().enumerate() {
        let o = id as usize * dim;
        for c in 0..dim {
            sums[o + c] += values[p * dim + c];
        }
    }
    for (g, &n) in counts.iter().enumerate() {
        for c in 0..dim {
            sums[g * dim + c] /= n as f64;
        }
    }
    let mut out = vec![0.0; values.len()];
    for (p, &id) in ids.iter().enumerate() {
        out[p * dim..(p + 1) * dim].copy_from_slice(&sums[id as usize * dim..(id as usize + 1) * dim]);
    }
    out
}

/// Exponent vectors of all monomials in `n` variables with total degree `≤ degree`.
fn monomials(n: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; n]];
    if n == 0 {
        return out;
    }
    for total in 1..=degree {
        let mut cur = vec![0; n];
        fill(&mut out, &mut cur, 0, total);
    }
    out
}

fn fill(out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>, var: usize, left: usize) {
    if var + 1 == cur.len() {
        cur[var] = left;
        out.push(cur.clone());
        cur[var] = 0;
        return;
    }
    for e in (0..=left).rev() {
        cur[var] = e;
        fill(out, cur, var + 1, left - e);
    }
    cur[var] = 0;
}

fn polynomial_projector(ens: &PathEnsemble, node: usize, degree: usize) -> (Projector, NodeReport) {
    let n_paths = ens.n_paths();
    let n = ens.state_dim();
    // Standardise each component; components without spread carry no information.
    let mut centre = vec![0.0; n];
    let mut scale = vec![0.0; n];
    for k in 0..n {
        let mean = (0..n_paths).map(|p| ens.x(p, node)[k]).sum::<f64>() / n_paths as f64;
        let var = (0..n_paths).map(|p| (ens.x(p, node)[k] - mean).powi(2)).sum::<f64>() / n_paths as f64;
        centre[k] = mean;
        scale[k] = var.sqrt();
    }
    let live: Vec<usize> = (0..n)
        .filter(|&k| scale[k] > 1e-12 * (1.0 + centre[k].abs()))
        .collect();
    let exps = monomials(live.len(), if live.is_empty() { 0 } else { degree });
    let k = exps.len();
    let mut design = vec![0.0; n_paths * k];
    design.par_chunks_mut(k).enumerate().for_each(|(p, row)| {
        let x = ens.x(p, node);
        let z: Vec<f64> = live.iter().map(|&c| (x[c] - centre[c]) / scale[c]).collect();
        for (j, e) in exps.iter().enumerate() {
            row[j] = e.iter().zip(&z).map(|(&a, &b)| b.powi(a as i32)).product();
        }
    });
    let partial: Vec<Vec<f64>> = design
        .par_chunks(BLOCK * k)
        .map(|block| {
            let mut g = vec![0.0; k * k];
            for row in block.chunks(k) {
                for a in 0..k {
                    for b in a..k {
                        g[a * k + b] += row[a] * row[b];
                    }
                }
            }
            g
        })
        .collect();
    let mut gram = DMatrix::<f64>::zeros(k, k);
    for g in &partial {
        for a in 0..k {
            for b in a..k {
                gram[(a, b)] += g[a * k + b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let eig = SymmetricEigen::new(gram.clone());
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v.abs())));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let ridge = !(condition <= MAX_CONDITION);
    if ridge {
        let lambda = 1e-8 * gram.trace() / k as f64;
        for a in 0..k {
            gram[(a, a)] += lambda;
        }
    }
    let gram_inv = gram
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| gram.clone().try_inverse())
        .unwrap_or_else(|| DMatrix::zeros(k, k));
    let report = NodeReport {
        node,
        size: k,
        condition,
        ridge,
    };
    (Projector::Linear { design, k, gram_inv }, report)
}

fn project_linear(
    design: &[f64],
    k: usize,
    gram_inv: &DMatrix<f64>,
    values: &[f64],
    dim: usize,
    n_paths: usize,
) -> Vec<f64> {
    // Aᵀ y accumulated in fixed blocks.
    let partial: Vec<Vec<f64>> = design
        .par_chunks(BLOCK * k)
        .zip(values.par_chunks(BLOCK * dim))
        .map(|(rows, vals)| {
            let mut acc = vec![0.0; k * dim];
            for (row, v) in rows.chunks(k).zip(vals.chunks(dim)) {
                for a in 0..k {
                    let ra = row[a];
                    for c in 0..dim {
                        acc[a * dim + c] += ra * v[c];
                    }
                }
            }
            acc
        })
        .collect();
    let mut rhs = vec![0.0; k * dim];
    for acc in &partial {
        for (r, a) in rhs.iter_mut().zip(acc) {
            *r += a;
        }
    }
    let mut beta = vec![0.0; k * dim];
    for a in 0..k {
        for c in 0..dim {
            let mut s = 0.0;
            for b in 0..k {
                s += gram_inv[(a, b)] * rhs[b * dim + c];
            }
            beta[a * dim + c] = s;
        }
    }
    let mut out = vec![0.0; n_paths * dim];
    out.par_chunks_mut(dim)
        .zip(design.par_chunks(k))
        .for_each(|(o, row)| {
            for c in 0..dim {
                let mut s = 0.0;
                for a in 0..k {
                    s += row[a] * beta[a * dim + c];
                }
                o[c] = s;
            }
        });
    out
}
