//! Time grids and simulation of the driftless forward martingale
//! `X_t = x0 + ∫ σ_r(X_{·∧r}) dB_r` on the canonical space.
//!
//! Paths are stored row-major: `x[(path * n_nodes + node) * n + k]`.
//! Every path owns an independent ChaCha stream selected by its index, so an
//! ensemble is bit-identical for a given seed whatever the rayon pool size.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Partition `0 = t_0 < … < t_N = T` of the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    /// Builds a grid from explicit nodes. The first node must be 0 and the
    /// sequence strictly increasing.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Config("a time grid needs at least two nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::Config("the first grid node must be 0".into()));
        }
        if nodes.iter().any(|t| !t.is_finite()) || nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("grid nodes must be finite and strictly increasing".into()));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Time of node `i`.
    #[inline]
    pub fn t(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// Number of intervals `N`.
    #[inline]
    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Horizon `T = t_N`.
    #[inline]
    pub fn horizon(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Step size `Δ_i = t_{i+1} - t_i`.
    #[inline]
    pub fn dt(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }
}

/// Uniform grid with `N` steps on `[0, T]`.
pub fn build_grid(horizon: f64, n_steps: usize) -> Result<TimeGrid> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }
    if n_steps == 0 {
        return Err(Error::Config("number of steps must be at least 1".into()));
    }
    let step = horizon / n_steps as f64;
    let mut nodes: Vec<f64> = (0..n_steps).map(|i| i as f64 * step).collect();
    nodes.push(horizon);
    TimeGrid::from_nodes(nodes)
}

/// Volatility functional evaluated on the discrete path prefix.
pub trait Volatility: Sync {
    /// State dimension `n`.
    fn state_dim(&self) -> usize;
    /// Brownian dimension `m`.
    fn noise_dim(&self) -> usize;
    /// Writes `σ(t_i, X[0..=i])` as a row-major `n × m` matrix into `out`.
    /// `history` holds the `i + 1` visited states, `n` entries each.
    fn eval(&self, node: usize, t: f64, history: &[f64], out: &mut [f64]);
}

/// State-independent volatility matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantVolatility {
    pub n: usize,
    pub m: usize,
    /// Row-major `n × m` entries.
    pub matrix: Vec<f64>,
}

impl ConstantVolatility {
    /// Scalar volatility `σ` with `n = m = 1`.
    pub fn scalar(sigma: f64) -> Self {
        Self { n: 1, m: 1, matrix: vec![sigma] }
    }
}

impl Volatility for ConstantVolatility {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn noise_dim(&self) -> usize {
        self.m
    }
    fn eval(&self, _node: usize, _t: f64, _history: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.matrix);
    }
}

/// Volatility given by a closure, for path-dependent or time-dependent models.
pub struct FnVolatility<F> {
    pub n: usize,
    pub m: usize,
    pub f: F,
}

impl<F> Volatility for FnVolatility<F>
where
    F: Fn(usize, f64, &[f64], &mut [f64]) + Sync,
{
    fn state_dim(&self) -> usize {
        self.n
    }
    fn noise_dim(&self) -> usize {
        self.m
    }
    fn eval(&self, node: usize, t: f64, history: &[f64], out: &mut [f64]) {
        (self.f)(node, t, history, out)
    }
}

/// Simulated forward paths together with the increments that generated them.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    grid: TimeGrid,
    n_paths: usize,
    n: usize,
    m: usize,
    seed: Option<u64>,
    x: Vec<f64>,
    db: Vec<f64>,
    sigma: Vec<f64>,
}

impl PathEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }
    pub fn n_nodes(&self) -> usize {
        self.grid.n_steps() + 1
    }
    pub fn state_dim(&self) -> usize {
        self.n
    }
    pub fn noise_dim(&self) -> usize {
        self.m
    }
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// State `X[path][node]`.
    #[inline]
    pub fn x(&self, path: usize, node: usize) -> &[f64] {
        let o = (path * self.n_nodes() + node) * self.n;
        &self.x[o..o + self.n]
    }

    /// States `X[path][0..=node]`, flattened.
    #[inline]
    pub fn history(&self, path: usize, node: usize) -> &[f64] {
        let o = path * self.n_nodes() * self.n;
        &self.x[o..o + (node + 1) * self.n]
    }

    /// Increment `ΔB[path][interval]`.
    #[inline]
    pub fn db(&self, path: usize, interval: usize) -> &[f64] {
        let o = (path * self.grid.n_steps() + interval) * self.m;
        &self.db[o..o + self.m]
    }

    /// Row-major `σ[path][interval]`.
    #[inline]
    pub fn sigma(&self, path: usize, interval: usize) -> &[f64] {
        let nm = self.n * self.m;
        let o = (path * self.grid.n_steps() + interval) * nm;
        &self.sigma[o..o + nm]
    }

    /// Handle on one path.
    #[inline]
    pub fn path(&self, path: usize) -> PathRef<'_> {
        PathRef { ens: self, path }
    }

    /// Evaluation point at `(node, path)`.
    #[inline]
    pub fn point(&self, node: usize, path: usize) -> Point<'_> {
        Point {
            node,
            t: self.grid.t(node),
            path,
            x: self.x(path, node),
            ens: self,
        }
    }

    /// Builds an ensemble from prescribed increments `db[path][interval][k]`.
    /// Used for the exhaustive two-point trees and for replaying stored noise.
    pub fn from_increments(
        sigma_spec: &dyn Volatility,
        x0: &[f64],
        grid: &TimeGrid,
        n_paths: usize,
        db: Vec<f64>,
    ) -> Result<Self> {
        let (n, m) = (sigma_spec.state_dim(), sigma_spec.noise_dim());
        check_dims(x0, n, n_paths)?;
        let steps = grid.n_steps();
        if db.len() != n_paths * steps * m {
            return Err(Error::Config(format!(
                "increment array has length {}, expected {}",
                db.len(),
                n_paths * steps * m
            )));
        }
        let per_path: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths)
            .into_par_iter()
            .map(|p| {
                let inc = &db[p * steps * m..(p + 1) * steps * m];
                integrate_path(sigma_spec, x0, grid, p, inc)
            })
            .collect::<Result<_>>()?;
        Ok(Self::assemble(grid, n, m, None, db, per_path))
    }

    /// All `2^N` paths of the scalar two-point tree with increments `±√Δ_i`.
    /// Path `p` takes the `+` branch at interval `i` when bit `N - 1 - i` of `p`
    /// is set, so paths sharing a prefix are contiguous.
    pub fn binary_tree(sigma_spec: &dyn Volatility, x0: &[f64], grid: &TimeGrid) -> Result<Self> {
        if sigma_spec.noise_dim() != 1 {
            return Err(Error::Config("binary trees need a scalar Brownian motion".into()));
        }
        let steps = grid.n_steps();
        if steps > 20 {
            return Err(Error::Config("binary tree limited to 20 steps".into()));
        }
        let n_paths = 1usize << steps;
        let mut db = Vec::with_capacity(n_paths * steps);
        for p in 0..n_paths {
            for i in 0..steps {
                let up = (p >> (steps - 1 - i)) & 1 == 1;
                let h = grid.dt(i).sqrt();
                db.push(if up { h } else { -h });
            }
        }
        Self::from_increments(sigma_spec, x0, grid, n_paths, db)
    }

    fn assemble(
        grid: &TimeGrid,
        n: usize,
        m: usize,
        seed: Option<u64>,
        db: Vec<f64>,
        per_path: Vec<(Vec<f64>, Vec<f64>)>,
    ) -> Self {
        let n_paths = per_path.len();
        let mut x = Vec::with_capacity(n_paths * (grid.n_steps() + 1) * n);
        let mut sigma = Vec::with_capacity(n_paths * grid.n_steps() * n * m);
        for (xs, ss) in per_path {
            x.extend_from_slice(&xs);
            sigma.extend_from_slice(&ss);
        }
        Self {
            grid: grid.clone(),
            n_paths,
            n,
            m,
            seed,
            x,
            db,
            sigma,
        }
    }
}

fn check_dims(x0: &[f64], n: usize, n_paths: usize) -> Result<()> {
    if x0.len() != n {
        return Err(Error::Config(format!(
            "initial state has dimension {}, volatility expects {n}",
            x0.len()
        )));
    }
    if n_paths == 0 {
        return Err(Error::Config("n_paths must be at least 1".into()));
    }
    Ok(())
}

/// Euler recursion along one path given its increments.
fn integrate_path(
    sigma_spec: &dyn Volatility,
    x0: &[f64],
    grid: &TimeGrid,
    path: usize,
    inc: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, m) = (sigma_spec.state_dim(), sigma_spec.noise_dim());
    let steps = grid.n_steps();
    let mut xs = Vec::with_capacity((steps + 1) * n);
    xs.extend_from_slice(x0);
    let mut ss = vec![0.0; steps * n * m];
    for i in 0..steps {
        let s = &mut ss[i * n * m..(i + 1) * n * m];
        sigma_spec.eval(i, grid.t(i), &xs[..(i + 1) * n], s);
        if let Some(bad) = s.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("volatility evaluated to {bad}"),
                node: i,
                path,
            });
        }
        let db = &inc[i * m..(i + 1) * m];
        for k in 0..n {
            let mut v = xs[i * n + k];
            for j in 0..m {
                v += s[k * m + j] * db[j];
            }
            xs.push(v);
        }
    }
    Ok((xs, ss))
}

/// Simulates `n_paths` Euler paths of the forward martingale.
///
/// Path `p` draws its increments from the ChaCha8 stream `p` of the generator
/// seeded with `seed`.
pub fn simulate_forward(
    sigma_spec: &dyn Volatility,
    x0: &[f64],
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    let (n, m) = (sigma_spec.state_dim(), sigma_spec.noise_dim());
    check_dims(x0, n, n_paths)?;
    let steps = grid.n_steps();
    // Per path: Brownian increments, then (states, volatility samples).
    type PathDraw = (Vec<f64>, (Vec<f64>, Vec<f64>));
    let per_path: Vec<PathDraw> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            let inc: Vec<f64> = (0..steps)
                .flat_map(|i| {
                    let h = grid.dt(i).sqrt();
                    (0..m)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            z * h
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
            let states = integrate_path(sigma_spec, x0, grid, p, &inc)?;
            Ok((inc, states))
        })
        .collect::<Result<_>>()?;
    let mut db = Vec::with_capacity(n_paths * steps * m);
    let mut states = Vec::with_capacity(n_paths);
    for (inc, st) in per_path {
        db.extend_from_slice(&inc);
        states.push(st);
    }
    Ok(PathEnsemble::assemble(grid, n, m, Some(seed), db, states))
}

/// Borrowed view of a single path.
#[derive(Clone, Copy, Debug)]
pub struct PathRef<'a> {
    pub ens: &'a PathEnsemble,
    pub path: usize,
}

impl<'a> PathRef<'a> {
    #[inline]
    pub fn x(&self, node: usize) -> &'a [f64] {
        self.ens.x(self.path, node)
    }

    /// Terminal state `X_T`.
    #[inline]
    pub fn terminal(&self) -> &'a [f64] {
        self.ens.x(self.path, self.ens.grid.n_steps())
    }

    /// The full discrete path.
    #[inline]
    pub fn states(&self) -> &'a [f64] {
        self.ens.history(self.path, self.ens.grid.n_steps())
    }
}

/// Argument bundle passed to drivers: grid node, time, path index and state.
#[derive(Clone, Copy, Debug)]
pub struct Point<'a> {
    pub node: usize,
    pub t: f64,
    pub path: usize,
    pub x: &'a [f64],
    pub ens: &'a PathEnsemble,
}

impl<'a> Point<'a> {
    /// States visited up to and including this node.
    #[inline]
    pub fn history(&self) -> &'a [f64] {
        self.ens.history(self.path, self.node)
    }

    /// Volatility on the interval starting at this node (the last one at `T`).
    #[inline]
    pub fn sigma(&self) -> &'a [f64] {
        let i = self.node.min(self.ens.grid.n_steps() - 1);
        self.ens.sigma(self.path, i)
    }

    pub fn horizon(&self) -> f64 {
        self.ens.grid.horizon()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_nodes() {
        let g = build_grid(1.0, 4).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = build_grid(2.0, 1).unwrap();
        assert_eq!(g.nodes(), &[0.0, 2.0]);
        assert!(build_grid(1.0, 0).is_err());
        assert!(build_grid(0.0, 3).is_err());
        assert!(build_grid(-1.0, 3).is_err());
    }

    #[test]
    fn zero_volatility_freezes_state() {
        let g = build_grid(1.0, 5).unwrap();
        let e = simulate_forward(&ConstantVolatility::scalar(0.0), &[0.7], &g, 50, 3).unwrap();
        for p in 0..50 {
            for i in 0..=5 {
                assert_eq!(e.x(p, i), &[0.7]);
            }
        }
    }

    #[test]
    fn tree_enumerates_prefix_blocks() {
        let g = build_grid(1.0, 3).unwrap();
        let e = PathEnsemble::binary_tree(&ConstantVolatility::scalar(1.0), &[0.0], &g).unwrap();
        assert_eq!(e.n_paths(), 8);
        let h = e.grid().dt(0).sqrt();
        assert_eq!(e.db(0, 0), &[-h]);
        assert_eq!(e.db(7, 2), &[e.grid().dt(2).sqrt()]);
        assert_eq!(e.db(4, 0), &[h]);
        assert_eq!(e.db(3, 0), &[-h]);
    }

    #[test]
    fn non_finite_volatility_is_located() {
        let g = build_grid(1.0, 4).unwrap();
        let vol = FnVolatility {
            n: 1,
            m: 1,
            f: |node: usize, _t: f64, _h: &[f64], out: &mut [f64]| {
                out[0] = if node == 2 { f64::NAN } else { 1.0 };
            },
        };
        match simulate_forward(&vol, &[0.0], &g, 4, 1) {
            Err(Error::NonFinite { node, .. }) => assert_eq!(node, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
