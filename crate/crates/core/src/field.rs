//! Dense storage for adapted processes sampled on the grid.

use serde::{Deserialize, Serialize};

/// Values `F[node][path] ∈ ℝ^dim`, stored contiguously node by node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessField {
    n_nodes: usize,
    n_paths: usize,
    dim: usize,
    data: Vec<f64>,
}

impl ProcessField {
    pub fn zeros(n_nodes: usize, n_paths: usize, dim: usize) -> Self {
        Self {
            n_nodes,
            n_paths,
            dim,
            data: vec![0.0; n_nodes * n_paths * dim],
        }
    }

    /// Field filled by `f(node, path, out)`.
    pub fn from_fn(
        n_nodes: usize,
        n_paths: usize,
        dim: usize,
        mut f: impl FnMut(usize, usize, &mut [f64]),
    ) -> Self {
        let mut out = Self::zeros(n_nodes, n_paths, dim);
        for i in 0..n_nodes {
            for p in 0..n_paths {
                f(i, p, out.get_mut(i, p));
            }
        }
        out
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, node: usize, path: usize) -> &[f64] {
        let o = (node * self.n_paths + path) * self.dim;
        &self.data[o..o + self.dim]
    }

    #[inline]
    pub fn get_mut(&mut self, node: usize, path: usize) -> &mut [f64] {
        let o = (node * self.n_paths + path) * self.dim;
        &mut self.data[o..o + self.dim]
    }

    /// All paths at one node, `n_paths × dim` row-major.
    #[inline]
    pub fn node(&self, node: usize) -> &[f64] {
        let w = self.n_paths * self.dim;
        &self.data[node * w..(node + 1) * w]
    }

    #[inline]
    pub fn node_mut(&mut self, node: usize) -> &mut [f64] {
        let w = self.n_paths * self.dim;
        &mut self.data[node * w..(node + 1) * w]
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Largest absolute entrywise difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.data.len(), other.data.len(), "field shapes differ");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
    }

    /// `self - other`, entrywise.
    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.data.len(), other.data.len(), "field shapes differ");
        Self {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
            ..*self
        }
    }

    /// Entrywise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
