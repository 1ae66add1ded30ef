//! Undirected graph storage in compressed sparse row form, the symmetric
//! GCN propagation operator, and hop-distance queries.

use std::collections::VecDeque;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{HighwayError, Result};

/// Undirected, unweighted graph. Each edge is stored in both directions, rows
/// are sorted and free of duplicates, and self-loops are never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseGraph {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparseGraph {
    /// A graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        SparseGraph {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
        }
    }

    /// Builds a graph from an edge list. Direction is ignored, duplicates
    /// collapse and self-pairs are dropped.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, j) in edges {
            check_index(i, n)?;
            check_index(j, n)?;
            if i == j {
                continue;
            }
            rows[i].push(j);
            rows[j].push(i);
        }
        Ok(Self::from_rows(rows))
    }

    fn from_rows(mut rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        SparseGraph {
            n,
            row_ptr,
            col_idx,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.col_idx.len() / 2
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Undirected edges as `(i, j)` with `i < j`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .copied()
                .filter(move |&j| i < j)
                .map(move |j| (i, j))
        })
    }

    /// Returns `self ∨ additions`: every original edge plus each addition,
    /// inserted symmetrically. Self-pairs and existing edges are ignored.
    pub fn add_edges(&self, additions: &[(usize, usize)]) -> Result<SparseGraph> {
        for &(i, j) in additions {
            check_index(i, self.n)?;
            check_index(j, self.n)?;
        }
        let mut rows: Vec<Vec<usize>> = (0..self.n).map(|i| self.neighbors(i).to_vec()).collect();
        for &(i, j) in additions {
            if i != j {
                rows[i].push(j);
                rows[j].push(i);
            }
        }
        Ok(Self::from_rows(rows))
    }

    /// Builds `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree of `A + I`.
    pub fn normalize(&self) -> NormalizedAdjacency {
        let inv_sqrt: Vec<f64> = (0..self.n)
            .map(|i| 1.0 / ((self.degree(i) + 1) as f64).sqrt())
            .collect();
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        let mut col_idx = Vec::with_capacity(self.col_idx.len() + self.n);
        let mut values = Vec::with_capacity(self.col_idx.len() + self.n);
        row_ptr.push(0);
        for i in 0..self.n {
            let mut self_loop_done = false;
            for &j in self.neighbors(i) {
                if !self_loop_done && j > i {
                    col_idx.push(i);
                    values.push(inv_sqrt[i] * inv_sqrt[i]);
                    self_loop_done = true;
                }
                col_idx.push(j);
                values.push(inv_sqrt[i] * inv_sqrt[j]);
            }
            if !self_loop_done {
                col_idx.push(i);
                values.push(inv_sqrt[i] * inv_sqrt[i]);
            }
            row_ptr.push(col_idx.len());
        }
        NormalizedAdjacency {
            n: self.n,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Single-source BFS hop counts.
    pub fn bfs_from(&self, source: usize) -> Vec<Hops> {
        self.multi_source_bfs(std::iter::once(source))
    }

    fn multi_source_bfs(&self, sources: impl IntoIterator<Item = usize>) -> Vec<Hops> {
        let mut dist = vec![Hops::Unreachable; self.n];
        let mut queue = VecDeque::new();
        for s in sources {
            if dist[s] == Hops::Unreachable {
                dist[s] = Hops::Finite(0);
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            let next = match dist[u] {
                Hops::Finite(d) => Hops::Finite(d + 1),
                Hops::Unreachable => unreachable!("queued nodes always have a distance"),
            };
            for &v in self.neighbors(u) {
                if dist[v] == Hops::Unreachable {
                    dist[v] = next;
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

fn check_index(index: usize, n: usize) -> Result<()> {
    if index >= n {
        Err(HighwayError::IndexOutOfRange { index, n })
    } else {
        Ok(())
    }
}

/// `A + I` with symmetric degree normalization, same CSR layout conventions
/// as [`SparseGraph`] but with the diagonal present.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entry `(i, j)`, zero outside the sparsity pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[[i, self.col_idx[k]]] = self.values[k];
            }
        }
        out
    }

    /// Sparse-dense product `Â · m`. The operator is symmetric, so this also
    /// serves as `Âᵀ · m` in the backward pass.
    pub fn matmul(&self, m: &ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(m.len_of(Axis(0)), self.n, "row count must match node count");
        let cols = m.ncols();
        let mut out = Array2::zeros((self.n, cols));
        for (i, mut out_row) in out.axis_iter_mut(Axis(0)).enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let w = self.values[k];
                let src = m.row(self.col_idx[k]);
                out_row.scaled_add(w, &src);
            }
        }
        out
    }
}

/// Hop count between nodes; `Unreachable` orders after every finite count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hops {
    Finite(u32),
    Unreachable,
}

impl Hops {
    pub fn finite(self) -> Option<u32> {
        match self {
            Hops::Finite(d) => Some(d),
            Hops::Unreachable => None,
        }
    }
}

/// Per node, the hop count to the nearest training node of the same gold
/// category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopDistanceMap {
    distances: Vec<Hops>,
}

impl HopDistanceMap {
    pub fn get(&self, node: usize) -> Hops {
        self.distances[node]
    }

    pub fn as_slice(&self) -> &[Hops] {
        &self.distances
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }
}

/// Multi-source BFS per category, seeded from that category's training nodes.
pub fn hop_distances(g: &SparseGraph, labels: &[usize], train: &[usize]) -> Result<HopDistanceMap> {
    if train.is_empty() {
        return Err(HighwayError::EmptySet);
    }
    if labels.len() != g.n() {
        return Err(HighwayError::Shape(format!(
            "{} labels for {} nodes",
            labels.len(),
            g.n()
        )));
    }
    for &t in train {
        check_index(t, g.n())?;
    }
    let num_classes = labels.iter().copied().max().map_or(0, |c| c + 1);
    let mut distances = vec![Hops::Unreachable; g.n()];
    for class in 0..num_classes {
        let sources = train.iter().copied().filter(|&t| labels[t] == class);
        let dist = g.multi_source_bfs(sources);
        for (node, d) in dist.into_iter().enumerate() {
            if labels[node] == class {
                distances[node] = d;
            }
        }
    }
    Ok(HopDistanceMap { distances })
}
