//! Exact k-nearest-neighbour graphs and the matrices derived from them.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dataio::DataMatrix;
use crate::error::{Error, Result};
use crate::kernels::CenteringMatrix;
use crate::linalg::{symmetrize, SpdFactor};

/// Undirected binary graph stored as a sorted edge list (`i < j`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    n: usize,
    k: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl NeighborGraph {
    /// Builds a graph from arbitrary undirected edges. Self-loops are
    /// rejected, duplicates and orientation are normalised away.
    pub fn from_edges(n: usize, k: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidArgument(format!("edge ({a},{b}) out of range for n={n}")));
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop at node {a}")));
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        let edges = neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect();
        Ok(Self { n, k, edges, neighbors })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Neighbour count the graph was built with (0 for hand-built graphs).
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    /// Number of ordered adjacent pairs, `Σ_{i≠j} A_ij`.
    pub fn ordered_edge_count(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    /// Component index per node, numbered in order of smallest member.
    pub fn component_labels(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.n];
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..self.n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &w in &self.neighbors[v] {
                    if label[w] == usize::MAX {
                        label[w] = next;
                        stack.push(w);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn component_count(&self) -> usize {
        self.component_labels().into_iter().max().map_or(0, |m| m + 1)
    }

    /// `i j` per line, `i < j`, sorted.
    pub fn edge_list_text(&self) -> String {
        let mut s = String::with_capacity(self.edges.len() * 8);
        for (idx, (i, j)) in self.edges.iter().enumerate() {
            if idx > 0 {
                s.push('\n');
            }
            let _ = write!(s, "{i} {j}");
        }
        s
    }
}

/// Exact Euclidean k-NN (self excluded, ties to the smaller index),
/// symmetrised by union.
pub fn knn_graph(data: &DataMatrix, k: usize) -> Result<NeighborGraph> {
    let n = data.n();
    if k < 1 || k >= n {
        return Err(Error::InvalidArgument(format!("k must satisfy 1 <= k < n, got k={k}, n={n}")));
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| data.row(i)).collect();
    let directed: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(&rows[i], &rows[j]), j))
                .collect();
            let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            cand.select_nth_unstable_by(k - 1, by_dist);
            cand.truncate(k);
            cand.into_iter().map(|(_, j)| j).collect()
        })
        .collect();
    let edges = directed
        .iter()
        .enumerate()
        .flat_map(|(i, nn)| nn.iter().map(move |&j| (i, j)));
    NeighborGraph::from_edges(n, k, edges)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LaplacianVariant {
    Raw,
    Centered,
    /// Raw or centred Laplacian multiplied by the given factor.
    Scaled(f64),
}

/// Symmetric `n × n` Laplacian-like matrix with a record of how it was made.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLaplacian {
    matrix: DMatrix<f64>,
    variant: LaplacianVariant,
}

impl GraphLaplacian {
    /// Wraps an explicit matrix. It must be square and symmetric to 1e-12.
    pub fn from_matrix(matrix: DMatrix<f64>, variant: LaplacianVariant) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "Laplacian must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-12 * matrix.amax().max(1.0) {
            return Err(Error::InvalidArgument(format!("Laplacian is not symmetric (max asymmetry {asym:e})")));
        }
        Ok(Self { matrix, variant })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn variant(&self) -> LaplacianVariant {
        self.variant
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: &self.matrix * factor,
            variant: LaplacianVariant::Scaled(factor),
        }
    }
}

/// `L = D − A`.
pub fn laplacian(g: &NeighborGraph) -> GraphLaplacian {
    let mut l = -g.adjacency();
    for (i, d) in g.degrees().into_iter().enumerate() {
        l[(i, i)] = d as f64;
    }
    GraphLaplacian {
        matrix: l,
        variant: LaplacianVariant::Raw,
    }
}

/// `H·L·H`.
pub fn center_laplacian(l: &GraphLaplacian) -> GraphLaplacian {
    let centered = CenteringMatrix::new(l.n()).apply(&l.matrix);
    GraphLaplacian {
        matrix: symmetrize(&centered),
        variant: LaplacianVariant::Centered,
    }
}

pub const DEFAULT_COVARIANCE_EPS: f64 = 1e-3;

/// `(L + eps·I)⁻¹` through a Cholesky factorisation.
pub fn covariance_estimate(l: &GraphLaplacian, eps: f64) -> Result<DMatrix<f64>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be > 0, got {eps}")));
    }
    let n = l.n();
    let shifted = &l.matrix + DMatrix::identity(n, n) * eps;
    let factor = SpdFactor::new(&shifted, &format!("L + {eps:e}·I"))?;
    Ok(factor.inverse())
}
