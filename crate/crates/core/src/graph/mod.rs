//! Graph storage, interchange I/O, normalization, splits and the removal
//! primitives used by unlearning experiments.

mod adjacency;
mod io;
mod ops;
mod split;
mod synth;

pub use adjacency::{normalize_adjacency, NormAdj};
pub use io::{load_dataset, save_dataset, DatasetMeta};
pub use ops::{poison_labels, remove_edges, remove_nodes, Remap};
pub use split::{
    sample_edge_request, sample_unlearn_set, split_train_test, RequestKind, SplitSpec,
    UnlearnRequest,
};
pub use synth::{gen_sbm, SbmConfig};

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Undirected adjacency in compressed sparse row form. Each undirected edge
/// appears in both endpoint rows; neighbor lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csr {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl Csr {
    fn build(n: usize, edges: &[(usize, usize)]) -> Csr {
        let mut deg = vec![0usize; n];
        for &(u, v) in edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + deg[i];
        }
        let mut fill = row_ptr[..n].to_vec();
        let mut col_idx = vec![0usize; row_ptr[n]];
        for &(u, v) in edges {
            col_idx[fill[u]] = v;
            fill[u] += 1;
            col_idx[fill[v]] = u;
            fill[v] += 1;
        }
        for i in 0..n {
            col_idx[row_ptr[i]..row_ptr[i + 1]].sort_unstable();
        }
        Csr { row_ptr, col_idx }
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }
}

/// Immutable simple undirected graph with node features and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    name: String,
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
    edges: Vec<(usize, usize)>,
    csr: Csr,
}

impl Graph {
    /// Validates and builds a graph. Edges may be given in any orientation
    /// and order; they are stored as sorted `(min, max)` pairs. Self-loops and
    /// duplicates are rejected.
    pub fn new(
        name: impl Into<String>,
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
        edges: Vec<(usize, usize)>,
    ) -> Result<Graph> {
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::Shape(format!(
                "{} labels for {n} feature rows",
                labels.len()
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::InvalidRequest(format!(
                "node {i} has label {y} but num_classes is {num_classes}"
            )));
        }
        if !features.is_finite() {
            return Err(Error::InvalidRequest(
                "features contain non-finite values".into(),
            ));
        }
        let mut edges: Vec<(usize, usize)> = edges
            .into_iter()
            .map(|(u, v)| if u <= v { (u, v) } else { (v, u) })
            .collect();
        for &(u, v) in &edges {
            if v >= n {
                return Err(Error::Index(format!("edge ({u}, {v}) with only {n} nodes")));
            }
            if u == v {
                return Err(Error::InvalidRequest(format!("self-loop on node {u}")));
            }
        }
        edges.sort_unstable();
        if let Some(w) = edges.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidRequest(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        let csr = Csr::build(n, &edges);
        Ok(Graph {
            name: name.into(),
            features,
            labels,
            num_classes,
            edges,
            csr,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Sorted `(u, v)` pairs with `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn csr(&self) -> &Csr {
        &self.csr
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.csr.neighbors(i)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.csr.degree(i)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n() && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Nodes at hop distance `1..=radius` from `source`, in BFS order.
    pub fn within_hops(&self, source: usize, radius: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n()];
        let mut queue = VecDeque::from([source]);
        dist[source] = 0;
        let mut out = Vec::new();
        while let Some(u) = queue.pop_front() {
            if dist[u] == radius {
                continue;
            }
            for &v in self.neighbors(u) {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    out.push(v);
                    queue.push_back(v);
                }
            }
        }
        out
    }

    pub(crate) fn with_labels(&self, labels: Vec<usize>) -> Graph {
        Graph {
            labels,
            ..self.clone()
        }
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::from_edges;
    use super::*;

    #[test]
    fn rejects_self_loops_and_duplicates() {
        let f = Matrix::zeros(3, 1);
        assert!(Graph::new("x", f.clone(), vec![0; 3], 1, vec![(1, 1)]).is_err());
        assert!(Graph::new("x", f.clone(), vec![0; 3], 1, vec![(0, 1), (1, 0)]).is_err());
        assert!(Graph::new("x", f.clone(), vec![0; 3], 1, vec![(0, 3)]).is_err());
        assert!(Graph::new("x", f, vec![0, 0, 2], 2, vec![]).is_err());
    }

    #[test]
    fn empty_edge_set_has_flat_row_pointers() {
        let g = from_edges(3, &[]);
        assert_eq!(g.csr().row_ptr(), &[0, 0, 0, 0]);
        assert_eq!(g.num_edges(), 0);
    }

    #[test]
    fn csr_is_consistent_with_edges() {
        let g = from_edges(5, &[(3, 1), (0, 1), (1, 2), (4, 0)]);
        assert_eq!(g.edges(), &[(0, 1), (0, 4), (1, 2), (1, 3)]);
        assert_eq!(g.neighbors(1), &[0, 2, 3]);
        assert_eq!(g.degree(4), 1);
        assert!(g.has_edge(2, 1) && !g.has_edge(2, 3));
    }

    #[test]
    fn hop_neighborhoods() {
        // path 0-1-2-3-4
        let g = from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let mut h = g.within_hops(0, 2);
        h.sort();
        assert_eq!(h, vec![1, 2]);
        let mut h = g.within_hops(2, 1);
        h.sort();
        assert_eq!(h, vec![1, 3]);
        assert_eq!(g.within_hops(0, usize::MAX).len(), 4);
    }
}
