//! Graphs, the normalized aggregation operator, splits, loaders and the SBM generator.

mod loader;
mod sbm;
mod sparse;
mod split;

pub use loader::{load_graph, read_matrix_csv, write_graph, Manifest};
pub use sbm::{generate_sbm, SbmSpec};
pub use sparse::{build_normalized_adjacency, SparseMatrix};
pub use split::{derive_seed, enumerate_splits, sample_permutations, sample_split, shuffle_partition, Split};

use std::collections::BTreeSet;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Undirected node-classification graph.
///
/// Edges are stored once per unordered pair as `(u, v)` with `u < v`, sorted.
/// Self-loops are never stored; normalization adds them.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph<T> {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Array2<T>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl<T: Real> Graph<T> {
    /// Validates and builds a graph. Edge endpoints may be given in either order;
    /// the same unordered pair appearing twice is an error.
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Array2<T>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::InvalidGraph("graph has no nodes".into()));
        }
        if num_classes == 0 {
            return Err(Error::InvalidGraph("num_classes must be positive".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) has an endpoint outside [0, {num_nodes})"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop on node {a}")));
            }
            let key = (a.min(b), a.max(b));
            if !set.insert(key) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    key.0, key.1
                )));
            }
        }
        if features.nrows() != num_nodes {
            return Err(Error::Dimension(format!(
                "features have {} rows, expected {num_nodes}",
                features.nrows()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGraph("features contain non-finite values".into()));
        }
        if labels.len() != num_nodes {
            return Err(Error::Dimension(format!(
                "{} labels for {num_nodes} nodes",
                labels.len()
            )));
        }
        let mut counts = vec![0usize; num_classes];
        for (i, &y) in labels.iter().enumerate() {
            if y >= num_classes {
                return Err(Error::InvalidGraph(format!(
                    "label out of range: node {i} has label {y} with {num_classes} classes"
                )));
            }
            counts[y] += 1;
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::InvalidGraph(format!("class {c} has no nodes")));
        }
        Ok(Self {
            num_nodes,
            edges: set.into_iter().collect(),
            features,
            labels,
            num_classes,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Array2<T> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Number of neighbours of every node (self-loop not counted).
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.num_nodes];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Relabels node ids: node `i` of `self` becomes node `perm[i]` of the result.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes;
        if perm.len() != n {
            return Err(Error::Dimension(format!("permutation of length {} for {n} nodes", perm.len())));
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
        }
        let mut features = Array2::zeros(self.features.raw_dim());
        let mut labels = vec![0; n];
        for i in 0..n {
            features.row_mut(perm[i]).assign(&self.features.row(i));
            labels[perm[i]] = self.labels[i];
        }
        let edges = self.edges.iter().map(|&(a, b)| (perm[a], perm[b]));
        Self::new(n, edges, features, labels, self.num_classes)
    }
}

/// Degree statistic `sqrt(deg(i) + 1)`: the square root of the self-loop-augmented degree.
pub fn degree_statistic<T: Real>(g: &Graph<T>) -> Array1<T> {
    g.degrees()
        .into_iter()
        .map(|d| T::of_usize(d + 1).sqrt())
        .collect()
}
