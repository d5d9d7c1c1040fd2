use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

use super::Graph;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Square matrix in compressed-row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    dim: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<T>,
    symmetric: bool,
}

impl<T: Real> SparseMatrix<T> {
    /// Builds from per-row `(column, value)` lists. Columns within a row must be
    /// strictly increasing. `symmetric` is verified, not trusted.
    pub fn from_rows(rows: Vec<Vec<(usize, T)>>, symmetric: bool) -> Result<Self> {
        let dim = rows.len();
        let mut row_offsets = Vec::with_capacity(dim + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            let mut prev = None;
            for (c, v) in row {
                if c >= dim {
                    return Err(Error::Dimension(format!("column {c} out of bounds in row {i}")));
                }
                if prev.is_some_and(|p| p >= c) {
                    return Err(Error::InvalidArgument(format!("row {i} columns not strictly increasing")));
                }
                prev = Some(c);
                col_indices.push(c);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        let m = Self {
            dim,
            row_offsets,
            col_indices,
            values,
            symmetric: false,
        };
        if symmetric && !m.is_symmetric() {
            return Err(Error::Asymmetric);
        }
        Ok(Self { symmetric, ..m })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Iterates the stored `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.col_indices[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => T::zero(),
        }
    }

    /// Exact entrywise symmetry check.
    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    pub fn to_dense(&self) -> Array2<T> {
        let mut d = Array2::zeros((self.dim, self.dim));
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                d[[i, j]] = v;
            }
        }
        d
    }

    /// Sparse times dense. Each output row accumulates its terms in column order.
    pub fn mul_dense(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        if x.nrows() != self.dim {
            return Err(Error::Dimension(format!(
                "sparse {}x{} times dense {}x{}",
                self.dim,
                self.dim,
                x.nrows(),
                x.ncols()
            )));
        }
        let mut out = Array2::zeros((self.dim, x.ncols()));
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            for (j, v) in self.row(i) {
                row.scaled_add(v, &x.row(j));
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: ArrayView1<T>) -> Result<Array1<T>> {
        if x.len() != self.dim {
            return Err(Error::Dimension(format!(
                "sparse {}x{} times vector of length {}",
                self.dim,
                self.dim,
                x.len()
            )));
        }
        let mut out = Array1::zeros(self.dim);
        Zip::indexed(&mut out).for_each(|i, o| {
            *o = self.row(i).fold(T::zero(), |acc, (j, v)| acc + v * x[j]);
        });
        Ok(out)
    }
}

/// Symmetric normalized adjacency with self-loops, `D^{-1/2} (A + I) D^{-1/2}`
/// where `D` is the degree matrix of `A + I`.
pub fn build_normalized_adjacency<T: Real>(g: &Graph<T>) -> SparseMatrix<T> {
    let n = g.num_nodes();
    let mut nbrs: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for &(a, b) in g.edges() {
        nbrs[a].push(b);
        nbrs[b].push(a);
    }
    let inv_sqrt: Vec<T> = nbrs
        .iter()
        .map(|l| T::one() / T::of_usize(l.len()).sqrt())
        .collect();
    let rows = nbrs
        .into_iter()
        .enumerate()
        .map(|(i, mut l)| {
            l.sort_unstable();
            l.into_iter().map(|j| (j, inv_sqrt[i] * inv_sqrt[j])).collect()
        })
        .collect();
    // Entries are products of the same two factors in commuting order; symmetry is exact.
    SparseMatrix::from_rows(rows, true).expect("normalized adjacency is well formed")
}
