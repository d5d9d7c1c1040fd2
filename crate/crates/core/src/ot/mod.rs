//! Empirical 1-Wasserstein distances between uniform point clouds.

mod exact;
mod one_d;
mod sinkhorn;

pub use exact::{solve_uniform_transport, wasserstein1_exact, TransportPlan, DEFAULT_MAX_ARCS};
pub use one_d::wasserstein1_1d;
pub use sinkhorn::{sinkhorn_uniform, wasserstein1_sinkhorn, SinkhornResult};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Distances;
use crate::scalar::Real;

/// Which solver produced a Wasserstein value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OtMethod {
    Exact,
    Entropic,
}

/// Solver routing for the bound computations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtOptions {
    /// Exact solver refuses problems with more arcs than this unless `force_exact`.
    pub max_arcs: usize,
    pub force_exact: bool,
    /// Entropic regularization relative to the mean pairwise cost.
    pub sinkhorn_relative_epsilon: f64,
    pub sinkhorn_max_iters: usize,
    pub sinkhorn_tol: f64,
}

impl Default for OtOptions {
    fn default() -> Self {
        Self {
            max_arcs: DEFAULT_MAX_ARCS,
            force_exact: false,
            sinkhorn_relative_epsilon: 1e-2,
            sinkhorn_max_iters: 5000,
            sinkhorn_tol: 1e-9,
        }
    }
}

/// Cost matrix of pairwise Euclidean distances between two point sets (rows).
pub fn cost_matrix<T: Real>(a: ArrayView2<T>, b: ArrayView2<T>) -> Result<Array2<T>> {
    if a.ncols() != b.ncols() {
        return Err(Error::Dimension(format!(
            "point dimensions differ: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    Ok(Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| {
        crate::linalg::euclidean(a.row(i), b.row(j))
    }))
}

/// W1 between the embedding rows indexed by `a` and `b`, using cached distances.
/// Routes to the entropic solver when the exact one would exceed the arc limit.
pub fn wasserstein_between<T: Real>(
    dist: &Distances<T>,
    a: &[usize],
    b: &[usize],
    opts: &OtOptions,
) -> Result<(T, OtMethod)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("empty point set".into()));
    }
    let cost = Array2::from_shape_fn((a.len(), b.len()), |(i, j)| dist.get(a[i], b[j]));
    let arcs = a.len().saturating_mul(b.len());
    if arcs <= opts.max_arcs || opts.force_exact {
        let plan = solve_uniform_transport(cost.view(), usize::MAX)?;
        Ok((plan.cost, OtMethod::Exact))
    } else {
        let mean = cost.iter().copied().sum::<T>() / T::of_usize(arcs);
        let eps = (mean * T::of(opts.sinkhorn_relative_epsilon)).max(T::of(1e-12));
        let res = sinkhorn_uniform(cost.view(), eps, opts.sinkhorn_max_iters, T::of(opts.sinkhorn_tol));
        if !res.converged {
            log::warn!(
                "sinkhorn stopped after {} iterations with marginal error {}",
                res.iterations,
                res.marginal_error
            );
        }
        Ok((res.cost, OtMethod::Entropic))
    }
}
