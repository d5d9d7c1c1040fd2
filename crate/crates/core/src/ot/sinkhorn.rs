use ndarray::{Array1, ArrayView2};

use super::cost_matrix;
use crate::error::Result;
use crate::scalar::Real;

/// Outcome of an entropic solve. `cost` is the transport cost of the entropic
/// plan (no entropy term, no debiasing), which overestimates W1 by at most
/// `epsilon * ln(a * b)` once converged.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornResult<T> {
    pub cost: T,
    pub converged: bool,
    pub iterations: usize,
    /// Sup-norm violation of the source marginal.
    pub marginal_error: T,
}

fn log_sum_exp<T: Real>(values: impl Iterator<Item = T> + Clone) -> T {
    let max = values.clone().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<T>().ln()
}

/// Log-domain Sinkhorn between uniform marginals for a given cost matrix.
/// Returns the iterate with the smallest marginal violation if `max_iters` is hit.
pub fn sinkhorn_uniform<T: Real>(cost: ArrayView2<T>, epsilon: T, max_iters: usize, tol: T) -> SinkhornResult<T> {
    let (na, nb) = cost.dim();
    let log_a = -T::of_usize(na).ln();
    let log_b = -T::of_usize(nb).ln();
    let mut f = Array1::<T>::zeros(na);
    let mut g = Array1::<T>::zeros(nb);
    let plan_stats = |f: &Array1<T>, g: &Array1<T>| {
        let mut err = T::zero();
        let mut c = T::zero();
        for i in 0..na {
            let mut row = T::zero();
            for j in 0..nb {
                let p = ((f[i] + g[j] - cost[[i, j]]) / epsilon).exp();
                row = row + p;
                c = c + p * cost[[i, j]];
            }
            err = err.max((row - log_a.exp()).abs());
        }
        (c, err)
    };
    let mut best = SinkhornResult {
        cost: T::infinity(),
        converged: false,
        iterations: 0,
        marginal_error: T::infinity(),
    };
    for it in 1..=max_iters {
        for i in 0..na {
            let lse = log_sum_exp((0..nb).map(|j| (g[j] - cost[[i, j]]) / epsilon));
            f[i] = epsilon * (log_a - lse);
        }
        for j in 0..nb {
            let lse = log_sum_exp((0..na).map(|i| (f[i] - cost[[i, j]]) / epsilon));
            g[j] = epsilon * (log_b - lse);
        }
        if it % 10 == 0 || it == max_iters {
            let (c, err) = plan_stats(&f, &g);
            if err < best.marginal_error {
                best = SinkhornResult {
                    cost: c,
                    converged: err <= tol,
                    iterations: it,
                    marginal_error: err,
                };
            }
            if err <= tol {
                return best;
            }
        }
    }
    best
}

/// Entropic approximation of W1 between the rows of `a` and `b`.
pub fn wasserstein1_sinkhorn<T: Real>(
    a: ArrayView2<T>,
    b: ArrayView2<T>,
    epsilon: T,
    max_iters: usize,
    tol: T,
) -> Result<SinkhornResult<T>> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(crate::error::Error::InvalidArgument("empty point set".into()));
    }
    if !(epsilon > T::zero()) {
        return Err(crate::error::Error::InvalidArgument("epsilon must be positive".into()));
    }
    let cost = cost_matrix(a, b)?;
    Ok(sinkhorn_uniform(cost.view(), epsilon, max_iters, tol))
}
