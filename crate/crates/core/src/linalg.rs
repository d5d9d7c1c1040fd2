//! Small dense helpers on top of ndarray.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::scalar::Real;

#[inline]
pub fn euclidean<T: Real>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (&x, &y)| {
            let d = x - y;
            acc + d * d
        })
        .sqrt()
}

pub fn frobenius<T: Real>(m: ArrayView2<T>) -> T {
    m.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
}

pub fn relu_inplace<T: Real>(m: &mut Array2<T>) {
    m.mapv_inplace(|v| v.max(T::zero()));
}

/// Largest singular value of `w` by power iteration on `WᵀW`.
///
/// Stops when the relative change of the estimate drops below `tol` or after
/// `iters` iterations. A zero matrix gives 0.
pub fn spectral_norm<T: Real>(w: ArrayView2<T>, iters: usize, tol: T) -> T {
    let n = w.ncols();
    if n == 0 || w.nrows() == 0 || w.iter().all(|v| *v == T::zero()) {
        return T::zero();
    }
    // deterministic start with distinct entries so it is not orthogonal to the top vector by accident
    let mut v = ndarray::Array1::from_shape_fn(n, |i| T::one() + T::of(i as f64 * 0.618_033_988_7).sin() * T::of(0.5));
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut sigma = T::zero();
    for _ in 0..iters.max(1) {
        let wv = w.dot(&v);
        let mut next = w.t().dot(&wv);
        let nn = next.dot(&next).sqrt();
        if nn == T::zero() {
            return T::zero();
        }
        next /= nn;
        let wn = w.dot(&next);
        let est = wn.dot(&wn).sqrt();
        let converged = (est - sigma).abs() <= tol * est;
        sigma = est;
        v = next;
        if converged {
            break;
        }
    }
    sigma
}

/// Pairwise Euclidean distances between embedding rows, either precomputed
/// (small N) or computed on demand.
pub enum Distances<'a, T> {
    Dense(Array2<T>),
    OnDemand(ArrayView2<'a, T>),
}

/// Above this many nodes the full distance table is not materialized.
pub const DENSE_DISTANCE_LIMIT: usize = 6000;

impl<'a, T: Real> Distances<'a, T> {
    pub fn new(z: ArrayView2<'a, T>) -> Self {
        let n = z.nrows();
        if n > DENSE_DISTANCE_LIMIT {
            return Distances::OnDemand(z);
        }
        let mut d = Array2::zeros((n, n));
        for i in 0..n {
            let zi = z.row(i);
            for j in i + 1..n {
                let v = euclidean(zi, z.row(j));
                d[[i, j]] = v;
                d[[j, i]] = v;
            }
        }
        Distances::Dense(d)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        match self {
            Distances::Dense(d) => d[[i, j]],
            Distances::OnDemand(z) => euclidean(z.row(i), z.row(j)),
        }
    }
}
