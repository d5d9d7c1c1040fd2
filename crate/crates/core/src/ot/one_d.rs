use crate::error::{Error, Result};
use crate::scalar::Real;

/// Exact W1 between two uniform empirical measures on the real line:
/// the integral of `|F_a^{-1}(t) - F_b^{-1}(t)|` over `t` in `[0, 1]`.
///
/// Breakpoints `k/a` and `l/b` are merged on the integer grid of `1/(a*b)`, so
/// segment lengths are exact.
pub fn wasserstein1_1d<T: Real>(values_a: &[T], values_b: &[T]) -> Result<T> {
    if values_a.is_empty() || values_b.is_empty() {
        return Err(Error::InvalidArgument("empty point set".into()));
    }
    if values_a.iter().chain(values_b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value".into()));
    }
    let mut xa = values_a.to_vec();
    let mut xb = values_b.to_vec();
    xa.sort_by(|p, q| p.partial_cmp(q).unwrap());
    xb.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (na, nb) = (xa.len() as u128, xb.len() as u128);
    let total = na * nb;
    let (mut i, mut j) = (0usize, 0usize);
    let mut pos = 0u128;
    let mut acc = T::zero();
    while pos < total {
        let next_a = (i as u128 + 1) * nb;
        let next_b = (j as u128 + 1) * na;
        let next = next_a.min(next_b);
        let len = T::of((next - pos) as f64);
        acc = acc + len * (xa[i] - xb[j]).abs();
        pos = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    Ok(acc / T::of(total as f64))
}
