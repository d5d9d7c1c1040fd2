//! Order statistics and rank correlation.

use crate::scalar::Real;

/// Lower empirical quantile: the `ceil(q n)`-th smallest value (1-based), with
/// `q = 0` giving the minimum. `values` is reordered. Returns `None` when empty.
///
/// NaN sorts above every number, so it is only selected if `q` reaches it.
pub fn quantile_lower<T: Real>(values: &mut [T], q: f64) -> Option<T> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let k = quantile_rank(n, q);
    let (_, v, _) = values.select_nth_unstable_by(k - 1, total_cmp);
    Some(*v)
}

/// 1-based rank selected by [`quantile_lower`] among `n` values.
pub fn quantile_rank(n: usize, q: f64) -> usize {
    let q = q.clamp(0.0, 1.0);
    // absorb representation error such as 0.3 * 10 = 3.0000000000000004
    let k = (q * n as f64 - 1e-9).ceil();
    (k.max(1.0) as usize).min(n)
}

pub(crate) fn total_cmp<T: Real>(a: &T, b: &T) -> std::cmp::Ordering {
    a.as_f64().total_cmp(&b.as_f64())
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `None` when the
/// lengths differ, fewer than two points are given, any value is not finite,
/// or either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !v.is_finite()) {
        return None;
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
