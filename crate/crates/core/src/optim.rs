//! Adam and parameter initialization shared by the GCN and MLP trainers.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Real;

/// Glorot-uniform matrix: entries uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Real>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || T::of(rng.random_range(-limit..limit)))
}

/// Adam with bias correction over a fixed list of matrix-shaped parameters.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    step: i32,
    m: Vec<Array2<T>>,
    v: Vec<Array2<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: f64, shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = shapes
            .into_iter()
            .map(|s| (Array2::zeros(s), Array2::zeros(s)))
            .unzip();
        Self {
            lr: T::of(lr),
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            step: 0,
            m,
            v,
        }
    }

    /// Applies one update; `params` and `grads` are in the order given to `new`.
    pub fn step(&mut self, params: &mut [&mut Array2<T>], grads: &[Array2<T>]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.step);
        let c2 = one - self.beta2.powi(self.step);
        for (k, p) in params.iter_mut().enumerate() {
            let g = &grads[k];
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            ndarray::Zip::from(&mut **p)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = self.beta1 * *m + (one - self.beta1) * g;
                    *v = self.beta2 * *v + (one - self.beta2) * g * g;
                    let mh = *m / c1;
                    let vh = *v / c2;
                    *p = *p - self.lr * mh / (vh.sqrt() + self.eps);
                });
        }
    }
}

/// Row-wise softmax cross-entropy averaged over `rows`, with the gradient with
/// respect to the logits (zero on rows not in `rows`).
pub fn softmax_cross_entropy<T: Real>(logits: &Array2<T>, rows: &[usize], labels: &[usize]) -> (T, Array2<T>) {
    let mut grad = Array2::zeros(logits.raw_dim());
    let scale = T::one() / T::of_usize(rows.len());
    let mut loss = T::zero();
    for &i in rows {
        let row = logits.row(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss = loss + (log_z - row[labels[i]]);
        let mut g = grad.row_mut(i);
        for (k, &v) in row.iter().enumerate() {
            g[k] = (v - log_z).exp() * scale;
        }
        g[labels[i]] = g[labels[i]] - scale;
    }
    (loss * scale, grad)
}
