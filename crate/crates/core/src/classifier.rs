//! MLP score classifier, margins, and the empirical losses the bounds compare.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Split;
use crate::linalg::relu_inplace;
use crate::optim::{glorot_uniform, softmax_cross_entropy, Adam};
use crate::scalar::Real;
use crate::stats::quantile_lower;

/// Affine layers with ReLU between them (none after the last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpClassifier<T> {
    pub weights: Vec<Array2<T>>,
    /// One `1 x out` row per layer.
    pub biases: Vec<Array2<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpTrainConfig {
    pub layers: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 64,
            epochs: 500,
            lr: 0.01,
            seed: 0,
        }
    }
}

impl<T: Real> MlpClassifier<T> {
    /// Glorot weights, zero biases.
    pub fn init(in_dim: usize, num_classes: usize, layers: usize, hidden: usize, seed: u64) -> Result<Self> {
        if ![1, 2, 4].contains(&layers) {
            return Err(Error::InvalidArgument(format!("classifier layers must be 1, 2 or 4, got {layers}")));
        }
        if hidden == 0 || in_dim == 0 || num_classes == 0 {
            return Err(Error::InvalidArgument("classifier dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for t in 0..layers {
            let fan_in = if t == 0 { in_dim } else { hidden };
            let fan_out = if t + 1 == layers { num_classes } else { hidden };
            weights.push(glorot_uniform(fan_in, fan_out, &mut rng));
            biases.push(Array2::zeros((1, fan_out)));
        }
        Ok(Self { weights, biases })
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn in_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.weights.last().map_or(0, |w| w.ncols())
    }

    /// Scores for every row of `z` (N x K).
    pub fn scores(&self, z: ArrayView2<T>) -> Result<Array2<T>> {
        if z.ncols() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "classifier expects {} features, embeddings have {}",
                self.in_dim(),
                z.ncols()
            )));
        }
        let mut h = z.to_owned();
        for (t, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = h.dot(w) + b;
            if t + 1 < self.layers() {
                relu_inplace(&mut h);
            }
        }
        Ok(h)
    }

    /// Multiplies the last layer by `lambda`, scaling every score by it.
    pub fn scaled(&self, lambda: T) -> Self {
        let mut out = self.clone();
        let last = out.layers() - 1;
        out.weights[last].mapv_inplace(|v| v * lambda);
        out.biases[last].mapv_inplace(|v| v * lambda);
        out
    }
}

/// Mean cross-entropy over `rows` and its gradients as `(loss, dW, db)`.
pub fn mlp_objective<T: Real>(
    clf: &MlpClassifier<T>,
    z: ArrayView2<T>,
    rows: &[usize],
    labels: &[usize],
) -> Result<(T, Vec<Array2<T>>, Vec<Array2<T>>)> {
    if z.ncols() != clf.in_dim() {
        return Err(Error::Dimension(format!("classifier expects {} features, got {}", clf.in_dim(), z.ncols())));
    }
    let layers = clf.layers();
    let mut inputs = Vec::with_capacity(layers);
    let mut h = z.to_owned();
    for (t, (w, b)) in clf.weights.iter().zip(&clf.biases).enumerate() {
        let mut next = h.dot(w) + b;
        if t + 1 < layers {
            relu_inplace(&mut next);
        }
        inputs.push(h);
        h = next;
    }
    let (loss, mut d) = softmax_cross_entropy(&h, rows, labels);
    let mut dws = vec![Array2::zeros((0, 0)); layers];
    let mut dbs = vec![Array2::zeros((0, 0)); layers];
    for t in (0..layers).rev() {
        dws[t] = inputs[t].t().dot(&d);
        dbs[t] = d.sum_axis(Axis(0)).insert_axis(Axis(0));
        if t > 0 {
            let mut dx = d.dot(&clf.weights[t].t());
            // inputs[t] is the ReLU output of layer t-1; zero where it was clipped
            ndarray::Zip::from(&mut dx).and(&inputs[t]).for_each(|g, &a| {
                if a <= T::zero() {
                    *g = T::zero();
                }
            });
            d = dx;
        }
    }
    Ok((loss, dws, dbs))
}

/// Full-batch Adam on cross-entropy. `y_train[k]` is the label of row `k` of `z_train`.
pub fn train_classifier<T: Real>(
    z_train: ArrayView2<T>,
    y_train: &[usize],
    num_classes: usize,
    cfg: &MlpTrainConfig,
) -> Result<MlpClassifier<T>> {
    if y_train.len() != z_train.nrows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} training rows",
            y_train.len(),
            z_train.nrows()
        )));
    }
    if z_train.nrows() < num_classes {
        return Err(Error::InvalidArgument(format!(
            "{} training rows for {num_classes} classes",
            z_train.nrows()
        )));
    }
    if let Some(&bad) = y_train.iter().find(|&&y| y >= num_classes) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range for {num_classes} classes")));
    }
    let mut clf = MlpClassifier::init(z_train.ncols(), num_classes, cfg.layers, cfg.hidden, cfg.seed)?;
    let rows: Vec<usize> = (0..z_train.nrows()).collect();
    let shapes: Vec<_> = clf
        .weights
        .iter()
        .chain(&clf.biases)
        .map(|p| p.dim())
        .collect();
    let mut opt = Adam::new(cfg.lr, shapes);
    for epoch in 0..cfg.epochs {
        let (loss, mut dws, dbs) = mlp_objective(&clf, z_train, &rows, y_train)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: loss.as_f64() });
        }
        dws.extend(dbs);
        let mut params: Vec<&mut Array2<T>> = clf.weights.iter_mut().chain(clf.biases.iter_mut()).collect();
        opt.step(&mut params, &dws);
    }
    Ok(clf)
}

/// Scores and the margin of each node under a given (possibly hypothetical) label.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginTable<T> {
    pub scores: Array2<T>,
    pub labels: Vec<usize>,
    pub margins: Vec<T>,
}

impl<T: Real> MarginTable<T> {
    pub fn from_scores(scores: Array2<T>, labels: &[usize]) -> Result<Self> {
        let k = scores.ncols();
        if k < 2 {
            return Err(Error::InvalidArgument("margin needs at least two classes".into()));
        }
        if labels.len() != scores.nrows() {
            return Err(Error::Dimension(format!("{} labels for {} score rows", labels.len(), scores.nrows())));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::InvalidArgument(format!("label {bad} out of range for {k} classes")));
        }
        let margins = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| margin_of(scores.row(i), y))
            .collect();
        Ok(Self {
            scores,
            labels: labels.to_vec(),
            margins,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.scores.ncols()
    }

    /// Margin of node `i` under label `y`.
    pub fn margin_at(&self, i: usize, y: usize) -> T {
        margin_of(self.scores.row(i), y)
    }

    /// `N x K` table of margins under every label.
    pub fn all_margins(&self) -> Array2<T> {
        let (n, k) = self.scores.dim();
        let mut out = Array2::zeros((n, k));
        for i in 0..n {
            let row = self.scores.row(i);
            // top two scores give every margin in O(K)
            let (mut best, mut second, mut arg) = (T::neg_infinity(), T::neg_infinity(), 0);
            for (c, &s) in row.iter().enumerate() {
                if s > best {
                    second = best;
                    best = s;
                    arg = c;
                } else if s > second {
                    second = s;
                }
            }
            for (c, &s) in row.iter().enumerate() {
                out[[i, c]] = s - if c == arg { second } else { best };
            }
        }
        out
    }

    /// Argmax class per node (lowest index on ties).
    pub fn predictions(&self) -> Vec<usize> {
        self.scores
            .rows()
            .into_iter()
            .map(|r| {
                let mut arg = 0;
                for (c, &s) in r.iter().enumerate() {
                    if s > r[arg] {
                        arg = c;
                    }
                }
                arg
            })
            .collect()
    }
}

fn margin_of<T: Real>(scores: ArrayView1<T>, y: usize) -> T {
    let other = scores
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != y)
        .map(|(_, &s)| s)
        .fold(T::neg_infinity(), T::max);
    scores[y] - other
}

/// Scores `z` with `f` and evaluates margins under `labels_for_margin`.
pub fn margins<T: Real>(f: &MlpClassifier<T>, z: ArrayView2<T>, labels_for_margin: &[usize]) -> Result<MarginTable<T>> {
    MarginTable::from_scores(f.scores(z)?, labels_for_margin)
}

/// `R_u`: fraction of test nodes with margin `<= 0`.
pub fn zero_one_test_loss<T: Real>(table: &MarginTable<T>, split: &Split) -> f64 {
    fraction(&split.test, |i| table.margins[i] <= T::zero())
}

/// Fraction of train nodes with margin `<= 0`.
pub fn zero_one_train_loss<T: Real>(table: &MarginTable<T>, split: &Split) -> f64 {
    fraction(&split.train, |i| table.margins[i] <= T::zero())
}

/// `R_{m,gamma}`: fraction of train nodes with margin `<= gamma`.
pub fn margin_train_loss<T: Real>(table: &MarginTable<T>, split: &Split, gamma: T) -> Result<f64> {
    if !(gamma > T::zero()) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    Ok(fraction(&split.train, |i| table.margins[i] <= gamma))
}

fn fraction(idx: &[usize], pred: impl Fn(usize) -> bool) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    idx.iter().filter(|&&i| pred(i)).count() as f64 / idx.len() as f64
}

/// Quantile `q` of the positive train margins, at least `1e-6`.
pub fn select_gamma<T: Real>(table: &MarginTable<T>, split: &Split, q: f64) -> Result<T> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma quantile {q} outside (0, 1)")));
    }
    let mut pos: Vec<T> = split
        .train
        .iter()
        .map(|&i| table.margins[i])
        .filter(|&v| v > T::zero())
        .collect();
    let g = quantile_lower(&mut pos, q).ok_or(Error::NoPositiveMargins)?;
    Ok(g.max(T::of(1e-6)))
}
