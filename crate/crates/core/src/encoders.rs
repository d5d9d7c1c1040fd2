//! Node encoders: SGC propagation and a ReLU GCN trained by manual backpropagation.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_normalized_adjacency, Graph, SparseMatrix, Split};
use crate::linalg::{relu_inplace, spectral_norm};
use crate::optim::{glorot_uniform, softmax_cross_entropy, Adam};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Sgc,
    Gcn,
    Raw,
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::Sgc => "sgc",
            EncoderKind::Gcn => "gcn",
            EncoderKind::Raw => "raw",
        })
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgc" => Ok(EncoderKind::Sgc),
            "gcn" => Ok(EncoderKind::Gcn),
            "raw" => Ok(EncoderKind::Raw),
            other => Err(Error::InvalidArgument(format!("unknown encoder {other:?}"))),
        }
    }
}

/// Encoder output: row `i` is the embedding of node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings<T> {
    pub z: Array2<T>,
    pub depth: usize,
    pub kind: EncoderKind,
}

impl<T: Real> Embeddings<T> {
    pub fn new(z: Array2<T>, depth: usize, kind: EncoderKind) -> Result<Self> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{kind} embeddings at depth {depth} are not finite")));
        }
        Ok(Self { z, depth, kind })
    }

    pub fn raw(x: ArrayView2<T>) -> Result<Self> {
        Self::new(x.to_owned(), 0, EncoderKind::Raw)
    }

    pub fn num_nodes(&self) -> usize {
        self.z.nrows()
    }
}

/// `Â^depth X` by repeated sparse products.
pub fn sgc_embed<T: Real>(adj: &SparseMatrix<T>, x: ArrayView2<T>, depth: usize) -> Result<Embeddings<T>> {
    if x.nrows() != adj.dim() {
        return Err(Error::Dimension(format!(
            "features have {} rows, adjacency is {}x{}",
            x.nrows(),
            adj.dim(),
            adj.dim()
        )));
    }
    let mut z = x.to_owned();
    for _ in 0..depth {
        z = adj.mul_dense(z.view())?;
    }
    Embeddings::new(z, depth, EncoderKind::Sgc)
}

/// Bias-free GCN layers `X_{t+1} = ReLU(Â X_t W_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnModel<T> {
    pub weights: Vec<Array2<T>>,
    pub hidden: usize,
}

impl<T: Real> GcnModel<T> {
    /// Glorot-uniform layers `in_dim -> hidden -> ... -> hidden`.
    pub fn init(in_dim: usize, layers: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..layers)
            .map(|t| glorot_uniform(if t == 0 { in_dim } else { hidden }, hidden, &mut rng))
            .collect();
        Self { weights, hidden }
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    /// `max_t ‖W_t‖₂`.
    pub fn beta(&self) -> T {
        self.weights
            .iter()
            .map(|w| weight_spectral_norm(w.view(), 10_000, T::of(1e-12)))
            .fold(T::zero(), T::max)
    }
}

/// Largest singular value of a weight matrix (power iteration on `WᵀW`).
pub fn weight_spectral_norm<T: Real>(w: ArrayView2<T>, iters: usize, tol: T) -> T {
    spectral_norm(w, iters, tol)
}

/// Returns `X_0, ..., X_L`.
pub fn gcn_forward<T: Real>(adj: &SparseMatrix<T>, x: ArrayView2<T>, model: &GcnModel<T>) -> Result<Vec<Embeddings<T>>> {
    check_shapes(adj, x, &model.weights)?;
    let mut out = vec![Embeddings::new(x.to_owned(), 0, EncoderKind::Gcn)?];
    let mut cur = x.to_owned();
    for (t, w) in model.weights.iter().enumerate() {
        let mut h = adj.mul_dense(cur.dot(w).view())?;
        relu_inplace(&mut h);
        cur = h;
        out.push(Embeddings::new(cur.clone(), t + 1, EncoderKind::Gcn)?);
    }
    Ok(out)
}

fn check_shapes<T: Real>(adj: &SparseMatrix<T>, x: ArrayView2<T>, weights: &[Array2<T>]) -> Result<()> {
    if x.nrows() != adj.dim() {
        return Err(Error::Dimension(format!("features have {} rows, adjacency dim {}", x.nrows(), adj.dim())));
    }
    let mut width = x.ncols();
    for (t, w) in weights.iter().enumerate() {
        if w.nrows() != width {
            return Err(Error::Dimension(format!("layer {t} expects {} inputs, got {width}", w.nrows())));
        }
        width = w.ncols();
    }
    Ok(())
}

/// Mean cross-entropy of a linear readout on the last GCN layer over `train`,
/// and its gradients with respect to every layer weight and the readout.
pub fn gcn_objective<T: Real>(
    adj: &SparseMatrix<T>,
    x: ArrayView2<T>,
    weights: &[Array2<T>],
    readout: &Array2<T>,
    train: &[usize],
    labels: &[usize],
) -> Result<(T, Vec<Array2<T>>, Array2<T>)> {
    check_shapes(adj, x, weights)?;
    let mut inputs = Vec::with_capacity(weights.len());
    let mut pre = Vec::with_capacity(weights.len());
    let mut cur = x.to_owned();
    for w in weights {
        let h = adj.mul_dense(cur.dot(w).view())?;
        let mut next = h.clone();
        relu_inplace(&mut next);
        inputs.push(cur);
        pre.push(h);
        cur = next;
    }
    let logits = cur.dot(readout);
    let (loss, dlogits) = softmax_cross_entropy(&logits, train, labels);
    let grad_readout = cur.t().dot(&dlogits);
    let mut dx = dlogits.dot(&readout.t());
    let mut grads = vec![Array2::zeros((0, 0)); weights.len()];
    for t in (0..weights.len()).rev() {
        let mut dh = dx;
        ndarray::Zip::from(&mut dh).and(&pre[t]).for_each(|g, &h| {
            if h <= T::zero() {
                *g = T::zero();
            }
        });
        // Â is symmetric, so Âᵀ dH = Â dH.
        let adh = adj.mul_dense(dh.view())?;
        grads[t] = inputs[t].t().dot(&adh);
        dx = adh.dot(&weights[t].t());
    }
    Ok((loss, grads, grad_readout))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnTrainConfig {
    pub layers: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for GcnTrainConfig {
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

/// Full-batch Adam on train-node cross-entropy through a discarded linear readout.
pub fn train_gcn<T: Real>(g: &Graph<T>, split: &Split, cfg: &GcnTrainConfig) -> Result<GcnModel<T>> {
    let adj = build_normalized_adjacency(g);
    train_gcn_with(&adj, g.features().view(), g.labels(), g.num_classes(), split, cfg)
}

pub fn train_gcn_with<T: Real>(
    adj: &SparseMatrix<T>,
    x: ArrayView2<T>,
    labels: &[usize],
    num_classes: usize,
    split: &Split,
    cfg: &GcnTrainConfig,
) -> Result<GcnModel<T>> {
    train_gcn_traced(adj, x, labels, num_classes, split, cfg).map(|(m, _)| m)
}

/// Like [`train_gcn_with`], also returning the training loss before each update.
pub fn train_gcn_traced<T: Real>(
    adj: &SparseMatrix<T>,
    x: ArrayView2<T>,
    labels: &[usize],
    num_classes: usize,
    split: &Split,
    cfg: &GcnTrainConfig,
) -> Result<(GcnModel<T>, Vec<T>)> {
    if cfg.layers == 0 || cfg.hidden == 0 {
        return Err(Error::InvalidArgument("GCN needs at least one layer and a positive width".into()));
    }
    if split.n() != adj.dim() {
        return Err(Error::Dimension(format!("split over {} nodes, graph has {}", split.n(), adj.dim())));
    }
    let mut model = GcnModel::init(x.ncols(), cfg.layers, cfg.hidden, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_4ead);
    let mut readout = glorot_uniform::<T>(cfg.hidden, num_classes, &mut rng);
    let shapes: Vec<_> = model
        .weights
        .iter()
        .map(|w| w.dim())
        .chain(std::iter::once(readout.dim()))
        .collect();
    let mut opt = Adam::new(cfg.lr, shapes);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (loss, mut grads, gr) = gcn_objective(adj, x, &model.weights, &readout, &split.train, labels)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: loss.as_f64() });
        }
        losses.push(loss);
        grads.push(gr);
        let mut params: Vec<&mut Array2<T>> = model.weights.iter_mut().collect();
        params.push(&mut readout);
        opt.step(&mut params, &grads);
    }
    Ok((model, losses))
}

/// Encoder settings shared by the harness and the depth diagnostics. The GCN trains
/// one model per depth with that many layers; SGC and raw ignore the training fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Sgc,
            hidden: 64,
            epochs: 500,
            lr: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Encoded<T> {
    pub embeddings: Embeddings<T>,
    /// `max_t ||W_t||_2` for a trained GCN.
    pub beta: Option<T>,
}

/// Depth-`depth` embeddings of every node. The GCN is trained on `split`.
pub fn encode<T: Real>(
    g: &Graph<T>,
    adj: &SparseMatrix<T>,
    split: &Split,
    depth: usize,
    cfg: &EncoderConfig,
) -> Result<Encoded<T>> {
    let x = g.features().view();
    match cfg.kind {
        EncoderKind::Raw => Ok(Encoded { embeddings: Embeddings::raw(x)?, beta: None }),
        EncoderKind::Sgc => Ok(Encoded { embeddings: sgc_embed(adj, x, depth)?, beta: None }),
        EncoderKind::Gcn if depth == 0 => Ok(Encoded {
            embeddings: Embeddings::new(x.to_owned(), 0, EncoderKind::Gcn)?,
            beta: None,
        }),
        EncoderKind::Gcn => {
            let tc = GcnTrainConfig {
                layers: depth,
                hidden: cfg.hidden,
                epochs: cfg.epochs,
                lr: cfg.lr,
                seed: cfg.seed,
            };
            let model = train_gcn_with(adj, x, g.labels(), g.num_classes(), split, &tc)?;
            let beta = model.beta();
            let embeddings = gcn_forward(adj, x, &model)?.pop().expect("at least one layer");
            Ok(Encoded { embeddings, beta: Some(beta) })
        }
    }
}
