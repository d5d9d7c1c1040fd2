use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Parameters of a planted-partition stochastic block model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub blocks: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub feature_shift: f64,
    pub seed: u64,
}

impl SbmSpec {
    pub fn generate<T: Real>(&self) -> Result<Graph<T>> {
        generate_sbm(
            &self.blocks,
            self.p_in,
            self.p_out,
            self.feature_dim,
            self.feature_shift,
            self.seed,
        )
    }
}

/// Samples an SBM graph. Node ids are assigned block by block; labels are block ids.
///
/// Edges are drawn for pairs `i < j` in lexicographic order, then features row by row:
/// standard normal, with `feature_shift` added to coordinate `c mod feature_dim` of
/// every node in block `c`.
pub fn generate_sbm<T: Real>(
    blocks: &[usize],
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    feature_shift: f64,
    seed: u64,
) -> Result<Graph<T>> {
    if blocks.is_empty() {
        return Err(Error::InvalidArgument("SBM needs at least one block".into()));
    }
    if blocks.contains(&0) {
        return Err(Error::InvalidArgument("SBM blocks must be nonempty".into()));
    }
    for p in [p_in, p_out] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
        }
    }
    if feature_dim == 0 {
        return Err(Error::InvalidArgument("feature_dim must be positive".into()));
    }
    let labels: Vec<usize> = blocks
        .iter()
        .enumerate()
        .flat_map(|(c, &size)| std::iter::repeat_n(c, size))
        .collect();
    let n = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let mut features = Array2::zeros((n, feature_dim));
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        for v in row.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = T::of(z);
        }
        row[labels[i] % feature_dim] += T::of(feature_shift);
    }
    Graph::new(n, edges, features, labels, blocks.len())
}
