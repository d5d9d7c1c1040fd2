//! Spectrum of the normalized adjacency, the depth envelopes it implies, and
//! depth diagnostics of train/test, intra-class and inter-class transport.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::bounds::expected_class_transport;
use crate::encoders::{encode, EncoderConfig, EncoderKind};
use crate::error::{Error, Result};
use crate::graph::{degree_statistic, sample_permutations, Graph, SparseMatrix, Split};
use crate::linalg::{frobenius, Distances};
use crate::ot::{wasserstein1_1d, wasserstein_between, OtOptions};
use crate::scalar::Real;

/// Largest dimension handled by the dense eigendecomposition in [`EigenMethod::Auto`].
pub const DENSE_EIGEN_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenMethod {
    #[default]
    Auto,
    Dense,
    Lanczos,
}

/// `u1 = D̃^{1/2} 1`, read off the diagonal of `Â` (`Â_ii = 1 / d̃_i`).
pub fn principal_vector<T: Real>(adj: &SparseMatrix<T>) -> Array1<T> {
    (0..adj.dim()).map(|i| (T::one() / adj.get(i, i)).sqrt()).collect()
}

/// `max_{k>=2} |λ_k(Â)|` and whether the graph is disconnected (a second eigenvalue
/// within `tol` of 1).
pub fn rho_perp<T: Real>(adj: &SparseMatrix<T>, tol: f64) -> Result<(T, bool)> {
    rho_perp_with(adj, tol, EigenMethod::Auto)
}

pub fn rho_perp_with<T: Real>(adj: &SparseMatrix<T>, tol: f64, method: EigenMethod) -> Result<(T, bool)> {
    if !adj.is_symmetric() {
        return Err(Error::Asymmetric);
    }
    let n = adj.dim();
    if n == 1 {
        return Ok((T::zero(), false));
    }
    let dense = match method {
        EigenMethod::Auto => n <= DENSE_EIGEN_LIMIT,
        EigenMethod::Dense => true,
        EigenMethod::Lanczos => false,
    };
    let (top, bottom) = if dense { dense_ends(adj) } else { lanczos_ends(adj, tol) };
    let rho = top.abs().max(bottom.abs()).min(1.0);
    Ok((T::of(rho), top >= 1.0 - tol))
}

/// Largest and smallest eigenvalue after removing one copy of eigenvalue 1.
fn dense_ends<T: Real>(adj: &SparseMatrix<T>) -> (f64, f64) {
    let n = adj.dim();
    let m = DMatrix::from_fn(n, n, |i, j| adj.get(i, j).as_f64());
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    (ev[1], ev[n - 1])
}

/// Extreme eigenvalues of `Â` restricted to the complement of `u1`, by Lanczos with
/// full reorthogonalization against `u1` and every previous basis vector.
fn lanczos_ends<T: Real>(adj: &SparseMatrix<T>, tol: f64) -> (f64, f64) {
    let n = adj.dim();
    let u1: Vec<f64> = principal_vector(adj).iter().map(|v| v.as_f64()).collect();
    let u1n = norm(&u1);
    let u1: Vec<f64> = u1.iter().map(|v| v / u1n).collect();
    let apply = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| adj.row(i).map(|(j, a)| a.as_f64() * x[j]).sum())
            .collect()
    };
    let project = |x: &mut Vec<f64>, q: &[f64]| {
        let d = dot(x, q);
        x.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
    };

    // deterministic start with no special alignment to the graph structure
    let mut q: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.754_877_666).fract() - 0.5).collect();
    project(&mut q, &u1);
    let qn = norm(&q);
    if qn == 0.0 {
        return (0.0, 0.0);
    }
    q.iter_mut().for_each(|v| *v /= qn);

    let max_steps = (n - 1).min(400);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    let mut ends = (0.0, 0.0);
    for k in 0..max_steps {
        let mut w = apply(&basis[k]);
        let a = dot(&w, &basis[k]);
        alpha.push(a);
        // two passes of classical Gram-Schmidt keep the basis orthogonal to working precision
        for _ in 0..2 {
            project(&mut w, &u1);
            for b in &basis {
                project(&mut w, b);
            }
        }
        let b = norm(&w);
        let (vals, vecs) = tridiagonal_eigen(&alpha, &beta);
        let last = alpha.len() - 1;
        let (imax, imin) = (vals.len() - 1, 0);
        ends = (vals[imax], vals[imin]);
        let res_max = b * vecs[(last, imax)].abs();
        let res_min = b * vecs[(last, imin)].abs();
        if b <= 1e-14 || (k >= 2 && res_max <= tol && res_min <= tol) {
            break;
        }
        beta.push(b);
        w.iter_mut().for_each(|v| *v /= b);
        basis.push(w);
    }
    ends
}

/// Ascending eigenvalues and eigenvectors (columns) of a symmetric tridiagonal matrix.
fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let k = alpha.len();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(k, k, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary<T> {
    pub rho_perp: T,
    pub u1: Array1<T>,
    /// `||X||_F / ||u1||_2`.
    pub c1: T,
    /// `||X - u1 u1ᵀ X / ||u1||²||_F`.
    pub c2: T,
    pub disconnected: bool,
}

pub fn depth_constants<T: Real>(adj: &SparseMatrix<T>, x: ArrayView2<T>) -> Result<SpectralSummary<T>> {
    if x.nrows() != adj.dim() {
        return Err(Error::Dimension(format!("features have {} rows, adjacency dim {}", x.nrows(), adj.dim())));
    }
    let (rho, disconnected) = rho_perp(adj, 1e-9)?;
    let u1 = principal_vector(adj);
    let u1n2 = u1.dot(&u1);
    let coeff = u1.dot(&x) / u1n2;
    let mut perp = x.to_owned();
    for (mut row, &u) in perp.rows_mut().into_iter().zip(u1.iter()) {
        row.scaled_add(-u, &coeff);
    }
    Ok(SpectralSummary {
        rho_perp: rho,
        c1: frobenius(x) / u1n2.sqrt(),
        c2: frobenius(perp.view()),
        u1,
        disconnected,
    })
}

/// `C1 * w1_degree + C2 * rho_perp^depth`.
pub fn sgc_depth_envelope<T: Real>(s: &SpectralSummary<T>, w1_degree: T, depth: usize) -> T {
    s.c1 * w1_degree + s.c2 * s.rho_perp.powi(depth as i32)
}

/// The SGC envelope scaled by `beta^depth`.
pub fn gcn_depth_envelope<T: Real>(s: &SpectralSummary<T>, w1_degree: T, depth: usize, beta: T) -> T {
    sgc_depth_envelope(s, w1_degree, depth) * beta.powi(depth as i32)
}

/// W1 between the degree statistics of two node subsets.
pub fn degree_w1<T: Real>(g: &Graph<T>, a: &[usize], b: &[usize]) -> Result<T> {
    let d = degree_statistic(g);
    let pick = |idx: &[usize]| idx.iter().map(|&i| d[i]).collect::<Vec<_>>();
    wasserstein1_1d(&pick(a), &pick(b))
}

/// One row of a depth sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub depth: usize,
    pub w_g: f64,
    pub w_c: f64,
    /// NaN with a single class.
    pub w_s: f64,
    /// SGC envelope for SGC/raw, GCN envelope for GCN, on the train/test subsets.
    pub envelope: f64,
    pub rho_perp: f64,
    pub c1: f64,
    pub c2: f64,
    /// `max_t ||W_t||_2` for GCN; 1 otherwise.
    pub beta: f64,
}

/// For each depth: `W_G` (train vs test), `W_C` (class average of the expected weighted
/// intra-class transport over `permutations` splits) and `W_S` (closest pair of full classes).
pub fn depth_diagnostics<T: Real>(
    g: &Graph<T>,
    cfg: &EncoderConfig,
    depths: &[usize],
    split: &Split,
    permutations: usize,
    seed: u64,
    ot: &OtOptions,
) -> Result<Vec<DepthRow>> {
    if depths.is_empty() {
        return Err(Error::InvalidArgument("no depths given".into()));
    }
    let adj = crate::graph::build_normalized_adjacency(g);
    let summary = depth_constants(&adj, g.features().view())?;
    let w1_deg = degree_w1(g, &split.train, &split.test)?;
    let perms = sample_permutations(split.n(), split.m, permutations, seed)?;
    let k = g.num_classes();
    let mut by_class = vec![Vec::new(); k];
    for (i, &y) in g.labels().iter().enumerate() {
        by_class[y].push(i);
    }
    let mut rows = Vec::with_capacity(depths.len());
    for &depth in depths {
        let enc = encode(g, &adj, split, depth, cfg)?;
        let dist = Distances::new(enc.embeddings.z.view());
        let (w_g, _) = wasserstein_between(&dist, &split.train, &split.test, ot)?;
        let (w_c_per, _) = expected_class_transport(&dist, g.labels(), k, &perms, ot)?;
        let w_c = w_c_per.iter().map(|w| w.as_f64()).sum::<f64>() / k as f64;
        let mut w_s = f64::INFINITY;
        for a in 0..k {
            for b in a + 1..k {
                let (w, _) = wasserstein_between(&dist, &by_class[a], &by_class[b], ot)?;
                w_s = w_s.min(w.as_f64());
            }
        }
        if k < 2 {
            w_s = f64::NAN;
        }
        let (envelope, beta) = match (cfg.kind, enc.beta) {
            (EncoderKind::Gcn, Some(beta)) => (gcn_depth_envelope(&summary, w1_deg, depth, beta), beta.as_f64()),
            _ => (sgc_depth_envelope(&summary, w1_deg, depth), 1.0),
        };
        rows.push(DepthRow {
            depth,
            w_g: w_g.as_f64(),
            w_c,
            w_s,
            envelope: envelope.as_f64(),
            rho_perp: summary.rho_perp.as_f64(),
            c1: summary.c1.as_f64(),
            c2: summary.c2.as_f64(),
            beta,
        });
    }
    Ok(rows)
}
