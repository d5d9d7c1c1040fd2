//! Wasserstein generalization bounds: the global bound, the class-wise bound with
//! its proportion and concentration terms, and the train-label-only estimator.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::classifier::{margin_train_loss, zero_one_test_loss, zero_one_train_loss, MarginTable};
use crate::error::{Error, Result};
use crate::graph::{sample_permutations, Split};
use crate::linalg::Distances;
use crate::ot::{wasserstein_between, OtMethod, OtOptions};
use crate::scalar::Real;
use crate::stats::quantile_lower;

/// Embedding pairs closer than this are treated as coincident.
pub const COINCIDENT_DISTANCE: f64 = 1e-12;
/// A coincident pair whose margins differ by more than this makes its ratio infinite.
pub const COINCIDENT_NUMERATOR: f64 = 1e-9;

/// Per-class index lists of a split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSplitView {
    pub train: Vec<Vec<usize>>,
    pub test: Vec<Vec<usize>>,
}

impl ClassSplitView {
    pub fn new(split: &Split, labels: &[usize], num_classes: usize) -> Result<Self> {
        let group = |idx: &[usize]| -> Result<Vec<Vec<usize>>> {
            let mut out = vec![Vec::new(); num_classes];
            for &i in idx {
                let y = *labels
                    .get(i)
                    .ok_or_else(|| Error::Dimension(format!("no label for node {i}")))?;
                if y >= num_classes {
                    return Err(Error::InvalidArgument(format!("label {y} out of range")));
                }
                out[y].push(i);
            }
            Ok(out)
        };
        Ok(Self {
            train: group(&split.train)?,
            test: group(&split.test)?,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.train.len()
    }

    pub fn m_c(&self, c: usize) -> usize {
        self.train[c].len()
    }

    pub fn u_c(&self, c: usize) -> usize {
        self.test[c].len()
    }
}

/// A percentile of margin change rates and how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangeRate<T> {
    pub value: T,
    /// Ratios entering the percentile (infinite ones included).
    pub pairs: usize,
    /// Coincident pairs with differing margins, each contributing an infinite ratio.
    pub coincident: usize,
}

fn check_percentile(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("percentile {p} outside (0, 1]")))
    }
}

/// Percentile `p` of `|rho(z_i, y_i) - rho(z_j, y)| / ||z_i - z_j||` over train `i`,
/// test `j` and every class `y`; `table` holds margins under the true labels.
///
/// Coincident pairs with equal margins are skipped. Coincident pairs with differing
/// margins enter as `+inf`, so `p = 1` gives `+inf` whenever one exists and lower
/// percentiles are infinite only when they land on such a pair.
pub fn margin_change_rate_global<T: Real>(
    dist: &Distances<T>,
    table: &MarginTable<T>,
    split: &Split,
    percentile: f64,
) -> Result<ChangeRate<T>> {
    check_percentile(percentile)?;
    let all = table.all_margins();
    let k = table.num_classes();
    let (eps_d, eps_n) = (T::of(COINCIDENT_DISTANCE), T::of(COINCIDENT_NUMERATOR));
    let mut ratios = Vec::with_capacity(split.m * split.u * k);
    let mut coincident = 0;
    for &i in &split.train {
        let a = table.margins[i];
        for &j in &split.test {
            let d = dist.get(i, j);
            for y in 0..k {
                let num = (a - all[[j, y]]).abs();
                if d <= eps_d {
                    if num > eps_n {
                        coincident += 1;
                        ratios.push(T::infinity());
                    }
                } else {
                    ratios.push(num / d);
                }
            }
        }
    }
    let pairs = ratios.len();
    let value = quantile_lower(&mut ratios, percentile)
        .ok_or_else(|| Error::NoValidPairs("every train/test embedding pair coincides".into()))?;
    Ok(ChangeRate { value, pairs, coincident })
}

/// Percentile `p` of `|rho(z_i, c) - rho(z_j, c)| / ||z_i - z_j||` over unordered pairs
/// from `train_c ∪ test`; `margins_all` is the `N x K` table of margins under every label.
pub fn margin_change_rate_classwise<T: Real>(
    dist: &Distances<T>,
    margins_all: ArrayView2<T>,
    train_c: &[usize],
    test: &[usize],
    c: usize,
    percentile: f64,
) -> Result<T> {
    check_percentile(percentile)?;
    if train_c.is_empty() {
        return Err(Error::InvalidArgument(format!("class {c} has no training nodes")));
    }
    let nodes: Vec<usize> = train_c.iter().chain(test).copied().collect();
    if nodes.len() < 2 {
        return Err(Error::NoValidPairs(format!("class {c} has fewer than two eligible nodes")));
    }
    let eps_d = T::of(COINCIDENT_DISTANCE);
    let mut ratios = Vec::with_capacity(nodes.len() * (nodes.len() - 1) / 2);
    for (a, &i) in nodes.iter().enumerate() {
        let mi = margins_all[[i, c]];
        for &j in &nodes[a + 1..] {
            let d = dist.get(i, j);
            if d > eps_d {
                ratios.push((mi - margins_all[[j, c]]).abs() / d);
            }
        }
    }
    quantile_lower(&mut ratios, percentile)
        .ok_or_else(|| Error::NoValidPairs(format!("all class-{c} pairs coincide")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalBound<T> {
    pub m: T,
    pub w: T,
    /// `(m / gamma) * w`, or `+inf` when `m` is infinite.
    pub bound: T,
    pub vacuous: bool,
    pub coincident_pairs: usize,
    pub method: OtMethod,
}

/// `(M / gamma) * W(train embeddings, test embeddings)`.
pub fn global_bound<T: Real>(
    dist: &Distances<T>,
    table: &MarginTable<T>,
    split: &Split,
    gamma: T,
    percentile: f64,
    ot: &OtOptions,
) -> Result<GlobalBound<T>> {
    check_gamma(gamma)?;
    let rate = margin_change_rate_global(dist, table, split, percentile)?;
    let (w, method) = wasserstein_between(dist, &split.train, &split.test, ot)?;
    let vacuous = rate.value.is_infinite();
    let bound = if vacuous { T::infinity() } else { rate.value / gamma * w };
    Ok(GlobalBound {
        m: rate.value,
        w,
        bound,
        vacuous,
        coincident_pairs: rate.coincident,
        method,
    })
}

fn check_gamma<T: Real>(gamma: T) -> Result<()> {
    if gamma > T::zero() && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("gamma must be positive and finite, got {gamma}")))
    }
}

/// Concentration term for a uniformly random split into `m` train and `u` test nodes.
pub fn epsilon_delta(m: usize, u: usize, delta: f64) -> Result<f64> {
    if m == 0 || u == 0 {
        return Err(Error::InvalidArgument("m and u must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta {delta} outside (0, 1)")));
    }
    let (mf, uf) = (m as f64, u as f64);
    let beta = 1.0 / mf + 1.0 / uf;
    let correction = 1.0 - 1.0 / (2.0 * mf.max(uf));
    Ok((mf * uf * beta * beta / (2.0 * (mf + uf - 0.5)) / correction * (1.0 / delta).ln()).sqrt())
}

/// `sum_c |u_c/u - m_c/m|` for one split.
pub fn proportion_gap(view: &ClassSplitView) -> f64 {
    let m: usize = (0..view.num_classes()).map(|c| view.m_c(c)).sum();
    let u: usize = (0..view.num_classes()).map(|c| view.u_c(c)).sum();
    if m == 0 || u == 0 {
        return 0.0;
    }
    (0..view.num_classes())
        .map(|c| (view.u_c(c) as f64 / u as f64 - view.m_c(c) as f64 / m as f64).abs())
        .sum()
}

/// Average of [`proportion_gap`] over the given splits.
pub fn proportion_mismatch_over(labels: &[usize], num_classes: usize, splits: &[Split]) -> Result<f64> {
    if splits.is_empty() {
        return Err(Error::InvalidArgument("need at least one split".into()));
    }
    let mut acc = 0.0;
    for s in splits {
        acc += proportion_gap(&ClassSplitView::new(s, labels, num_classes)?);
    }
    Ok(acc / splits.len() as f64)
}

/// Average proportion mismatch over `t` seeded splits with `floor(train_fraction * n)` train nodes.
pub fn proportion_mismatch(
    labels: &[usize],
    num_classes: usize,
    train_fraction: f64,
    t: usize,
    seed: u64,
) -> Result<f64> {
    let n = labels.len();
    let m = (train_fraction * n as f64).floor() as usize;
    proportion_mismatch_over(labels, num_classes, &sample_permutations(n, m, t, seed)?)
}

/// Class-wise bound components.
#[derive(Debug, Clone, PartialEq)]
pub struct ClasswiseBound<T> {
    /// Change rate per class on the original split.
    pub m_c: Vec<T>,
    /// Average over splits of `(m_c'/m) * W(train_c', test_c')` per class.
    pub w_c: Vec<T>,
    pub proportion: f64,
    pub eps_delta: f64,
    pub bound: T,
    /// `(class, split)` terms with an empty side, recorded as zero.
    pub degenerate: usize,
    pub method: OtMethod,
}

fn class_rates<T: Real>(
    dist: &Distances<T>,
    margins_all: ArrayView2<T>,
    train_by_class: &[Vec<usize>],
    test: &[usize],
    percentile: f64,
) -> Result<Vec<T>> {
    train_by_class
        .iter()
        .enumerate()
        .map(|(c, tr)| margin_change_rate_classwise(dist, margins_all, tr, test, c, percentile))
        .collect()
}

struct Accumulator<T> {
    w_c: Vec<T>,
    proportion: f64,
    degenerate: usize,
    entropic: bool,
}

impl<T: Real> Accumulator<T> {
    fn new(k: usize) -> Self {
        Self {
            w_c: vec![T::zero(); k],
            proportion: 0.0,
            degenerate: 0,
            entropic: false,
        }
    }

    /// Adds one split's per-class sets, normalizing counts by their totals.
    fn add(&mut self, dist: &Distances<T>, tr: &[Vec<usize>], te: &[Vec<usize>], ot: &OtOptions) -> Result<()> {
        let m: usize = tr.iter().map(Vec::len).sum();
        let u: usize = te.iter().map(Vec::len).sum();
        if m == 0 || u == 0 {
            self.degenerate += tr.len();
            return Ok(());
        }
        for c in 0..tr.len() {
            self.proportion += (te[c].len() as f64 / u as f64 - tr[c].len() as f64 / m as f64).abs();
            if tr[c].is_empty() || te[c].is_empty() {
                self.degenerate += 1;
                continue;
            }
            let (w, method) = wasserstein_between(dist, &tr[c], &te[c], ot)?;
            self.entropic |= method == OtMethod::Entropic;
            self.w_c[c] += T::of_usize(tr[c].len()) / T::of_usize(m) * w;
        }
        Ok(())
    }

    fn finish(
        mut self,
        count: usize,
        m_c: Vec<T>,
        gamma: T,
        eps_delta: f64,
    ) -> ClasswiseBound<T> {
        let tf = T::of_usize(count);
        self.w_c.iter_mut().for_each(|w| *w = *w / tf);
        let proportion = self.proportion / count as f64;
        let transport = m_c
            .iter()
            .zip(&self.w_c)
            .fold(T::zero(), |acc, (&mc, &w)| acc + mc / gamma * w);
        ClasswiseBound {
            bound: transport + T::of(proportion) + T::of(eps_delta),
            m_c,
            w_c: self.w_c,
            proportion,
            eps_delta,
            degenerate: self.degenerate,
            method: if self.entropic { OtMethod::Entropic } else { OtMethod::Exact },
        }
    }
}

/// Average over `perms` of `(m_c'/m) * W(train_c', test_c')` per class, with the
/// number of `(class, split)` terms that had an empty side.
pub fn expected_class_transport<T: Real>(
    dist: &Distances<T>,
    labels: &[usize],
    num_classes: usize,
    perms: &[Split],
    ot: &OtOptions,
) -> Result<(Vec<T>, usize)> {
    if perms.is_empty() {
        return Err(Error::InvalidArgument("need at least one permutation".into()));
    }
    let mut acc = Accumulator::new(num_classes);
    for p in perms {
        let v = ClassSplitView::new(p, labels, num_classes)?;
        acc.add(dist, &v.train, &v.test, ot)?;
    }
    let tf = T::of_usize(perms.len());
    Ok((acc.w_c.into_iter().map(|w| w / tf).collect(), acc.degenerate))
}

/// Class-wise bound with expectations over `perms` (fresh splits of all nodes with the
/// same train size) using the true labels of every node.
#[allow(clippy::too_many_arguments)]
pub fn classwise_bound<T: Real>(
    dist: &Distances<T>,
    margins_all: ArrayView2<T>,
    labels: &[usize],
    split: &Split,
    gamma: T,
    percentile: f64,
    perms: &[Split],
    delta: f64,
    ot: &OtOptions,
) -> Result<ClasswiseBound<T>> {
    let k = margins_all.ncols();
    let view = ClassSplitView::new(split, labels, k)?;
    let m_c = class_rates(dist, margins_all, &view.train, &split.test, percentile)?;
    classwise_with_rates(dist, labels, split, gamma, m_c, perms, delta, ot)
}

#[allow(clippy::too_many_arguments)]
fn classwise_with_rates<T: Real>(
    dist: &Distances<T>,
    labels: &[usize],
    split: &Split,
    gamma: T,
    m_c: Vec<T>,
    perms: &[Split],
    delta: f64,
    ot: &OtOptions,
) -> Result<ClasswiseBound<T>> {
    check_gamma(gamma)?;
    if perms.is_empty() {
        return Err(Error::InvalidArgument("need at least one permutation".into()));
    }
    let k = m_c.len();
    let eps = epsilon_delta(split.m, split.u, delta)?;
    let mut acc = Accumulator::new(k);
    for p in perms {
        if p.m != split.m || p.n() != split.n() {
            return Err(Error::InvalidArgument("permutation sizes differ from the split".into()));
        }
        let v = ClassSplitView::new(p, labels, k)?;
        acc.add(dist, &v.train, &v.test, ot)?;
    }
    Ok(acc.finish(perms.len(), m_c, gamma, eps))
}

/// Train-label-only estimator: each split in `perms` is intersected with the original
/// per-class training sets. Only `labels[i]` for `i` in `split.train` is read.
#[allow(clippy::too_many_arguments)]
pub fn classwise_bound_approx<T: Real>(
    dist: &Distances<T>,
    margins_all: ArrayView2<T>,
    labels: &[usize],
    split: &Split,
    gamma: T,
    percentile: f64,
    perms: &[Split],
    delta: f64,
    ot: &OtOptions,
) -> Result<ClasswiseBound<T>> {
    let train_by_class = train_classes(labels, split, margins_all.ncols())?;
    let m_c = class_rates(dist, margins_all, &train_by_class, &split.test, percentile)?;
    approx_with_rates(dist, &train_by_class, split, gamma, m_c, perms, delta, ot)
}

fn train_classes(labels: &[usize], split: &Split, k: usize) -> Result<Vec<Vec<usize>>> {
    let mut train_by_class = vec![Vec::new(); k];
    for &i in &split.train {
        let y = labels[i];
        if y >= k {
            return Err(Error::InvalidArgument(format!("label {y} out of range")));
        }
        train_by_class[y].push(i);
    }
    Ok(train_by_class)
}

#[allow(clippy::too_many_arguments)]
fn approx_with_rates<T: Real>(
    dist: &Distances<T>,
    train_by_class: &[Vec<usize>],
    split: &Split,
    gamma: T,
    m_c: Vec<T>,
    perms: &[Split],
    delta: f64,
    ot: &OtOptions,
) -> Result<ClasswiseBound<T>> {
    check_gamma(gamma)?;
    if perms.is_empty() {
        return Err(Error::InvalidArgument("need at least one permutation".into()));
    }
    let k = m_c.len();
    let eps = epsilon_delta(split.m, split.u, delta)?;
    let mut acc = Accumulator::new(k);
    for p in perms {
        if p.n() != split.n() {
            return Err(Error::InvalidArgument("permutation covers a different node set".into()));
        }
        let mask = p.train_mask();
        let (tr, te): (Vec<Vec<usize>>, Vec<Vec<usize>>) = train_by_class
            .iter()
            .map(|nodes| nodes.iter().partition(|&&i| mask[i]))
            .unzip();
        acc.add(dist, &tr, &te, ot)?;
    }
    Ok(acc.finish(perms.len(), m_c, gamma, eps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    /// Percentile of the global change rate.
    pub percentile: f64,
    /// Percentile for the per-class rates; defaults to `percentile`.
    pub classwise_percentile: Option<f64>,
    pub permutations: usize,
    pub delta: f64,
    pub permutation_seed: u64,
    /// Also compute the class-wise bound that reads test labels.
    pub oracle_labels: bool,
    pub ot: OtOptions,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            percentile: 0.9,
            classwise_percentile: None,
            permutations: 4,
            delta: 0.05,
            permutation_seed: 0,
            oracle_labels: true,
            ot: OtOptions::default(),
        }
    }
}

/// Every bound component for one trained model on one split. Infinite values
/// serialize as `"inf"`; fields that need test labels are `None` when the oracle is off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub gamma: f64,
    pub percentile: f64,
    pub classwise_percentile: f64,
    #[serde(with = "crate::serde_float")]
    pub m_global: f64,
    pub w_global: f64,
    #[serde(with = "crate::serde_float")]
    pub bound_global: f64,
    pub m_class: Vec<f64>,
    pub w_class: Option<Vec<f64>>,
    pub w_class_approx: Vec<f64>,
    pub proportion_term: Option<f64>,
    pub proportion_term_approx: f64,
    pub eps_delta: f64,
    pub delta: f64,
    pub permutations: usize,
    pub bound_classwise: Option<f64>,
    pub bound_classwise_approx: f64,
    pub r_u: f64,
    pub r_m_gamma: f64,
    /// `r_u - r_m_gamma`.
    pub empirical_gap: f64,
    /// `r_u` minus the train zero-one loss.
    pub gap_zero_one: f64,
    pub vacuous: bool,
    pub degenerate_split_count: usize,
    pub degenerate_split_count_approx: usize,
    pub coincident_pairs: usize,
    pub ot_method: OtMethod,
    pub split_seed: u64,
    pub permutation_seed: u64,
}

/// Computes every bound for embeddings `z`, margins `table` under the true `labels`,
/// and margin threshold `gamma`.
pub fn evaluate_bounds<T: Real>(
    z: ArrayView2<T>,
    table: &MarginTable<T>,
    labels: &[usize],
    split: &Split,
    gamma: T,
    opts: &BoundOptions,
) -> Result<BoundReport> {
    if z.nrows() != split.n() || table.scores.nrows() != split.n() || labels.len() != split.n() {
        return Err(Error::Dimension("embeddings, scores, labels and split disagree on N".into()));
    }
    if opts.permutations == 0 {
        return Err(Error::InvalidArgument("permutations must be at least 1".into()));
    }
    let cp = opts.classwise_percentile.unwrap_or(opts.percentile);
    let dist = Distances::new(z);
    let all: Array2<T> = table.all_margins();
    let global = global_bound(&dist, table, split, gamma, opts.percentile, &opts.ot)?;
    let perms = sample_permutations(split.n(), split.m, opts.permutations, opts.permutation_seed)?;
    // the per-class rates read only train labels, so both estimators share them
    let train_by_class = train_classes(labels, split, all.ncols())?;
    let m_c = class_rates(&dist, all.view(), &train_by_class, &split.test, cp)?;
    let approx = approx_with_rates(&dist, &train_by_class, split, gamma, m_c.clone(), &perms, opts.delta, &opts.ot)?;
    let oracle = if opts.oracle_labels {
        Some(classwise_with_rates(&dist, labels, split, gamma, m_c, &perms, opts.delta, &opts.ot)?)
    } else {
        None
    };
    let r_u = zero_one_test_loss(table, split);
    let r_m = margin_train_loss(table, split, gamma)?;
    let f = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
    let entropic = global.method == OtMethod::Entropic
        || approx.method == OtMethod::Entropic
        || oracle.as_ref().is_some_and(|o| o.method == OtMethod::Entropic);
    Ok(BoundReport {
        gamma: gamma.as_f64(),
        percentile: opts.percentile,
        classwise_percentile: cp,
        m_global: global.m.as_f64(),
        w_global: global.w.as_f64(),
        bound_global: global.bound.as_f64(),
        m_class: f(&approx.m_c),
        w_class: oracle.as_ref().map(|o| f(&o.w_c)),
        w_class_approx: f(&approx.w_c),
        proportion_term: oracle.as_ref().map(|o| o.proportion),
        proportion_term_approx: approx.proportion,
        eps_delta: approx.eps_delta,
        delta: opts.delta,
        permutations: opts.permutations,
        bound_classwise: oracle.as_ref().map(|o| o.bound.as_f64()),
        bound_classwise_approx: approx.bound.as_f64(),
        r_u,
        r_m_gamma: r_m,
        empirical_gap: r_u - r_m,
        gap_zero_one: r_u - zero_one_train_loss(table, split),
        vacuous: global.vacuous,
        degenerate_split_count: oracle.as_ref().map_or(0, |o| o.degenerate),
        degenerate_split_count_approx: approx.degenerate,
        coincident_pairs: global.coincident_pairs,
        ot_method: if entropic { OtMethod::Entropic } else { OtMethod::Exact },
        split_seed: split.seed,
        permutation_seed: opts.permutation_seed,
    })
}
