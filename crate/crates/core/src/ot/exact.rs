//! Exact uniform-weight transport by successive shortest paths with potentials.
//!
//! Source `i` carries `L / a` units and target `j` absorbs `L / b` units where
//! `L = lcm(a, b)`, so every flow is an exact integer and the plan masses are
//! exact rationals with denominator `L`. Costs are real.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::cost_matrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Exact solver refuses larger problems unless forced.
pub const DEFAULT_MAX_ARCS: usize = 20_000_000;

/// Optimal coupling between two uniform empirical measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan<T> {
    pub source_count: usize,
    pub target_count: usize,
    /// `lcm(source_count, target_count)`; masses are `units / scale`.
    pub scale: u64,
    /// `(source, target, units)` with `units > 0`, sorted by source then target.
    pub entries: Vec<(usize, usize, u64)>,
    pub cost: T,
}

impl<T: Real> TransportPlan<T> {
    pub fn mass(&self, units: u64) -> f64 {
        units as f64 / self.scale as f64
    }

    /// Row sums in integer units; each equals `scale / source_count` for a valid plan.
    pub fn row_units(&self) -> Vec<u64> {
        let mut r = vec![0; self.source_count];
        for &(i, _, w) in &self.entries {
            r[i] += w;
        }
        r
    }

    pub fn col_units(&self) -> Vec<u64> {
        let mut c = vec![0; self.target_count];
        for &(_, j, w) in &self.entries {
            c[j] += w;
        }
        c
    }

    /// Recomputes the transport cost from the entries and a cost matrix.
    pub fn recompute_cost(&self, cost: ArrayView2<T>) -> T {
        self.entries
            .iter()
            .map(|&(i, j, w)| T::of(w as f64) * cost[[i, j]])
            .sum::<T>()
            / T::of(self.scale as f64)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn lcm(a: usize, b: usize) -> Result<u64> {
    let (x, y) = (a as u64, b as u64);
    (x / gcd(x, y))
        .checked_mul(y)
        .ok_or(Error::LcmOverflow { a, b })
}

/// Exact W1 between the rows of `a` and the rows of `b` (uniform weights, Euclidean cost).
pub fn wasserstein1_exact<T: Real>(a: ArrayView2<T>, b: ArrayView2<T>) -> Result<(T, TransportPlan<T>)> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::InvalidArgument("empty point set".into()));
    }
    let cost = cost_matrix(a, b)?;
    let plan = solve_uniform_transport(cost.view(), DEFAULT_MAX_ARCS)?;
    Ok((plan.cost, plan))
}

#[derive(Clone, Copy)]
struct Entry<T> {
    dist: T,
    node: usize,
}

impl<T: Real> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Real> Eq for Entry<T> {}
impl<T: Real> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Entry<T> {
    // Max-heap order reversed: smallest distance first, then lowest node index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Solves the uniform transportation problem for an `a x b` cost matrix.
pub fn solve_uniform_transport<T: Real>(cost: ArrayView2<T>, max_arcs: usize) -> Result<TransportPlan<T>> {
    let (na, nb) = cost.dim();
    if na == 0 || nb == 0 {
        return Err(Error::InvalidArgument("empty point set".into()));
    }
    let arcs = na.saturating_mul(nb);
    if arcs > max_arcs {
        return Err(Error::TooLarge { arcs, limit: max_arcs });
    }
    if cost.iter().any(|c| !c.is_finite() || *c < T::zero()) {
        return Err(Error::InvalidArgument("costs must be finite and nonnegative".into()));
    }
    let scale = lcm(na, nb)?;
    let supply = scale / na as u64;
    let demand = scale / nb as u64;

    let src = na + nb;
    let snk = src + 1;
    let nodes = snk + 1;
    let mut supply_left = vec![supply; na];
    let mut demand_left = vec![demand; nb];
    let mut flow = vec![0u64; na * nb];
    // sources carrying flow into each target, for the residual backward arcs
    let mut support: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nb];
    let mut pot = vec![T::zero(); nodes];
    let mut dist = vec![T::infinity(); nodes];
    let mut prev = vec![usize::MAX; nodes];
    let mut done = vec![false; nodes];
    let mut heap = BinaryHeap::new();
    let mut shipped = 0u64;

    let reduced = |c: T, from: T, to: T| (c + from - to).max(T::zero());

    while shipped < scale {
        dist.fill(T::infinity());
        prev.fill(usize::MAX);
        done.fill(false);
        heap.clear();
        dist[src] = T::zero();
        heap.push(Entry { dist: T::zero(), node: src });
        while let Some(Entry { dist: d, node: v }) = heap.pop() {
            if done[v] {
                continue;
            }
            done[v] = true;
            if v == snk {
                break;
            }
            let mut relax = |w: usize, nd: T, heap: &mut BinaryHeap<Entry<T>>| {
                if nd < dist[w] {
                    dist[w] = nd;
                    prev[w] = v;
                    heap.push(Entry { dist: nd, node: w });
                }
            };
            if v == src {
                for i in 0..na {
                    if supply_left[i] > 0 && !done[i] {
                        relax(i, d + reduced(T::zero(), pot[src], pot[i]), &mut heap);
                    }
                }
            } else if v < na {
                let row = cost.row(v);
                for j in 0..nb {
                    let w = na + j;
                    if !done[w] {
                        relax(w, d + reduced(row[j], pot[v], pot[w]), &mut heap);
                    }
                }
            } else {
                let j = v - na;
                for &i in &support[j] {
                    if !done[i] {
                        relax(i, d + reduced(-cost[[i, j]], pot[v], pot[i]), &mut heap);
                    }
                }
                if demand_left[j] > 0 {
                    relax(snk, d + reduced(T::zero(), pot[v], pot[snk]), &mut heap);
                }
            }
        }
        if !done[snk] {
            return Err(Error::Certificate("sink unreachable in residual graph".into()));
        }
        let dt = dist[snk];
        for v in 0..nodes {
            pot[v] = pot[v] + dist[v].min(dt);
        }

        let mut path = Vec::new();
        let mut v = snk;
        while v != src {
            path.push(v);
            v = prev[v];
        }
        path.push(src);
        path.reverse();
        // path = src, i0, j0, i1, j1, ..., jk, snk
        let first = path[1];
        let last = path[path.len() - 2] - na;
        let mut delta = supply_left[first].min(demand_left[last]);
        for w in path[1..path.len() - 1].windows(2) {
            if w[0] >= na {
                // backward arc target -> source
                delta = delta.min(flow[w[1] * nb + (w[0] - na)]);
            }
        }
        supply_left[first] -= delta;
        demand_left[last] -= delta;
        for w in path[1..path.len() - 1].windows(2) {
            if w[0] < na {
                let (i, j) = (w[0], w[1] - na);
                flow[i * nb + j] += delta;
                support[j].insert(i);
            } else {
                let (i, j) = (w[1], w[0] - na);
                flow[i * nb + j] -= delta;
                if flow[i * nb + j] == 0 {
                    support[j].remove(&i);
                }
            }
        }
        shipped += delta;
    }

    let mut entries = Vec::new();
    for i in 0..na {
        for j in 0..nb {
            let w = flow[i * nb + j];
            if w > 0 {
                entries.push((i, j, w));
            }
        }
    }
    let plan_cost = entries
        .iter()
        .map(|&(i, j, w)| T::of(w as f64) * cost[[i, j]])
        .sum::<T>()
        / T::of(scale as f64);
    certify(cost, &flow, &pot, supply, demand, scale, plan_cost)?;
    Ok(TransportPlan {
        source_count: na,
        target_count: nb,
        scale,
        entries,
        cost: plan_cost,
    })
}

/// Checks dual feasibility, complementary slackness and a zero duality gap for
/// the duals `alpha_i = -pot[i]`, `beta_j = pot[a + j]`. Together these rule out
/// any negative-cost cycle in the residual graph.
fn certify<T: Real>(
    cost: ArrayView2<T>,
    flow: &[u64],
    pot: &[T],
    supply: u64,
    demand: u64,
    scale: u64,
    primal: T,
) -> Result<()> {
    let (na, nb) = cost.dim();
    let cmax = cost.iter().copied().fold(T::zero(), T::max);
    let tol = T::of(1e-1) * T::epsilon().sqrt() * (T::one() + cmax);
    for i in 0..na {
        for j in 0..nb {
            let rc = cost[[i, j]] + pot[i] - pot[na + j];
            if rc < -tol {
                return Err(Error::Certificate(format!("dual infeasible at ({i}, {j}): {rc}")));
            }
            if flow[i * nb + j] > 0 && rc > tol {
                return Err(Error::Certificate(format!("slackness violated at ({i}, {j}): {rc}")));
            }
        }
    }
    let s = T::of(supply as f64);
    let d = T::of(demand as f64);
    let dual = (pot[na..na + nb].iter().copied().sum::<T>() * d - pot[..na].iter().copied().sum::<T>() * s)
        / T::of(scale as f64);
    if (dual - primal).abs() > tol * (T::one() + primal.abs()) * T::of((na + nb) as f64) {
        return Err(Error::Certificate(format!("duality gap: primal {primal}, dual {dual}")));
    }
    Ok(())
}
