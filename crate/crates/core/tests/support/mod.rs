//! Reference oracles shared by the integration and acceptance tests. Each one is
//! written from the definitions, without calling the library routine it checks.
#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn cost(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| {
        euclid(a.row(i).as_slice().unwrap(), b.row(j).as_slice().unwrap())
    })
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random_range(-3.0..3.0))
}

/// Flow on the cells of a spanning tree of K_{a,b} with supplies `b` per row and
/// demands `a` per column (integer units), or None if the cells contain a cycle.
fn tree_flow(a: usize, b: usize, cells: &[(usize, usize)]) -> Option<Vec<i64>> {
    let mut supply: Vec<i64> = vec![b as i64; a];
    let mut demand: Vec<i64> = vec![a as i64; b];
    let mut flow = vec![0i64; cells.len()];
    let mut alive = vec![true; cells.len()];
    for _ in 0..cells.len() {
        let mut row_deg = vec![0usize; a];
        let mut col_deg = vec![0usize; b];
        for (k, &(i, j)) in cells.iter().enumerate() {
            if alive[k] {
                row_deg[i] += 1;
                col_deg[j] += 1;
            }
        }
        let leaf = cells.iter().enumerate().find(|&(k, &(i, j))| alive[k] && (row_deg[i] == 1 || col_deg[j] == 1));
        let (k, &(i, j)) = leaf?;
        // a leaf row ships everything it has left; a leaf column takes what it still needs
        let f = if row_deg[i] == 1 { supply[i] } else { demand[j] };
        flow[k] = f;
        supply[i] -= f;
        demand[j] -= f;
        alive[k] = false;
    }
    if supply.iter().chain(&demand).any(|&r| r != 0) {
        return None;
    }
    Some(flow)
}

/// W1 between uniform measures as the minimum over every vertex of the transportation
/// polytope. Vertices are the feasible basic solutions on spanning trees of K_{a,b}.
pub fn polytope_w1(cost: &Array2<f64>) -> f64 {
    let (a, b) = cost.dim();
    let all: Vec<(usize, usize)> = (0..a).flat_map(|i| (0..b).map(move |j| (i, j))).collect();
    let r = a + b - 1;
    let scale = (a * b) as f64;
    let mut best = f64::INFINITY;
    let mut vertices = 0usize;
    let mut pick: Vec<usize> = (0..r).collect();
    loop {
        let cells: Vec<(usize, usize)> = pick.iter().map(|&k| all[k]).collect();
        if let Some(flow) = tree_flow(a, b, &cells) {
            if flow.iter().all(|&f| f >= 0) {
                vertices += 1;
                let c: f64 = cells.iter().zip(&flow).map(|(&(i, j), &f)| f as f64 * cost[[i, j]]).sum();
                best = best.min(c / scale);
            }
        }
        let mut t = r;
        while t > 0 && pick[t - 1] == all.len() - r + t - 1 {
            t -= 1;
        }
        if t == 0 {
            break;
        }
        pick[t - 1] += 1;
        for s in t..r {
            pick[s] = pick[s - 1] + 1;
        }
    }
    assert!(vertices > 0, "transportation polytope has no vertex");
    best
}

/// Epsilon from the tail `exp(-2 e^2 (m+u-1/2) (1 - 1/(2 max)) / (m u beta^2))` set equal
/// to delta and solved by bisection. This is the tail whose inversion is the closed form
/// used by the bounds (the correction factor enters the square root inverted).
pub fn epsilon_by_bisection(m: usize, u: usize, delta: f64) -> f64 {
    let (m, u) = (m as f64, u as f64);
    let beta = 1.0 / m + 1.0 / u;
    let tail = |e: f64| (-2.0 * e * e * (m + u - 0.5) * (1.0 - 1.0 / (2.0 * m.max(u))) / (m * u * beta * beta)).exp();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while tail(hi) > delta {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Dense `D^{-1/2} (A + I) D^{-1/2}` with `D` the degrees of `A + I`.
pub fn dense_normalized_adjacency(n: usize, edges: &[(usize, usize)]) -> Array2<f64> {
    let mut a = Array2::<f64>::eye(n);
    for &(i, j) in edges {
        a[[i, j]] = 1.0;
        a[[j, i]] = 1.0;
    }
    let d: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
    Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] / (d[i] * d[j]).sqrt())
}

/// Spearman correlation from O(n^2) tie-aware ranks and the plain Pearson formula.
pub fn spearman_naive(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&a| {
                let below = v.iter().filter(|&&b| b < a).count() as f64;
                let equal = v.iter().filter(|&&b| b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Top-two margin of every node under every label, from a score matrix.
pub fn margins_from_scores(s: &Array2<f64>) -> Array2<f64> {
    Array2::from_shape_fn(s.dim(), |(i, y)| {
        let other = (0..s.ncols()).filter(|&c| c != y).map(|c| s[[i, c]]).fold(f64::NEG_INFINITY, f64::max);
        s[[i, y]] - other
    })
}

/// Largest `|rho(z_i, c) - rho(z_j, c)| / ||z_i - z_j||` over distinct-point pairs of `nodes`.
pub fn max_rate(z: &Array2<f64>, margins: &Array2<f64>, nodes: &[usize], c: usize) -> f64 {
    let mut best = 0.0f64;
    for (a, &i) in nodes.iter().enumerate() {
        for &j in &nodes[a + 1..] {
            let d = euclid(z.row(i).as_slice().unwrap(), z.row(j).as_slice().unwrap());
            if d > 1e-12 {
                best = best.max((margins[[i, c]] - margins[[j, c]]).abs() / d);
            }
        }
    }
    best
}

/// Every `m`-subset of `0..n` as a bitmask.
pub fn subsets(n: usize, m: usize) -> Vec<u32> {
    (0u32..1 << n).filter(|s| s.count_ones() as usize == m).collect()
}

/// Class-wise bound at percentile 1 with the expectation taken over every split of
/// `0..n` into `m` train nodes; `train` is the split that fixes the per-class rates.
pub fn classwise_expectation(
    z: &Array2<f64>,
    scores: &Array2<f64>,
    labels: &[usize],
    k: usize,
    train: &[usize],
    gamma: f64,
    delta: f64,
) -> f64 {
    let n = labels.len();
    let m = train.len();
    let u = n - m;
    let test: Vec<usize> = (0..n).filter(|i| !train.contains(i)).collect();
    let margins = margins_from_scores(scores);
    let rates: Vec<f64> = (0..k)
        .map(|c| {
            let mut nodes: Vec<usize> = train.iter().copied().filter(|&i| labels[i] == c).collect();
            nodes.extend(&test);
            max_rate(z, &margins, &nodes, c)
        })
        .collect();
    let masks = subsets(n, m);
    let mut transport = vec![0.0; k];
    let mut proportion = 0.0;
    for &mask in &masks {
        for c in 0..k {
            let tr: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1 && labels[i] == c).collect();
            let te: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 0 && labels[i] == c).collect();
            proportion += (te.len() as f64 / u as f64 - tr.len() as f64 / m as f64).abs();
            if tr.is_empty() || te.is_empty() {
                continue;
            }
            let rows = |idx: &[usize]| z.select(ndarray::Axis(0), idx);
            let w = polytope_w1(&cost(rows(&tr).view(), rows(&te).view()));
            transport[c] += tr.len() as f64 / m as f64 * w;
        }
    }
    let t = masks.len() as f64;
    let sum: f64 = (0..k).map(|c| rates[c] / gamma * transport[c] / t).sum();
    sum + proportion / t + epsilon_by_bisection(m, u, delta)
}

/// Central differences of `f` with respect to every entry of `p`.
pub fn numeric_gradient(p: &Array2<f64>, h: f64, mut f: impl FnMut(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut g = Array2::zeros(p.dim());
    let mut q = p.clone();
    for idx in 0..p.len() {
        let (r, c) = (idx / p.ncols(), idx % p.ncols());
        let v = p[[r, c]];
        q[[r, c]] = v + h;
        let up = f(&q);
        q[[r, c]] = v - h;
        let down = f(&q);
        q[[r, c]] = v;
        g[[r, c]] = (up - down) / (2.0 * h);
    }
    g
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let norm = |m: &Array2<f64>| m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diff = norm(&(a - b));
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `sqrt(deg + 1)` for each node.
pub fn degree_stat(n: usize, edges: &[(usize, usize)]) -> Array1<f64> {
    let mut d = vec![1.0; n];
    for &(i, j) in edges {
        d[i] += 1.0;
        d[j] += 1.0;
    }
    Array1::from_iter(d.into_iter().map(f64::sqrt))
}

/// Random connected 10-node graph with 4 features and 3 classes.
pub fn ten_node_graph(seed: u64) -> otgen::Graph64 {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 10;
    let mut edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    for i in 0..n {
        for j in i + 2..n {
            if rng.random::<f64>() < 0.25 {
                edges.push((i, j));
            }
        }
    }
    let x = random_points(&mut rng, n, 4);
    let labels = (0..n).map(|i| i % 3).collect();
    otgen::Graph64::new(n, edges, x, labels, 3).unwrap()
}

/// Worst relative error between analytic and central-difference gradients of the GCN
/// training loss over every layer weight and the readout.
pub fn gcn_gradient_error(seed: u64, layers: usize, h: f64) -> f64 {
    use otgen::encoders::{gcn_objective, GcnModel};
    use rand::SeedableRng;
    let g = ten_node_graph(seed);
    let adj = otgen::graph::build_normalized_adjacency(&g);
    let x = g.features().view();
    let model = GcnModel::<f64>::init(4, layers, 5, seed + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
    let readout = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
    let train = [0, 2, 3, 5, 7, 8];
    let labels = g.labels();
    let (_, grads, grad_readout) = gcn_objective(&adj, x, &model.weights, &readout, &train, labels).unwrap();
    let mut worst = 0.0f64;
    for t in 0..layers {
        let num = numeric_gradient(&model.weights[t], h, |w| {
            let mut ws = model.weights.clone();
            ws[t] = w.clone();
            gcn_objective(&adj, x, &ws, &readout, &train, labels).unwrap().0
        });
        worst = worst.max(relative_error(&grads[t], &num));
    }
    let num = numeric_gradient(&readout, h, |r| gcn_objective(&adj, x, &model.weights, r, &train, labels).unwrap().0);
    worst.max(relative_error(&grad_readout, &num))
}

/// Same check for the MLP classifier (weights and biases) on 10 embedded nodes.
pub fn mlp_gradient_error(seed: u64, layers: usize, h: f64) -> f64 {
    use otgen::classifier::{mlp_objective, MlpClassifier};
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = random_points(&mut rng, 10, 4);
    let labels: Vec<usize> = (0..10).map(|i| i % 3).collect();
    let mut clf = MlpClassifier::<f64>::init(4, 3, layers, 6, seed + 1).unwrap();
    for b in &mut clf.biases {
        b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    let rows: Vec<usize> = (0..10).collect();
    let (_, dws, dbs) = mlp_objective(&clf, z.view(), &rows, &labels).unwrap();
    let mut worst = 0.0f64;
    for t in 0..layers {
        let num = numeric_gradient(&clf.weights[t], h, |w| {
            let mut c = clf.clone();
            c.weights[t] = w.clone();
            mlp_objective(&c, z.view(), &rows, &labels).unwrap().0
        });
        worst = worst.max(relative_error(&dws[t], &num));
        let num = numeric_gradient(&clf.biases[t], h, |b| {
            let mut c = clf.clone();
            c.biases[t] = b.clone();
            mlp_objective(&c, z.view(), &rows, &labels).unwrap().0
        });
        worst = worst.max(relative_error(&dbs[t], &num));
    }
    worst
}

fn random_sbm(rng: &mut ChaCha8Rng, n_range: std::ops::RangeInclusive<usize>) -> otgen::Graph64 {
    let n = rng.random_range(n_range);
    let k = rng.random_range(2..=4usize);
    let mut blocks = vec![n / k; k];
    blocks[0] += n - (n / k) * k;
    let p_in = rng.random_range(0.05..0.3);
    let p_out = rng.random_range(0.005..0.05);
    let dim = rng.random_range(2..=8usize);
    let shift = rng.random_range(0.5..2.0);
    otgen::graph::generate_sbm(&blocks, p_in, p_out, dim, shift, rng.random()).unwrap()
}

/// One randomized global-bound configuration at percentile 1.
pub struct GlobalCase {
    pub gap: f64,
    pub bound: f64,
    pub vacuous: bool,
    pub label: String,
}

/// SBM with at most 200 nodes, SGC or trained GCN of depth 1..=8, classifier with
/// 1, 2 or 4 layers, gamma at the median positive train margin.
pub fn global_case(seed: u64) -> GlobalCase {
    use otgen::bounds::global_bound;
    use otgen::classifier::{margin_train_loss, margins, select_gamma, train_classifier, zero_one_test_loss, MlpTrainConfig};
    use otgen::encoders::{encode, EncoderConfig, EncoderKind};
    use otgen::linalg::Distances;
    use otgen::ot::OtOptions;
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_sbm(&mut rng, 20..=200);
    let adj = otgen::graph::build_normalized_adjacency(&g);
    let split = otgen::graph::sample_split(g.num_nodes(), 0.3, rng.random()).unwrap();
    let kind = if rng.random::<bool>() { EncoderKind::Sgc } else { EncoderKind::Gcn };
    let depth = rng.random_range(1..=8usize);
    let layers = [1, 2, 4][rng.random_range(0..3usize)];
    let enc_cfg = EncoderConfig { kind, hidden: 16, epochs: 60, lr: 0.01, seed: rng.random() };
    let z = encode(&g, &adj, &split, depth, &enc_cfg).unwrap().embeddings.z;
    let z_train = z.select(ndarray::Axis(0), &split.train);
    let y_train: Vec<usize> = split.train.iter().map(|&i| g.labels()[i]).collect();
    let clf_cfg = MlpTrainConfig { layers, hidden: 16, epochs: 100, lr: 0.01, seed: rng.random() };
    let clf = train_classifier(z_train.view(), &y_train, g.num_classes(), &clf_cfg).unwrap();
    let table = margins(&clf, z.view(), g.labels()).unwrap();
    let gamma = select_gamma(&table, &split, 0.5).unwrap();
    let gb = global_bound(&Distances::new(z.view()), &table, &split, gamma, 1.0, &OtOptions::default()).unwrap();
    let gap = zero_one_test_loss(&table, &split) - margin_train_loss(&table, &split, gamma).unwrap();
    GlobalCase {
        gap,
        bound: gb.bound,
        vacuous: gb.vacuous,
        label: format!("seed {seed}: N={} {kind} depth {depth}, {layers}-layer clf", g.num_nodes()),
    }
}

/// Library class-wise bound with every split enumerated, and the oracle expectation.
pub fn classwise_exhaustive_case(seed: u64) -> (f64, f64) {
    use otgen::bounds::classwise_bound;
    use otgen::classifier::MarginTable;
    use otgen::graph::{enumerate_splits, Split};
    use otgen::linalg::Distances;
    use otgen::ot::OtOptions;
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..=8usize);
    let k = rng.random_range(2..=3usize).min(n / 2);
    let m = rng.random_range(k..n);
    // the first k nodes carry labels 0..k and sit in train, so every class has a train node
    let labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    let z = random_points(&mut rng, n, 2);
    let scores = Array2::from_shape_fn((n, k), |_| rng.random_range(-2.0..2.0));
    let gamma = rng.random_range(0.1..1.0);
    let delta = rng.random_range(0.01..0.5);
    let mut train: Vec<usize> = (0..k).collect();
    let mut rest: Vec<usize> = (k..n).collect();
    for _ in k..m {
        let pick = rng.random_range(0..rest.len());
        train.push(rest.remove(pick));
    }
    let split = Split::from_indices(n, train.clone(), rest, 0).unwrap();
    let table = MarginTable::from_scores(scores.clone(), &labels).unwrap();
    let all = table.all_margins();
    let perms = enumerate_splits(n, m);
    let lib = classwise_bound(
        &Distances::new(z.view()),
        all.view(),
        &labels,
        &split,
        gamma,
        1.0,
        &perms,
        delta,
        &OtOptions::default(),
    )
    .unwrap()
    .bound;
    let oracle = classwise_expectation(&z, &scores, &labels, k, &train, gamma, delta);
    (lib, oracle)
}

/// Measured W between random node subsets after `depth` SGC or trained-GCN layers,
/// and the matching depth envelope.
pub fn envelope_case(seed: u64, gcn: bool) -> (f64, f64, String) {
    use otgen::encoders::{gcn_forward, sgc_embed, train_gcn_with, GcnTrainConfig};
    use otgen::spectral::{degree_w1, depth_constants, gcn_depth_envelope, sgc_depth_envelope};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_sbm(&mut rng, 10..=80);
    let n = g.num_nodes();
    let adj = otgen::graph::build_normalized_adjacency(&g);
    let x = g.features().view();
    let summary = depth_constants(&adj, x).unwrap();
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(&mut rng);
    let a = rng.random_range(1..n);
    let b = rng.random_range(1..=n - a);
    let (s, t) = (nodes[..a].to_vec(), nodes[a..a + b].to_vec());
    let w_deg = degree_w1(&g, &s, &t).unwrap();
    let (z, envelope, depth) = if gcn {
        let depth = rng.random_range(1..=6usize);
        let split = otgen::graph::sample_split(n, 0.3, rng.random()).unwrap();
        let cfg = GcnTrainConfig { layers: depth, hidden: 8, epochs: 60, lr: 0.01, seed: rng.random() };
        let model = train_gcn_with(&adj, x, g.labels(), g.num_classes(), &split, &cfg).unwrap();
        let z = gcn_forward(&adj, x, &model).unwrap().pop().unwrap().z;
        (z, gcn_depth_envelope(&summary, w_deg, depth, model.beta()), depth)
    } else {
        let depth = rng.random_range(1..=10usize);
        let z = sgc_embed(&adj, x, depth).unwrap().z;
        (z, sgc_depth_envelope(&summary, w_deg, depth), depth)
    };
    let rows = |idx: &[usize]| z.select(ndarray::Axis(0), idx);
    let (w, _) = otgen::ot::wasserstein1_exact(rows(&s).view(), rows(&t).view()).unwrap();
    (w, envelope, format!("seed {seed}: N={n} |S|={a} |T|={b} depth {depth}"))
}
