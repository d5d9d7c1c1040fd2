mod support;

use ndarray::{Array2, Axis};
use otgen::ot::{cost_matrix, solve_uniform_transport, wasserstein1_1d, wasserstein1_exact, wasserstein1_sinkhorn};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn points(max_n: usize, d: usize) -> impl Strategy<Value = Array2<f64>> {
    (1..=max_n).prop_flat_map(move |n| {
        proptest::collection::vec(-5.0f64..5.0, n * d).prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
    })
}

#[test]
fn exact_matches_polytope_vertices() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..150 {
        let (a, b, d) = (rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=3));
        let x = support::random_points(&mut rng, a, d);
        let y = support::random_points(&mut rng, b, d);
        let oracle = support::polytope_w1(&support::cost(x.view(), y.view()));
        let (w, _) = wasserstein1_exact(x.view(), y.view()).unwrap();
        assert!((w - oracle).abs() <= 1e-9, "{a}x{b}: {w} vs {oracle}");
    }
}

#[test]
fn plan_is_a_coupling() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let (a, b) = (rng.random_range(1..=30), rng.random_range(1..=30));
        let x = support::random_points(&mut rng, a, 2);
        let y = support::random_points(&mut rng, b, 2);
        let c = cost_matrix(x.view(), y.view()).unwrap();
        let plan = solve_uniform_transport(c.view(), usize::MAX).unwrap();
        assert!(plan.row_units().iter().all(|&r| r * a as u64 == plan.scale));
        assert!(plan.col_units().iter().all(|&r| r * b as u64 == plan.scale));
        assert!((plan.recompute_cost(c.view()) - plan.cost).abs() <= 1e-12 * (1.0 + plan.cost));
    }
}

#[test]
fn one_d_matches_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let (a, b) = (rng.random_range(1..=50), rng.random_range(1..=50));
        let xa: Vec<f64> = (0..a).map(|_| rng.random_range(-10.0..10.0)).collect();
        let xb: Vec<f64> = (0..b).map(|_| rng.random_range(-10.0..10.0)).collect();
        let col = |v: &[f64]| Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap();
        let (exact, _) = wasserstein1_exact(col(&xa).view(), col(&xb).view()).unwrap();
        let one = wasserstein1_1d(&xa, &xb).unwrap();
        assert!((exact - one).abs() <= 1e-9, "{exact} vs {one}");
    }
}

#[test]
fn sinkhorn_approaches_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = support::random_points(&mut rng, 20, 2);
    let y = support::random_points(&mut rng, 15, 2);
    let (exact, _) = wasserstein1_exact(x.view(), y.view()).unwrap();
    let res = wasserstein1_sinkhorn(x.view(), y.view(), 5e-2, 50_000, 1e-8).unwrap();
    assert!(res.converged);
    assert!(res.cost >= exact - 1e-9);
    assert!(res.cost - exact < 0.02 * exact.max(1.0), "{} vs {exact}", res.cost);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_axioms(x in points(6, 2), y in points(6, 2), z in points(6, 2)) {
        let w = |a: &Array2<f64>, b: &Array2<f64>| wasserstein1_exact(a.view(), b.view()).unwrap().0;
        let (xy, yx, xz, zy) = (w(&x, &y), w(&y, &x), w(&x, &z), w(&z, &y));
        prop_assert!(xy >= 0.0);
        prop_assert!((xy - yx).abs() <= 1e-9);
        prop_assert!(w(&x, &x).abs() <= 1e-12);
        prop_assert!(xy <= xz + zy + 1e-9);
    }

    #[test]
    fn translation_invariant(x in points(7, 3), y in points(7, 3), shift in proptest::collection::vec(-4.0f64..4.0, 3)) {
        let s = ndarray::Array1::from(shift);
        let (w0, _) = wasserstein1_exact(x.view(), y.view()).unwrap();
        let (w1, _) = wasserstein1_exact((&x + &s).view(), (&y + &s).view()).unwrap();
        prop_assert!((w0 - w1).abs() <= 1e-9);
    }

    #[test]
    fn duplicating_points_keeps_distance(x in points(5, 2), y in points(5, 2)) {
        let twice = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let (w0, _) = wasserstein1_exact(x.view(), y.view()).unwrap();
        let (w1, _) = wasserstein1_exact(twice.view(), y.view()).unwrap();
        prop_assert!((w0 - w1).abs() <= 1e-9);
    }

    #[test]
    fn one_d_is_symmetric(a in proptest::collection::vec(-5.0f64..5.0, 1..30), b in proptest::collection::vec(-5.0f64..5.0, 1..30)) {
        let ab = wasserstein1_1d(&a, &b).unwrap();
        let ba = wasserstein1_1d(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
    }
}
