mod support;

use ndarray::Array2;
use otgen::classifier::{margin_train_loss, margins, MarginTable, MlpClassifier};
use otgen::graph::Split;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scores(seed: u64, n: usize, k: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, k), |_| rng.random_range(-3.0..3.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn margins_match_top_two_oracle(seed in 0u64..10_000, k in 2usize..6) {
        let s = scores(seed, 12, k);
        let labels: Vec<usize> = (0..12).map(|i| i % k).collect();
        let t = MarginTable::from_scores(s.clone(), &labels).unwrap();
        let want = support::margins_from_scores(&s);
        prop_assert!((&t.all_margins() - &want).iter().all(|v| v.abs() < 1e-15));
        for i in 0..12 {
            prop_assert_eq!(t.margins[i], want[[i, labels[i]]]);
        }
    }

    #[test]
    fn scaling_the_last_layer_scales_margins(seed in 0u64..10_000, layers in prop::sample::select(vec![1usize, 2, 4]), lambda in 0.01f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = support::random_points(&mut rng, 15, 3);
        let labels: Vec<usize> = (0..15).map(|i| i % 3).collect();
        let f = MlpClassifier::<f64>::init(3, 3, layers, 8, seed).unwrap();
        let a = margins(&f, z.view(), &labels).unwrap();
        let b = margins(&f.scaled(lambda), z.view(), &labels).unwrap();
        for (x, y) in a.margins.iter().zip(&b.margins) {
            prop_assert!((x * lambda - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn margins_are_invariant_to_shifting_all_scores(seed in 0u64..10_000, c in -5.0f64..5.0) {
        let s = scores(seed, 10, 3);
        let labels: Vec<usize> = (0..10).map(|i| i % 3).collect();
        let a = MarginTable::from_scores(s.clone(), &labels).unwrap();
        let b = MarginTable::from_scores(s + c, &labels).unwrap();
        for (x, y) in a.margins.iter().zip(&b.margins) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn margin_loss_is_monotone_in_gamma(seed in 0u64..10_000, g1 in 1e-3f64..2.0, g2 in 1e-3f64..2.0) {
        let s = scores(seed, 20, 3);
        let labels: Vec<usize> = (0..20).map(|i| i % 3).collect();
        let t = MarginTable::from_scores(s, &labels).unwrap();
        let split = Split::from_indices(20, (0..8).collect(), (8..20).collect(), 0).unwrap();
        let (lo, hi) = (g1.min(g2), g1.max(g2));
        prop_assert!(margin_train_loss(&t, &split, lo).unwrap() <= margin_train_loss(&t, &split, hi).unwrap());
    }
}
