mod common;

use cflp::eval::{auc, average_precision, hits_at_k, kendall_tau};
use common::random_scores;
use proptest::prelude::*;

proptest! {
    #[test]
    fn hits_non_decreasing_in_k(seed in 0u64..10_000) {
        let (pos, neg) = random_scores(seed);
        let h: Vec<f64> = (1..=neg.len()).map(|k| hits_at_k(&pos, &neg, k).unwrap()).collect();
        prop_assert!(h.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn auc_swaps_to_complement(seed in 0u64..10_000) {
        let (pos, neg) = random_scores(seed);
        let a = auc(&pos, &neg).unwrap();
        let b = auc(&neg, &pos).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ap_is_a_probability(seed in 0u64..10_000) {
        let (pos, neg) = random_scores(seed);
        let ap = average_precision(&pos, &neg).unwrap();
        prop_assert!(ap > 0.0 && ap <= 1.0 + 1e-12, "ap {}", ap);
    }

    #[test]
    fn metrics_invariant_to_monotone_rescaling(seed in 0u64..10_000) {
        let (pos, neg) = random_scores(seed);
        let f = |v: &[f64]| v.iter().map(|x| 3.0 * x + 1.0).collect::<Vec<_>>();
        let (p2, n2) = (f(&pos), f(&neg));
        prop_assert_eq!(auc(&pos, &neg).unwrap(), auc(&p2, &n2).unwrap());
        prop_assert_eq!(hits_at_k(&pos, &neg, 1).unwrap(), hits_at_k(&p2, &n2, 1).unwrap());
    }

    #[test]
    fn kendall_tau_is_antisymmetric(a in prop::collection::vec(-5.0f64..5.0, 2..12), seed in 0u64..100) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x * ((i as u64 + seed) % 3) as f64).collect();
        let neg: Vec<f64> = b.iter().map(|x| -x).collect();
        let t = kendall_tau(&a, &b).unwrap();
        prop_assert!((t + kendall_tau(&a, &neg).unwrap()).abs() < 1e-15);
        prop_assert!((-1.0..=1.0).contains(&t));
    }
}
