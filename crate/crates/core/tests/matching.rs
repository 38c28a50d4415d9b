mod common;

use cflp::cfmatch::{build_counterfactual_table, gamma_from_percentile, percentile, MatchConfig, Matcher};
use cflp::split::TrainBatch;
use cflp::Matrix;
use common::{brute_force_match, distance_table, random_graph, random_matrix, random_treatment, rng};
use rand::Rng;

#[test]
fn matcher_equals_brute_force() {
    for inst in 0..20u64 {
        let mut r = rng(1000 + inst);
        let n = r.gen_range(5..60);
        let emb = random_matrix(n, r.gen_range(1..5), inst);
        let t = random_treatment(n, inst);
        let dist = distance_table(&emb);
        for pct in [10.0, 20.0, 30.0] {
            let cfg = MatchConfig::from_percentile(&emb, pct, inst).unwrap();
            let m = Matcher::new(&emb, &t, &cfg).unwrap();
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        let tq = t.treat(i, j);
                        assert_eq!(
                            m.find(i, j, tq),
                            brute_force_match(&dist, &t, cfg.gamma, i, j, tq),
                            "inst {inst} ({i},{j})"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn table_identical_across_worker_counts() {
    let g = random_graph(150, 0.05, 3);
    let emb = random_matrix(150, 4, 3);
    let t = random_treatment(150, 4);
    let cfg = MatchConfig::from_percentile(&emb, 20.0, 0).unwrap();
    let neg: Vec<(u32, u32)> =
        (0..100u32).map(|k| (k, k + 50)).filter(|&(a, b)| !g.has_edge(a as usize, b as usize)).collect();
    let batch = TrainBatch::new(g.edges(), &neg, |i, j| Ok(t.treat(i, j))).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| build_counterfactual_table(&batch, &emb, &t, &cfg, &g).unwrap())
    };
    assert_eq!(run(1), run(8));
}

#[test]
fn fallback_fraction_shrinks_as_gamma_grows() {
    let g = random_graph(120, 0.06, 9);
    let emb = random_matrix(120, 3, 9);
    let t = random_treatment(120, 10);
    let batch = TrainBatch::new(g.edges(), &[], |i, j| Ok(t.treat(i, j))).unwrap();
    let fractions: Vec<f64> = [5.0, 15.0, 30.0]
        .iter()
        .map(|&pct| {
            let cfg = MatchConfig::from_percentile(&emb, pct, 0).unwrap();
            build_counterfactual_table(&batch, &emb, &t, &cfg, &g).unwrap().fallback_fraction()
        })
        .collect();
    assert!(fractions.windows(2).all(|w| w[1] <= w[0]), "{fractions:?}");
}

#[test]
fn sampled_percentile_close_to_exact() {
    let n = 6000;
    let emb = random_matrix(n, 3, 77);
    let sampled = gamma_from_percentile(&emb, 20.0, 5).unwrap();
    let mut all = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            all.push(emb.row(i).iter().zip(emb.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
        }
    }
    let exact = percentile(&mut all, 20.0);
    assert!((sampled - exact).abs() / exact < 0.02, "sampled {sampled}, exact {exact}");
}

#[test]
fn percentile_interpolates_linearly() {
    // numpy.percentile([1, 2, 3, 4], 20) == 1.6
    assert!((percentile(&mut [4.0, 1.0, 3.0, 2.0], 20.0) - 1.6).abs() < 1e-15);
    let emb = Matrix::from_vec(2, 1, vec![0.0, 2.5]).unwrap();
    assert_eq!(gamma_from_percentile(&emb, 50.0, 0).unwrap(), 2.5);
}
