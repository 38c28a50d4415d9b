mod common;

use cflp::cfmatch::{build_counterfactual_table, CounterfactualTable, MatchConfig};
use cflp::nn::{encoder_forward, Arch, GraphOps, ModelParams};
use cflp::split::{sample_negatives, split_edges, EdgeSplit, TrainBatch};
use cflp::train::{finetune_decoder, predict, train_cflp, TrainConfig, TrainInputs};
use cflp::treatments::{kcore_treatment, louvain_treatment, TreatmentAssignment};
use cflp::{Graph, Matrix};
use common::{random_graph, random_matrix};

struct Fixture {
    x: Matrix,
    ops: GraphOps,
    split: EdgeSplit,
    treatment: TreatmentAssignment,
    cf: CounterfactualTable,
}

impl Fixture {
    fn new(seed: u64) -> Fixture {
        let g = random_graph(60, 0.12, seed);
        let x = random_matrix(60, 6, seed);
        let split = split_edges(&g, 0.1, 0.2, seed).unwrap();
        let treatment = louvain_treatment(&split.train_graph, seed).unwrap();
        let negs =
            sample_negatives(&split.train_graph, split.train_edges.len(), &split.heldout_negatives(), 99).unwrap();
        let batch = TrainBatch::new(&split.train_edges, &negs, |i, j| Ok(treatment.treat(i, j))).unwrap();
        let cfg = MatchConfig::from_percentile(&x, 20.0, seed).unwrap();
        let cf = build_counterfactual_table(&batch, &x, &treatment, &cfg, &split.train_graph).unwrap();
        let ops = GraphOps::new(&split.train_graph);
        Fixture { x, ops, split, treatment, cf }
    }

    fn inputs(&self) -> TrainInputs<'_> {
        TrainInputs { features: &self.x, ops: &self.ops, split: &self.split, treatment: &self.treatment, cf: &self.cf }
    }
}

fn config(arch: Arch) -> TrainConfig {
    TrainConfig { arch, hidden: 8, repr_dim: 8, epochs: 25, ft_epochs: 10, seed: 5, ..Default::default() }
}

#[test]
fn zero_weights_reproduce_the_factual_only_build() {
    let f = Fixture::new(1);
    for arch in [Arch::Gcn, Arch::Sage, Arch::JkNet] {
        let cfg = TrainConfig { alpha: 0.0, beta: 0.0, ..config(arch) };
        let with_cf = train_cflp::<true>(f.inputs(), &cfg).unwrap();
        let without = train_cflp::<false>(f.inputs(), &cfg).unwrap();
        assert_eq!(with_cf.params, without.params, "{arch}");
        assert_eq!(with_cf.best_epoch, without.best_epoch);
        for (a, b) in with_cf.trace.iter().zip(&without.trace) {
            assert_eq!(a.l_f, b.l_f);
            assert_eq!(a.total, b.total);
            assert_eq!(a.valid_hits, b.valid_hits);
        }
    }
}

#[test]
fn training_is_deterministic_across_worker_counts() {
    let f = Fixture::new(2);
    let cfg = config(Arch::JkNet);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            let out = train_cflp::<true>(f.inputs(), &cfg).unwrap();
            (out.params, out.trace)
        })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn total_loss_bookkeeping() {
    let f = Fixture::new(3);
    let cfg = TrainConfig { alpha: 0.3, beta: 1.7, ..config(Arch::Gcn) };
    let out = train_cflp::<true>(f.inputs(), &cfg).unwrap();
    assert_eq!(out.trace.len(), cfg.epochs);
    for r in &out.trace {
        assert!((r.total - (r.l_f + 0.3 * r.l_cf + 1.7 * r.l_disc)).abs() < 1e-9);
    }
}

#[test]
fn finetune_freezes_encoder() {
    let f = Fixture::new(4);
    let cfg = config(Arch::Sage);
    let trained = train_cflp::<true>(f.inputs(), &cfg).unwrap().params;
    let (tuned, trace) = finetune_decoder(&trained, f.inputs(), &cfg).unwrap();
    assert_eq!(trace.len(), cfg.ft_epochs);
    for (a, b) in trained.encoder.iter().zip(&tuned.encoder) {
        let bytes = |m: &Matrix| m.data().iter().flat_map(|x| x.to_le_bytes()).collect::<Vec<u8>>();
        assert_eq!(bytes(a), bytes(b));
    }
    let one = TrainConfig { ft_epochs: 1, ..cfg };
    let (_, trace) = finetune_decoder(&trained, f.inputs(), &one).unwrap();
    assert_eq!(trace.len(), 1);
}

#[test]
fn two_cliques_become_separable() {
    let mut edges = Vec::new();
    for base in [0, 6] {
        for i in 0..6 {
            for j in i + 1..6 {
                edges.push((base + i, base + j));
            }
        }
    }
    let g = Graph::from_edges(12, edges).unwrap();
    let split = EdgeSplit {
        train_edges: g.edges().to_vec(),
        valid_pos: vec![],
        valid_neg: vec![],
        test_pos: vec![],
        test_neg: vec![],
        train_graph: g.clone(),
    };
    let x = Matrix::identity(12);
    let treatment = kcore_treatment(&g);
    let cf = CounterfactualTable::default();
    let ops = GraphOps::new(&g);
    let inputs = TrainInputs { features: &x, ops: &ops, split: &split, treatment: &treatment, cf: &cf };
    let cfg = TrainConfig { arch: Arch::Gcn, hidden: 16, repr_dim: 16, epochs: 200, ..Default::default() };
    let out = train_cflp::<false>(inputs, &cfg).unwrap();
    let last = out.trace.last().unwrap().l_f;
    assert!(last < 0.1, "final factual loss {last}");
}

#[test]
fn encoder_is_permutation_equivariant() {
    use rand::seq::SliceRandom;
    for arch in [Arch::Gcn, Arch::Sage, Arch::JkNet] {
        let g = random_graph(30, 0.15, 8);
        let x = random_matrix(30, 5, 8);
        let mut perm: Vec<usize> = (0..30).collect();
        perm.shuffle(&mut common::rng(8));
        let pg = Graph::from_edges(30, g.edges().iter().map(|&(i, j)| (perm[i as usize], perm[j as usize]))).unwrap();
        let mut px = Matrix::zeros(30, 5);
        for (v, &pv) in perm.iter().enumerate() {
            px.row_mut(pv).copy_from_slice(x.row(v));
        }
        let p = ModelParams::init(arch, 5, 6, 6, 1).unwrap();
        let (z, _) = encoder_forward(&p, &GraphOps::new(&g), &x).unwrap();
        let (pz, _) = encoder_forward(&p, &GraphOps::new(&pg), &px).unwrap();
        for (v, &pv) in perm.iter().enumerate() {
            for (a, b) in z.row(v).iter().zip(pz.row(pv)) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{arch} node {v}");
            }
        }
    }
}

#[test]
fn predictions_are_elementwise() {
    let f = Fixture::new(6);
    let cfg = config(Arch::Gcn);
    let params = train_cflp::<true>(f.inputs(), &cfg).unwrap().params;
    let pairs = vec![(0, 1), (2, 3), (0, 1), (4, 9)];
    let t = vec![true, false, true, false];
    let p = predict(&params, &f.ops, &f.x, &pairs, &t).unwrap();
    assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    assert_eq!(p[0], p[2]);
    let rev = predict(&params, &f.ops, &f.x, &[(4, 9), (2, 3)], &[false, false]).unwrap();
    assert_eq!((rev[0], rev[1]), (p[3], p[1]));
    assert!(predict(&params, &f.ops, &f.x, &[(0, 60)], &[true]).is_err());
}
