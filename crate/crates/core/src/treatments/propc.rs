use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;

use super::{compact_labels, TreatmentAssignment};

/// Asynchronous label propagation. Every node starts with its own index as
/// label; each sweep visits nodes in a freshly shuffled order and moves each
/// one to the most frequent label among its neighbors (smallest label on
/// ties). Returns the raw labels and the number of sweeps performed.
pub fn label_propagation(graph: &Graph, seed: u64, max_iters: usize) -> (Vec<usize>, usize) {
    let n = graph.num_nodes();
    let mut labels: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut counts = vec![0u32; n];
    let mut touched = Vec::new();
    let mut sweeps = 0;
    while sweeps < max_iters {
        sweeps += 1;
        order.shuffle(&mut rng);
        let mut changed = false;
        for &v in &order {
            let nbrs = graph.neighbors(v);
            if nbrs.is_empty() {
                continue;
            }
            touched.clear();
            for &u in nbrs {
                let l = labels[u as usize];
                if counts[l] == 0 {
                    touched.push(l);
                }
                counts[l] += 1;
            }
            let mut best = usize::MAX;
            let mut best_count = 0;
            for &l in &touched {
                if counts[l] > best_count || (counts[l] == best_count && l < best) {
                    best = l;
                    best_count = counts[l];
                }
            }
            for &l in &touched {
                counts[l] = 0;
            }
            if best != labels[v] {
                labels[v] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (labels, sweeps)
}

pub fn propc_treatment(graph: &Graph, seed: u64, max_iters: usize) -> Result<TreatmentAssignment> {
    if graph.num_edges() == 0 {
        return Err(Error::Degenerate("label propagation needs at least one edge".into()));
    }
    let (labels, _) = label_propagation(graph, seed, max_iters);
    Ok(TreatmentAssignment::ClusterLabels { labels: compact_labels(&labels) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bridged_triangles() -> Graph {
        Graph::from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]).unwrap()
    }

    #[test]
    fn bridged_triangles_split_for_most_seeds() {
        // Simulating 1e5 random sweep schedules gives two outcomes only: one
        // label per triangle (about 2/3 of runs) or a single label, never more
        // than 4 sweeps.
        let g = bridged_triangles();
        let mut split = 0;
        for seed in 0..400 {
            let (labels, sweeps) = label_propagation(&g, seed, 100);
            assert!(sweeps <= 5, "seed {seed} took {sweeps} sweeps");
            let l = compact_labels(&labels);
            if l == [0, 0, 0, 1, 1, 1] {
                split += 1;
            } else {
                assert_eq!(l, [0; 6], "seed {seed}");
            }
        }
        assert!(split > 220, "{split}/400 seeds split the triangles");
    }

    #[test]
    fn complete_graph_collapses() {
        let mut e = Vec::new();
        for i in 0..5 {
            for j in i + 1..5 {
                e.push((i, j));
            }
        }
        let g = Graph::from_edges(5, e).unwrap();
        for seed in 0..50 {
            let t = propc_treatment(&g, seed, 100).unwrap();
            assert_eq!(t.labels().unwrap(), &[0; 5]);
        }
    }

    #[test]
    fn zero_iterations_keep_initial_labels() {
        let (labels, sweeps) = label_propagation(&bridged_triangles(), 1, 0);
        assert_eq!(labels, (0..6).collect::<Vec<_>>());
        assert_eq!(sweeps, 0);
    }

    #[test]
    fn edgeless_is_degenerate() {
        assert!(propc_treatment(&Graph::from_edges(2, []).unwrap(), 0, 10).is_err());
    }
}
