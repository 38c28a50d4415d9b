use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;

use super::{compact_labels, TreatmentAssignment};

/// Smallest modularity gain that justifies moving a node.
const MIN_GAIN: f64 = 1e-7;

/// Weighted graph used across aggregation levels. `loops[c]` is the diagonal
/// entry `A_cc` (twice the internal edge weight of a super-node).
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    loops: Vec<f64>,
}

impl Level {
    fn from_graph(graph: &Graph) -> Level {
        let adj =
            (0..graph.num_nodes()).map(|v| graph.neighbors(v).iter().map(|&u| (u as usize, 1.0)).collect()).collect();
        Level { adj, loops: vec![0.0; graph.num_nodes()] }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn strength(&self, v: usize) -> f64 {
        self.adj[v].iter().map(|&(_, w)| w).sum::<f64>() + self.loops[v]
    }

    /// One local-moving phase. Returns the community of every node and
    /// whether any node moved.
    fn local_moves(&self, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
        let n = self.len();
        let k: Vec<f64> = (0..n).map(|v| self.strength(v)).collect();
        let m2: f64 = k.iter().sum();
        let mut comm: Vec<usize> = (0..n).collect();
        let mut tot = k.clone();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);

        let mut links = vec![0.0f64; n];
        let mut seen = vec![false; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut moved_any = false;
        loop {
            let mut moved = false;
            for &v in &order {
                let own = comm[v];
                touched.clear();
                for &(u, w) in &self.adj[v] {
                    let c = comm[u];
                    if !seen[c] {
                        seen[c] = true;
                        touched.push(c);
                    }
                    links[c] += w;
                }
                tot[own] -= k[v];
                let gain = |c: usize, links: &[f64]| links[c] - tot[c] * k[v] / m2;
                let stay = gain(own, &links);
                let mut best = own;
                let mut best_gain = stay;
                touched.sort_unstable();
                for &c in &touched {
                    let g = gain(c, &links);
                    if g > best_gain {
                        best = c;
                        best_gain = g;
                    }
                }
                if best != own && 2.0 * (best_gain - stay) / m2 <= MIN_GAIN {
                    best = own;
                }
                tot[best] += k[v];
                if best != own {
                    comm[v] = best;
                    moved = true;
                }
                for &c in &touched {
                    links[c] = 0.0;
                    seen[c] = false;
                }
            }
            if !moved {
                break;
            }
            moved_any = true;
        }
        (comm, moved_any)
    }

    fn aggregate(&self, comm: &[usize]) -> (Level, Vec<usize>) {
        let labels = compact_labels(comm);
        let c = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); c];
        let mut loops = vec![0.0; c];
        for v in 0..self.len() {
            let cv = labels[v] as usize;
            loops[cv] += self.loops[v];
            for &(u, w) in &self.adj[v] {
                let cu = labels[u] as usize;
                if cu == cv {
                    loops[cv] += w;
                } else {
                    *rows[cv].entry(cu).or_insert(0.0) += w;
                }
            }
        }
        let adj = rows.into_iter().map(|r| r.into_iter().collect()).collect();
        (Level { adj, loops }, labels.into_iter().map(|l| l as usize).collect())
    }
}

/// Multi-level Louvain at resolution 1. The visit order at each level is a
/// seeded shuffle; labels are compacted to `0..C` by first appearance.
pub fn louvain(graph: &Graph, seed: u64) -> Result<Vec<u32>> {
    if graph.num_edges() == 0 {
        return Err(Error::Degenerate("louvain needs at least one edge".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = Level::from_graph(graph);
    let mut membership: Vec<usize> = (0..graph.num_nodes()).collect();
    loop {
        let (comm, moved) = level.local_moves(&mut rng);
        if !moved {
            break;
        }
        let (next, map) = level.aggregate(&comm);
        for m in membership.iter_mut() {
            *m = map[*m];
        }
        if next.len() == level.len() {
            break;
        }
        level = next;
    }
    Ok(compact_labels(&membership))
}

pub fn louvain_treatment(graph: &Graph, seed: u64) -> Result<TreatmentAssignment> {
    Ok(TreatmentAssignment::ClusterLabels { labels: louvain(graph, seed)? })
}

/// Newman modularity of a node partition at resolution 1.
pub fn modularity(graph: &Graph, labels: &[u32]) -> Result<f64> {
    let n = graph.num_nodes();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} nodes", labels.len())));
    }
    if graph.num_edges() == 0 {
        return Err(Error::Degenerate("modularity is undefined without edges".into()));
    }
    let m2 = 2.0 * graph.num_edges() as f64;
    let c = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let mut internal = vec![0.0; c];
    let mut tot = vec![0.0; c];
    for v in 0..n {
        let l = labels[v] as usize;
        tot[l] += graph.degree(v) as f64;
        internal[l] += graph.neighbors(v).iter().filter(|&&u| labels[u as usize] as usize == l).count() as f64;
    }
    Ok(internal.iter().zip(&tot).map(|(i, t)| i / m2 - (t / m2) * (t / m2)).sum())
}
