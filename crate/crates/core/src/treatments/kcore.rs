use crate::graph::Graph;

use super::TreatmentAssignment;

/// Core number of every node via bucket peeling in `O(N + E)`.
pub fn core_numbers(graph: &Graph) -> Vec<u32> {
    let n = graph.num_nodes();
    let mut degree: Vec<usize> = (0..n).map(|v| graph.degree(v)).collect();
    let max_deg = degree.iter().copied().max().unwrap_or(0);

    // Nodes sorted by degree, with bucket start offsets.
    let mut bin = vec![0usize; max_deg + 1];
    for &d in &degree {
        bin[d] += 1;
    }
    let mut start = 0;
    for b in bin.iter_mut() {
        let count = *b;
        *b = start;
        start += count;
    }
    let mut pos = vec![0usize; n];
    let mut order = vec![0usize; n];
    for v in 0..n {
        pos[v] = bin[degree[v]];
        order[pos[v]] = v;
        bin[degree[v]] += 1;
    }
    for d in (1..=max_deg).rev() {
        bin[d] = bin[d - 1];
    }
    bin[0] = 0;

    for idx in 0..n {
        let v = order[idx];
        for &u in graph.neighbors(v) {
            let u = u as usize;
            if degree[u] > degree[v] {
                let du = degree[u];
                let pu = pos[u];
                let pw = bin[du];
                let w = order[pw];
                if u != w {
                    order.swap(pu, pw);
                    pos[u] = pw;
                    pos[w] = pu;
                }
                bin[du] += 1;
                degree[u] -= 1;
            }
        }
    }
    degree.into_iter().map(|d| d as u32).collect()
}

/// Cluster label of each node is its core number.
pub fn kcore_treatment(graph: &Graph) -> TreatmentAssignment {
    TreatmentAssignment::ClusterLabels { labels: core_numbers(graph) }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Peels nodes of degree < k until none remain, for increasing k.
    fn peel_oracle(graph: &Graph) -> Vec<u32> {
        let n = graph.num_nodes();
        let mut core = vec![0u32; n];
        for k in 1..=n {
            let mut alive = vec![true; n];
            loop {
                let mut changed = false;
                for v in 0..n {
                    if alive[v] {
                        let d = graph.neighbors(v).iter().filter(|&&u| alive[u as usize]).count();
                        if d < k {
                            alive[v] = false;
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            for v in 0..n {
                if alive[v] {
                    core[v] = k as u32;
                }
            }
        }
        core
    }

    #[test]
    fn triangle_with_pendant() {
        let g = Graph::from_edges(4, [(0, 1), (1, 2), (0, 2), (3, 0)]).unwrap();
        assert_eq!(core_numbers(&g), vec![2, 2, 2, 1]);
    }

    #[test]
    fn edgeless_and_complete() {
        assert_eq!(core_numbers(&Graph::from_edges(3, []).unwrap()), vec![0, 0, 0]);
        let mut e = Vec::new();
        for i in 0..5 {
            for j in i + 1..5 {
                e.push((i, j));
            }
        }
        let t = kcore_treatment(&Graph::from_edges(5, e).unwrap());
        assert_eq!(t.labels().unwrap(), &[4, 4, 4, 4, 4]);
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert!(t.treatment_of(i, j).unwrap());
                }
            }
        }
    }

    #[test]
    fn matches_naive_peeling() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(1..25);
            let p: f64 = rng.gen_range(0.05..0.6);
            let mut e = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.gen_bool(p) {
                        e.push((i, j));
                    }
                }
            }
            let g = Graph::from_edges(n, e).unwrap();
            assert_eq!(core_numbers(&g), peel_oracle(&g));
        }
    }
}
