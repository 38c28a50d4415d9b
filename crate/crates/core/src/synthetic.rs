//! Planted-partition graphs with class-correlated sparse binary features.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedPartition {
    pub nodes: usize,
    pub communities: usize,
    /// Expected degree contributed by same-community neighbors.
    pub degree_in: f64,
    /// Expected degree contributed by other-community neighbors.
    pub degree_out: f64,
    pub feature_dim: usize,
    /// Probability that a node carries one of its community's features.
    pub feature_on: f64,
    /// Probability of any other feature being on.
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for PlantedPartition {
    fn default() -> Self {
        Self {
            nodes: 200,
            communities: 4,
            degree_in: 4.0,
            degree_out: 0.8,
            feature_dim: 64,
            feature_on: 0.3,
            feature_noise: 0.02,
            seed: 0,
        }
    }
}

impl PlantedPartition {
    /// Community of node `v`: nodes are dealt round-robin.
    pub fn community(&self, v: usize) -> usize {
        v % self.communities
    }

    pub fn generate(&self) -> Result<Graph> {
        let (n, c) = (self.nodes, self.communities);
        if n < 2 || c == 0 || c > n {
            return Err(Error::Config(format!("planted partition with {n} nodes and {c} communities")));
        }
        let size = n as f64 / c as f64;
        let p_in = (self.degree_in / (size - 1.0).max(1.0)).min(1.0);
        let p_out = if c > 1 { (self.degree_out / (n as f64 - size)).min(1.0) } else { 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let p = if self.community(i) == self.community(j) { p_in } else { p_out };
                if rng.gen_bool(p) {
                    edges.push((i, j));
                }
            }
        }
        let per = (self.feature_dim / c).max(1);
        let mut x = Matrix::zeros(n, self.feature_dim);
        for v in 0..n {
            let own = self.community(v) * per;
            for f in 0..self.feature_dim {
                let p = if (own..own + per).contains(&f) { self.feature_on } else { self.feature_noise };
                if rng.gen_bool(p) {
                    x.set(v, f, 1.0);
                }
            }
        }
        Graph::from_edges(n, edges)?.with_features(x)
    }
}
