//! Browser bindings: build a synthetic graph, inspect counterfactual matches
//! and train a small model, all through JSON strings.

use std::f64::consts::TAU;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use cflp::cfmatch::{build_counterfactual_table, MatchConfig, Matcher};
use cflp::config::RunConfig;
use cflp::eval::ate_observed;
use cflp::pipeline::{prepare, run_seed, Prepared, StageLog};
use cflp::split::TrainBatch;
use cflp::synthetic::PlantedPartition;
use cflp::Graph;

pub const MAX_NODES: usize = 600;
pub const SWEEP_PCTS: [f64; 10] = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0];

#[derive(Serialize)]
struct NodeView {
    id: usize,
    community: usize,
    label: Option<u32>,
    x: f64,
    y: f64,
}

#[derive(Serialize)]
struct GraphView {
    nodes: Vec<NodeView>,
    /// `[i, j, treated]` for every training edge.
    edges: Vec<(u32, u32, bool)>,
    treatment: String,
    gamma: f64,
    gamma_pct: f64,
    fallback_fraction: f64,
    ate_obs: f64,
}

#[derive(Serialize)]
struct MatchView {
    query: (usize, usize),
    t: bool,
    observed: bool,
    gamma: f64,
    matched: Option<(u32, u32)>,
    distance: Option<f64>,
    t_cf: bool,
    a_cf: bool,
}

#[derive(Serialize)]
struct SweepRow {
    gamma_pct: f64,
    gamma: f64,
    fallback_fraction: f64,
    ate_obs: f64,
}

/// One synthetic graph with its split, treatment, embedding and matches.
pub struct Session {
    graph: Graph,
    source: PlantedPartition,
    cfg: RunConfig,
    seed: u64,
    prep: Prepared,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

impl Session {
    pub fn new(nodes: usize, communities: usize, treatment: &str, seed: u64) -> Result<Session, String> {
        if nodes > MAX_NODES {
            return Err(format!("at most {MAX_NODES} nodes in the browser, asked for {nodes}"));
        }
        let source = PlantedPartition { nodes, communities, feature_dim: 32, seed, ..Default::default() };
        let graph = source.generate().map_err(err)?;
        let mut cfg = RunConfig::default();
        for (k, v) in [("treatment", treatment), ("embed", "eigenmap:8"), ("hidden", "16"), ("arch", "gcn")] {
            cfg.set(k, v).map_err(err)?;
        }
        cfg.seeds = vec![seed];
        let prep = prepare(&graph, &cfg, seed, None, &mut StageLog::default()).map_err(err)?;
        Ok(Session { graph, source, cfg, seed, prep })
    }

    /// Nodes on a circle, grouped by planted community, plus the training edges.
    pub fn graph_json(&self) -> Result<String, String> {
        let n = self.graph.num_nodes();
        let c = self.source.communities;
        let order: Vec<usize> = {
            let mut v: Vec<usize> = (0..n).collect();
            v.sort_by_key(|&u| (self.source.community(u), u));
            v
        };
        let mut pos = vec![(0.0, 0.0); n];
        for (rank, &u) in order.iter().enumerate() {
            // A small gap between communities keeps the groups apart.
            let angle = TAU * (rank as f64 + self.source.community(u) as f64 * 2.0) / (n + 2 * c) as f64;
            pos[u] = (0.5 + 0.45 * angle.cos(), 0.5 + 0.45 * angle.sin());
        }
        let labels = self.prep.treatment.labels();
        let nodes = (0..n)
            .map(|u| NodeView {
                id: u,
                community: self.source.community(u),
                label: labels.map(|l| l[u]),
                x: pos[u].0,
                y: pos[u].1,
            })
            .collect();
        let t = &self.prep.treatment;
        let edges = self.prep.split.train_edges.iter().map(|&(i, j)| (i, j, t.treat(i as usize, j as usize))).collect();
        let view = GraphView {
            nodes,
            edges,
            treatment: self.cfg.treatment.to_string(),
            gamma: self.prep.matching.gamma,
            gamma_pct: self.cfg.gamma_pct,
            fallback_fraction: self.prep.table.fallback_fraction(),
            ate_obs: ate_observed(&self.prep.table.entries).map_err(err)?,
        };
        serde_json::to_string(&view).map_err(err)
    }

    /// Nearest opposite-treatment pair for `(i, j)` at the given γ percentile.
    pub fn match_pair(&self, i: usize, j: usize, gamma_pct: f64) -> Result<String, String> {
        let n = self.graph.num_nodes();
        if i >= n || j >= n || i == j {
            return Err(format!("need two distinct nodes below {n}, got ({i}, {j})"));
        }
        let emb = &self.prep.embedding;
        let cfg = MatchConfig::from_percentile(emb, gamma_pct, self.seed).map_err(err)?;
        let t = self.prep.treatment.treat(i, j);
        let matched = Matcher::new(emb, &self.prep.treatment, &cfg).map_err(err)?.find(i, j, t);
        let observed = self.prep.split.train_graph.has_edge(i, j);
        let dist =
            |u: usize, v: usize| emb.row(u).iter().zip(emb.row(v)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let view = MatchView {
            query: (i, j),
            t,
            observed,
            gamma: cfg.gamma,
            matched,
            distance: matched.map(|(a, b)| dist(i, a as usize) + dist(j, b as usize)),
            t_cf: if matched.is_some() { !t } else { t },
            a_cf: matched.map_or(observed, |(a, b)| self.prep.split.train_graph.has_edge(a as usize, b as usize)),
        };
        serde_json::to_string(&view).map_err(err)
    }

    /// Fallback fraction and observed effect across γ percentiles.
    pub fn gamma_sweep_json(&self) -> Result<String, String> {
        let entries = &self.prep.table.entries;
        let batch = TrainBatch {
            pairs: entries.iter().map(|e| e.query).collect(),
            labels: entries.iter().map(|e| e.label).collect(),
            treatments: entries.iter().map(|e| e.t).collect(),
        };
        let emb = &self.prep.embedding;
        let rows = SWEEP_PCTS
            .iter()
            .map(|&pct| {
                let cfg = MatchConfig::from_percentile(emb, pct, self.seed)?;
                let table =
                    build_counterfactual_table(&batch, emb, &self.prep.treatment, &cfg, &self.prep.split.train_graph)?;
                Ok(SweepRow {
                    gamma_pct: pct,
                    gamma: cfg.gamma,
                    fallback_fraction: table.fallback_fraction(),
                    ate_obs: ate_observed(&table.entries)?,
                })
            })
            .collect::<cflp::Result<Vec<_>>>()
            .map_err(err)?;
        serde_json::to_string(&rows).map_err(err)
    }

    /// Trains on this graph and returns the test metrics report.
    pub fn train_json(&self, alpha: f64, beta: f64, epochs: usize) -> Result<String, String> {
        let mut cfg = self.cfg.clone();
        cfg.set("alpha", &alpha.to_string()).map_err(err)?;
        cfg.set("beta", &beta.to_string()).map_err(err)?;
        cfg.set("epochs", &epochs.to_string()).map_err(err)?;
        cfg.set("ft_epochs", &(epochs / 2).max(1).to_string()).map_err(err)?;
        let report = run_seed(&self.graph, &cfg, self.seed, None, &mut StageLog::default()).map_err(err)?;
        serde_json::to_string(&report).map_err(err)
    }
}

/// JavaScript handle around a [`Session`].
#[wasm_bindgen]
pub struct Demo {
    inner: Session,
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(nodes: usize, communities: usize, treatment: &str, seed: u32) -> Result<Demo, JsError> {
        Session::new(nodes, communities, treatment, seed as u64)
            .map(|inner| Demo { inner })
            .map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = graphJson)]
    pub fn graph_json(&self) -> Result<String, JsError> {
        js(self.inner.graph_json())
    }

    #[wasm_bindgen(js_name = matchPair)]
    pub fn match_pair(&self, i: usize, j: usize, gamma_pct: f64) -> Result<String, JsError> {
        js(self.inner.match_pair(i, j, gamma_pct))
    }

    #[wasm_bindgen(js_name = gammaSweep)]
    pub fn gamma_sweep(&self) -> Result<String, JsError> {
        js(self.inner.gamma_sweep_json())
    }

    pub fn train(&self, alpha: f64, beta: f64, epochs: usize) -> Result<String, JsError> {
        js(self.inner.train_json(alpha, beta, epochs))
    }
}
