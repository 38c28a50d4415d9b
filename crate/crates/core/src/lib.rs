//! Counterfactual link prediction.
//!
//! The pipeline assigns a binary structural treatment to every node pair,
//! matches each observed pair with its nearest counterfactual pair under the
//! opposite treatment, and trains a GNN link predictor on both factual and
//! counterfactual links.

pub mod cfmatch;
pub mod config;
pub mod dataset;
pub mod embed;
pub mod error;
pub mod eval;
pub mod graph;
pub mod linalg;
pub mod nn;
mod par;
pub mod pipeline;
pub mod spectral;
pub mod split;
pub mod synthetic;
pub mod train;
pub mod treatments;

pub use error::{Error, Result};
pub use graph::{Graph, Pair};
pub use linalg::Matrix;
