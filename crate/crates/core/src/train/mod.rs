//! Joint factual + counterfactual training and decoder fine-tuning.

mod loss;
mod optim;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::cfmatch::CounterfactualTable;
use crate::error::{Error, Result};
use crate::eval::hits_at_k;
use crate::graph::Pair;
use crate::linalg::Matrix;
use crate::nn::{
    decoder_backward, decoder_forward, encoder_backward, encoder_forward, pair_repr, pair_repr_backward, Arch, Decoder,
    EncoderCache, GraphOps, ModelParams,
};
use crate::split::{sample_negatives, EdgeSplit, TrainBatch};
use crate::treatments::TreatmentAssignment;

pub use loss::{bce_loss, disc_loss, sigmoid, DiscMode};
pub use optim::{cyclical_lr, Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, CYCLE_MIN_LR};

/// Validation cutoff used for checkpoint selection.
pub const VALID_HITS_K: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: Arch,
    pub hidden: usize,
    pub repr_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub ft_epochs: usize,
    pub alpha: f64,
    pub beta: f64,
    pub disc: DiscMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: Arch::Gcn,
            hidden: 256,
            repr_dim: 256,
            lr: 0.01,
            epochs: 140,
            ft_epochs: 70,
            alpha: 1.0,
            beta: 1.0,
            disc: DiscMode::Operative,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.hidden == 0 || self.repr_dim == 0 {
            return Err(Error::Config("hidden and representation widths must be positive".into()));
        }
        Ok(())
    }
}

/// Loss terms of one epoch. `l_cf` and `l_disc` are zero for the factual-only model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub phase: Phase,
    pub epoch: usize,
    pub lr: f64,
    pub l_f: f64,
    pub l_cf: f64,
    pub l_disc: f64,
    pub total: f64,
    pub valid_hits: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Joint,
    Finetune,
}

/// Loss values of one forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub l_f: f64,
    pub l_cf: f64,
    pub l_disc: f64,
    pub total: f64,
}

/// The counterfactual table reshaped into training arrays.
#[derive(Clone, Debug, Default)]
pub struct CfData {
    pairs: Vec<Pair>,
    t_cf: Vec<bool>,
    a_cf: Vec<bool>,
    p_pairs: Vec<Pair>,
    p_t: Vec<bool>,
    q_pairs: Vec<Pair>,
    q_t: Vec<bool>,
}

impl CfData {
    pub fn new(table: &CounterfactualTable, disc: DiscMode) -> CfData {
        let mut d = CfData::default();
        for e in &table.entries {
            d.pairs.push(e.query);
            d.t_cf.push(e.t_cf);
            d.a_cf.push(e.a_cf);
            if let Some(m) = e.matched {
                d.p_pairs.push(e.query);
                d.p_t.push(e.t);
                d.q_pairs.push(match disc {
                    DiscMode::Operative => m,
                    DiscMode::Literal => e.query,
                });
                d.q_t.push(e.t_cf);
            }
        }
        d
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Loss weights of the joint objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Weights {
    pub alpha: f64,
    pub beta: f64,
}

fn add_decoder_grads(acc: &mut Decoder, g: &Decoder, scale: f64) -> Result<()> {
    for (a, g) in acc.blocks_mut().into_iter().zip(g.blocks_ref()) {
        a.axpy(scale, g)?;
    }
    Ok(())
}

/// BCE through the decoder for one set of pairs; returns the loss and, when
/// `weight` is non-zero, accumulates weighted gradients.
#[allow(clippy::too_many_arguments)]
fn bce_term(
    dec: &Decoder,
    z: &Matrix,
    pairs: &[Pair],
    treatments: &[bool],
    labels: &[bool],
    weight: f64,
    grads: &mut Decoder,
    dz: &mut Matrix,
) -> Result<f64> {
    let repr = pair_repr(z, pairs, treatments)?;
    let (logits, cache) = decoder_forward(dec, &repr)?;
    let (loss, mut dl) = bce_loss(&logits, labels)?;
    if weight != 0.0 {
        dl.iter_mut().for_each(|g| *g *= weight);
        let (g, d_repr) = decoder_backward(dec, &cache, &dl)?;
        add_decoder_grads(grads, &g, 1.0)?;
        pair_repr_backward(z, pairs, &d_repr, dz)?;
    }
    Ok(loss)
}

/// Joint loss and gradients given an encoder forward pass. With `CF = false`
/// only the factual term is evaluated; a zero weight skips that term's
/// backward pass but still reports its value.
#[allow(clippy::too_many_arguments)]
pub fn objective_from_repr<const CF: bool>(
    params: &ModelParams,
    ops: &GraphOps,
    x: &Matrix,
    z: &Matrix,
    cache: &EncoderCache,
    factual: &TrainBatch,
    cf: &CfData,
    w: Weights,
) -> Result<(LossTerms, ModelParams)> {
    let mut grads = params.zeros_like();
    let mut dz = Matrix::zeros(z.rows(), z.cols());
    let mut terms = LossTerms::default();
    terms.l_f = bce_term(
        &params.decoder,
        z,
        &factual.pairs,
        &factual.treatments,
        &factual.labels,
        1.0,
        &mut grads.decoder,
        &mut dz,
    )?;
    terms.total = terms.l_f;
    if CF {
        if !cf.is_empty() {
            terms.l_cf =
                bce_term(&params.decoder, z, &cf.pairs, &cf.t_cf, &cf.a_cf, w.alpha, &mut grads.decoder, &mut dz)?;
        }
        let p = pair_repr(z, &cf.p_pairs, &cf.p_t)?;
        let q = pair_repr(z, &cf.q_pairs, &cf.q_t)?;
        let (l_disc, mut dp, mut dq) = disc_loss(&p, &q)?;
        terms.l_disc = l_disc;
        if w.beta != 0.0 && !cf.p_pairs.is_empty() {
            dp.scale(w.beta);
            dq.scale(w.beta);
            pair_repr_backward(z, &cf.p_pairs, &dp, &mut dz)?;
            pair_repr_backward(z, &cf.q_pairs, &dq, &mut dz)?;
        }
        terms.total += w.alpha * terms.l_cf + w.beta * terms.l_disc;
    }
    grads.encoder = encoder_backward(params, ops, x, cache, &dz)?;
    Ok((terms, grads))
}

/// Joint loss and gradients from scratch.
pub fn objective<const CF: bool>(
    params: &ModelParams,
    ops: &GraphOps,
    x: &Matrix,
    factual: &TrainBatch,
    cf: &CfData,
    w: Weights,
) -> Result<(LossTerms, ModelParams)> {
    let (z, cache) = encoder_forward(params, ops, x)?;
    objective_from_repr::<CF>(params, ops, x, &z, &cache, factual, cf, w)
}

/// Decoder logits for `pairs` given precomputed representations.
pub fn logits_from_repr(dec: &Decoder, z: &Matrix, pairs: &[Pair], treatments: &[bool]) -> Result<Vec<f64>> {
    let repr = pair_repr(z, pairs, treatments)?;
    Ok(decoder_forward(dec, &repr)?.0)
}

/// Link probabilities for `pairs`.
pub fn predict(
    params: &ModelParams,
    ops: &GraphOps,
    x: &Matrix,
    pairs: &[Pair],
    treatments: &[bool],
) -> Result<Vec<f64>> {
    let (z, _) = encoder_forward(params, ops, x)?;
    Ok(logits_from_repr(&params.decoder, &z, pairs, treatments)?.into_iter().map(sigmoid).collect())
}

/// Everything training reads.
#[derive(Clone, Copy)]
pub struct TrainInputs<'a> {
    pub features: &'a Matrix,
    pub ops: &'a GraphOps,
    pub split: &'a EdgeSplit,
    pub treatment: &'a TreatmentAssignment,
    pub cf: &'a CounterfactualTable,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub trace: Vec<LossReport>,
    /// Epoch whose starting parameters were kept (`epochs` for the final ones).
    pub best_epoch: usize,
    pub best_valid_hits: Option<f64>,
}

struct Validation {
    pairs: Vec<Pair>,
    treatments: Vec<bool>,
    n_pos: usize,
    k: usize,
}

impl Validation {
    fn new(split: &EdgeSplit, treatment: &TreatmentAssignment) -> Option<Validation> {
        if split.valid_pos.is_empty() || split.valid_neg.is_empty() {
            return None;
        }
        let pairs: Vec<Pair> = split.valid_pos.iter().chain(&split.valid_neg).copied().collect();
        let treatments = pairs.iter().map(|&(i, j)| treatment.treat(i as usize, j as usize)).collect();
        Some(Validation { pairs, treatments, n_pos: split.valid_pos.len(), k: VALID_HITS_K.min(split.valid_neg.len()) })
    }

    fn hits(&self, dec: &Decoder, z: &Matrix) -> Result<f64> {
        let logits = logits_from_repr(dec, z, &self.pairs, &self.treatments)?;
        hits_at_k(&logits[..self.n_pos], &logits[self.n_pos..], self.k)
    }
}

fn factual_batch(inputs: &TrainInputs<'_>, heldout: &std::collections::HashSet<Pair>, seed: u64) -> Result<TrainBatch> {
    let split = inputs.split;
    let negs = sample_negatives(&split.train_graph, split.train_edges.len(), heldout, seed)?;
    TrainBatch::new(&split.train_edges, &negs, |i, j| Ok(inputs.treatment.treat(i, j)))
}

fn check_finite(terms: &LossTerms, epoch: usize) -> Result<()> {
    if terms.total.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence(format!(
            "loss became non-finite at epoch {epoch} (factual {}, counterfactual {}, discrepancy {})",
            terms.l_f, terms.l_cf, terms.l_disc
        )))
    }
}

/// Full-batch joint training. Factual negatives are redrawn every epoch; the
/// counterfactual table stays fixed. The parameters with the best validation
/// Hits@20 are returned. `CF = false` trains the factual-only baseline.
pub fn train_cflp<const CF: bool>(inputs: TrainInputs<'_>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let x = inputs.features;
    let mut params = ModelParams::init(cfg.arch, x.cols(), cfg.hidden, cfg.repr_dim, cfg.seed)?;
    let mut adam = Adam::new(params.named_blocks().into_iter().map(|(_, m)| m));
    let cf = if CF { CfData::new(inputs.cf, cfg.disc) } else { CfData::default() };
    let weights = Weights { alpha: cfg.alpha, beta: cfg.beta };
    let heldout = inputs.split.heldout_negatives();
    let valid = Validation::new(inputs.split, inputs.treatment);
    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let batch = factual_batch(&inputs, &heldout, cfg.seed.wrapping_add(epoch as u64))?;
        let (z, cache) = encoder_forward(&params, inputs.ops, x)?;
        let valid_hits = valid.as_ref().map(|v| v.hits(&params.decoder, &z)).transpose()?;
        if let Some(h) = valid_hits {
            if best.as_ref().is_none_or(|b| h > b.1) {
                best = Some((epoch, h, params.clone()));
            }
        }
        let (terms, grads) = objective_from_repr::<CF>(&params, inputs.ops, x, &z, &cache, &batch, &cf, weights)?;
        check_finite(&terms, epoch)?;
        let lr = cyclical_lr(epoch, cfg.lr);
        let named = grads.named_blocks();
        adam.step(params.blocks_mut(), &named, lr)?;
        debug!(
            "epoch {epoch}: lr {lr:.5} L_F {:.5} L_CF {:.5} L_disc {:.5} total {:.5}",
            terms.l_f, terms.l_cf, terms.l_disc, terms.total
        );
        trace.push(LossReport {
            phase: Phase::Joint,
            epoch,
            lr,
            l_f: terms.l_f,
            l_cf: terms.l_cf,
            l_disc: terms.l_disc,
            total: terms.total,
            valid_hits,
        });
    }

    let (best_epoch, best_valid_hits, params) = match valid {
        Some(v) => {
            let (z, _) = encoder_forward(&params, inputs.ops, x)?;
            let h = v.hits(&params.decoder, &z)?;
            match best {
                Some((e, bh, p)) if bh >= h => (e, Some(bh), p),
                _ => (cfg.epochs, Some(h), params),
            }
        }
        None => (cfg.epochs, None, params),
    };
    info!("training kept epoch {best_epoch} (validation hits {best_valid_hits:?})");
    Ok(TrainOutcome { params, trace, best_epoch, best_valid_hits })
}

/// Freezes the encoder, re-initializes the decoder and trains it on the
/// factual loss alone. The decoder with the best validation Hits@20
/// (including the freshly initialized one) is kept.
pub fn finetune_decoder(
    trained: &ModelParams,
    inputs: TrainInputs<'_>,
    cfg: &TrainConfig,
) -> Result<(ModelParams, Vec<LossReport>)> {
    cfg.validate()?;
    let (z, _) = encoder_forward(trained, inputs.ops, inputs.features)?;
    let mut dec = Decoder::init(trained.repr_dim(), cfg.seed);
    let mut adam = Adam::new(dec.named_blocks().into_iter().map(|(_, m)| m));
    let heldout = inputs.split.heldout_negatives();
    let valid = Validation::new(inputs.split, inputs.treatment);
    let mut best_hits = valid.as_ref().map(|v| v.hits(&dec, &z)).transpose()?;
    let mut best = dec.clone();
    let mut trace = Vec::with_capacity(cfg.ft_epochs);

    for epoch in 0..cfg.ft_epochs {
        let seed = cfg.seed.wrapping_add((cfg.epochs + epoch) as u64);
        let batch = factual_batch(&inputs, &heldout, seed)?;
        let mut grads = dec.zeros_like();
        let mut dz = Matrix::zeros(z.rows(), z.cols());
        let l_f = bce_term(&dec, &z, &batch.pairs, &batch.treatments, &batch.labels, 1.0, &mut grads, &mut dz)?;
        let terms = LossTerms { l_f, total: l_f, ..Default::default() };
        check_finite(&terms, epoch)?;
        let lr = cyclical_lr(epoch, cfg.lr);
        adam.step(dec.blocks_mut(), &grads.named_blocks(), lr)?;
        let valid_hits = valid.as_ref().map(|v| v.hits(&dec, &z)).transpose()?;
        if let (Some(h), Some(b)) = (valid_hits, best_hits) {
            if h > b {
                best_hits = Some(h);
                best = dec.clone();
            }
        } else {
            best = dec.clone();
        }
        trace.push(LossReport {
            phase: Phase::Finetune,
            epoch,
            lr,
            l_f,
            l_cf: 0.0,
            l_disc: 0.0,
            total: l_f,
            valid_hits,
        });
    }
    Ok((ModelParams { arch: trained.arch, encoder: trained.encoder.clone(), decoder: best }, trace))
}

/// Loss trace as CSV.
pub fn loss_csv(trace: &[LossReport]) -> String {
    let mut out = String::from("phase,epoch,lr,l_f,l_cf,l_disc,total,valid_hits\n");
    for r in trace {
        let phase = match r.phase {
            Phase::Joint => "joint",
            Phase::Finetune => "finetune",
        };
        let hits = r.valid_hits.map(|h| h.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{phase},{},{},{},{},{},{},{hits}", r.epoch, r.lr, r.l_f, r.l_cf, r.l_disc, r.total);
    }
    out
}

pub fn write_loss_csv(path: &Path, trace: &[LossReport]) -> Result<()> {
    fs::write(path, loss_csv(trace)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
