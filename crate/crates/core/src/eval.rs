//! Link-prediction metrics and treatment-effect statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cfmatch::CfEntry;
use crate::error::{Error, Result};

/// Cutoffs reported in every metrics report (when enough negatives exist).
pub const REPORTED_HITS: [usize; 3] = [10, 20, 50];

/// Fraction of positives scored strictly above the `k`-th largest negative.
pub fn hits_at_k(pos: &[f64], neg: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("hits@k needs k >= 1".into()));
    }
    if k > neg.len() {
        return Err(Error::Capacity(format!("hits@{k} needs at least {k} negatives, have {}", neg.len())));
    }
    if pos.is_empty() {
        return Err(Error::Degenerate("hits@k over zero positives".into()));
    }
    let mut sorted = neg.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let threshold = sorted[k - 1];
    Ok(pos.iter().filter(|&&p| p > threshold).count() as f64 / pos.len() as f64)
}

/// `P(pos > neg) + ½ P(pos = neg)`, from one sort of the pooled scores.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Degenerate(format!("auc with {} positives and {} negatives", pos.len(), neg.len())));
    }
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    // Twice the win count, with ties worth one.
    let mut doubled: u128 = 0;
    let mut below_neg: u128 = 0;
    let mut k = 0;
    while k < all.len() {
        let mut end = k;
        let (mut p, mut n) = (0u128, 0u128);
        while end < all.len() && all[end].0 == all[k].0 {
            if all[end].1 {
                p += 1;
            } else {
                n += 1;
            }
            end += 1;
        }
        doubled += 2 * p * below_neg + p * n;
        below_neg += n;
        k = end;
    }
    Ok(doubled as f64 / (2 * pos.len() as u128 * neg.len() as u128) as f64)
}

/// Step-wise average precision with tied scores sharing one threshold.
pub fn average_precision(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() {
        return Err(Error::Degenerate("average precision over zero positives".into()));
    }
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
    let total_pos = pos.len() as f64;
    let mut tp = 0usize;
    let mut ap = 0.0;
    let mut k = 0;
    while k < all.len() {
        let mut end = k;
        let mut new_tp = 0;
        while end < all.len() && all[end].0 == all[k].0 {
            new_tp += all[end].1 as usize;
            end += 1;
        }
        tp += new_tp;
        if new_tp > 0 {
            ap += (new_tp as f64 / total_pos) * (tp as f64 / end as f64);
        }
        k = end;
    }
    Ok(ap)
}

/// Mean of `T (A − A_cf) + (1 − T)(A_cf − A)` over aligned vectors.
pub fn treatment_effect(t: &[bool], outcome: &[f64], cf_outcome: &[f64]) -> Result<f64> {
    if t.len() != outcome.len() || t.len() != cf_outcome.len() {
        return Err(Error::Shape(format!(
            "treatment effect over {} treatments, {} outcomes and {} counterfactual outcomes",
            t.len(),
            outcome.len(),
            cf_outcome.len()
        )));
    }
    if t.is_empty() {
        return Err(Error::Degenerate("treatment effect over zero pairs".into()));
    }
    let sum: f64 = t.iter().zip(outcome).zip(cf_outcome).map(|((&t, &a), &c)| if t { a - c } else { c - a }).sum();
    Ok(sum / t.len() as f64)
}

/// Observed effect from the training labels and their matched labels.
pub fn ate_observed(entries: &[CfEntry]) -> Result<f64> {
    let t: Vec<bool> = entries.iter().map(|e| e.t).collect();
    let a: Vec<f64> = entries.iter().map(|e| e.label as u8 as f64).collect();
    let c: Vec<f64> = entries.iter().map(|e| e.a_cf as u8 as f64).collect();
    treatment_effect(&t, &a, &c)
}

/// Estimated effect from predicted factual and counterfactual probabilities.
pub fn ate_estimated(t: &[bool], predicted: &[f64], predicted_cf: &[f64]) -> Result<f64> {
    treatment_effect(t, predicted, predicted_cf)
}

/// Kendall's τ-a: (concordant − discordant) / (n choose 2).
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("rankings of length {} and {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Degenerate("kendall tau needs at least two items".into()));
    }
    let sign = |x: f64| (x > 0.0) as i64 - (x < 0.0) as i64;
    let mut score = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            score += sign(a[i] - a[j]) * sign(b[i] - b[j]);
        }
    }
    Ok(score as f64 / (n * (n - 1) / 2) as f64)
}

/// Test-set metrics of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub hits_at_k: BTreeMap<String, f64>,
    pub auc: f64,
    pub ap: f64,
    pub ate_obs: f64,
    pub ate_est: f64,
    pub gamma: f64,
    pub fallback_fraction: f64,
    pub best_epoch: usize,
    pub best_valid_hits: Option<f64>,
}

impl MetricsReport {
    /// Scalar metrics by name, for aggregation.
    pub fn scalars(&self) -> BTreeMap<String, f64> {
        let mut m: BTreeMap<String, f64> = self.hits_at_k.clone();
        m.insert("auc".into(), self.auc);
        m.insert("ap".into(), self.ap);
        m.insert("ate_obs".into(), self.ate_obs);
        m.insert("ate_est".into(), self.ate_est);
        m.insert("fallback_fraction".into(), self.fallback_fraction);
        m
    }
}

/// Hits@K for every reportable cutoff, keyed `hits@K`.
pub fn hits_table(pos: &[f64], neg: &[f64]) -> Result<BTreeMap<String, f64>> {
    REPORTED_HITS
        .iter()
        .filter(|&&k| k <= neg.len())
        .map(|&k| Ok((format!("hits@{k}"), hits_at_k(pos, neg, k)?)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (zero for a single seed).
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub seeds: Vec<u64>,
    pub metrics: BTreeMap<String, MeanStd>,
}

/// Mean ± std of every metric present in all reports.
pub fn aggregate(reports: &[MetricsReport]) -> Result<Aggregate> {
    let first = reports.first().ok_or_else(|| Error::Degenerate("aggregate of zero reports".into()))?;
    let all: Vec<BTreeMap<String, f64>> = reports.iter().map(|r| r.scalars()).collect();
    let mut metrics = BTreeMap::new();
    for key in first.scalars().keys() {
        let values: Vec<f64> = all.iter().filter_map(|m| m.get(key).copied()).collect();
        if values.len() != reports.len() {
            continue;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        metrics.insert(key.clone(), MeanStd { mean, std });
    }
    Ok(Aggregate { seeds: reports.iter().map(|r| r.seed).collect(), metrics })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hits_examples() {
        assert_eq!(hits_at_k(&[0.9, 0.5], &[0.8, 0.1], 1).unwrap(), 0.5);
        assert_eq!(hits_at_k(&[0.9, 0.95], &[0.8, 0.1], 2).unwrap(), 1.0);
        assert_eq!(hits_at_k(&[0.8], &[0.8, 0.1], 1).unwrap(), 0.0);
        assert!(matches!(hits_at_k(&[0.8], &[0.1], 2), Err(Error::Capacity(_))));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[3.0, 4.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(auc(&[1.0; 3], &[1.0; 4]).unwrap(), 0.5);
        assert_eq!(auc(&[3.0, 1.0], &[2.0, 0.0]).unwrap(), 0.75);
        assert!(auc(&[], &[1.0]).is_err());
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[1.0], &[0.0]).unwrap(), 1.0);
        assert_eq!(average_precision(&[0.0], &[1.0]).unwrap(), 0.5);
        assert!((average_precision(&[0.3; 3], &[0.3; 5]).unwrap() - 3.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn effect_examples() {
        let e = |t, label, a_cf| CfEntry { query: (0, 1), t, label, matched: Some((2, 3)), t_cf: !t, a_cf };
        assert_eq!(ate_observed(&[e(true, true, false)]).unwrap(), 1.0);
        assert_eq!(ate_observed(&[e(true, true, true), e(false, false, false)]).unwrap(), 0.0);
        assert_eq!(ate_observed(&[e(false, true, false)]).unwrap(), -1.0);
        assert!(ate_observed(&[]).is_err());
        let p = [0.2, 0.9];
        assert_eq!(ate_estimated(&[true, false], &p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kendall_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
        assert_eq!(kendall_tau(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!((kendall_tau(&a, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 4.0 / 6.0).abs() < 1e-15);
        assert!(kendall_tau(&a, &[1.0]).is_err());
    }

    #[test]
    fn aggregate_mean_std() {
        let r = |seed, auc| MetricsReport {
            seed,
            hits_at_k: BTreeMap::from([("hits@20".to_string(), 0.5)]),
            auc,
            ap: 0.5,
            ate_obs: 0.0,
            ate_est: 0.0,
            gamma: 1.0,
            fallback_fraction: 0.0,
            best_epoch: 0,
            best_valid_hits: None,
        };
        let agg = aggregate(&[r(0, 0.8), r(1, 0.9)]).unwrap();
        let m = agg.metrics["auc"];
        assert!((m.mean - 0.85).abs() < 1e-15);
        assert!((m.std - (0.005f64).sqrt()).abs() < 1e-12);
        assert_eq!(agg.metrics["hits@20"].std, 0.0);
    }
}
