//! Sample-quality metrics: mode coverage, held-out recall and RBF MMD.

use serde::{Deserialize, Serialize};

use crate::autoencoder::ReconstructionError;
use crate::data::{gen_shapes_dataset, ring_centers, Dataset, Generator, HoldoutRule};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn same_dim(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.ncols() != b.ncols() {
        return Err(Error::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeCoverage {
    pub fraction: f64,
    /// Samples assigned to each mode and lying within `3σ` of it.
    pub counts: Vec<usize>,
}

/// Assign every sample to its nearest center (ties go to the lower index); a
/// mode is covered once `min_count` of its samples lie within `3σ`.
pub fn mode_coverage(samples: &Tensor, centers: &Tensor, sigma: f64, min_count: usize) -> Result<ModeCoverage> {
    if centers.nrows() == 0 {
        return Err(Error::InvalidArgument("mode_coverage needs at least one center".into()));
    }
    same_dim("mode_coverage", samples, centers)?;
    let radius2 = (3.0 * sigma) * (3.0 * sigma);
    let mut counts = vec![0usize; centers.nrows()];
    for s in samples.rows().take(samples.nrows()) {
        let mut best = (0, f64::INFINITY);
        for (k, c) in centers.rows().enumerate() {
            let d = sq_dist(s, c);
            if d < best.1 {
                best = (k, d);
            }
        }
        if best.1 <= radius2 {
            counts[best.0] += 1;
        }
    }
    let covered = counts.iter().filter(|&&c| c >= min_count).count();
    Ok(ModeCoverage {
        fraction: covered as f64 / centers.nrows() as f64,
        counts,
    })
}

/// Fraction of `refs` whose nearest `decoded` row lies within `tau`.
pub fn holdout_recall(decoded: &Tensor, refs: &Tensor, tau: f64) -> Result<f64> {
    if refs.nrows() == 0 {
        return Err(Error::InvalidArgument("holdout_recall needs reference samples".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    same_dim("holdout_recall", decoded, refs)?;
    let tau2 = tau * tau;
    let hit = refs
        .rows()
        .take(refs.nrows())
        .filter(|r| decoded.rows().take(decoded.nrows()).any(|d| sq_dist(r, d) <= tau2))
        .count();
    Ok(hit as f64 / refs.nrows() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Median,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mmd {
    /// Biased MMD² estimate (never negative).
    pub value: f64,
    pub bandwidth: f64,
}

/// Median of pairwise Euclidean distances over the pooled rows.
pub fn median_pairwise_distance(x: &Tensor, y: &Tensor) -> f64 {
    let pooled: Vec<&[f64]> = x
        .rows()
        .take(x.nrows())
        .chain(y.rows().take(y.nrows()))
        .collect();
    let mut d = Vec::with_capacity(pooled.len() * pooled.len().saturating_sub(1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            d.push(sq_dist(pooled[i], pooled[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    }
}

fn mean_kernel(a: &Tensor, b: &Tensor, gamma: f64) -> f64 {
    let mut s = 0.0;
    for r in a.rows().take(a.nrows()) {
        for q in b.rows().take(b.nrows()) {
            s += (-gamma * sq_dist(r, q)).exp();
        }
    }
    s / (a.nrows() * b.nrows()) as f64
}

/// Biased MMD² with `k(a, b) = exp(-‖a − b‖² / (2h²))`.
pub fn mmd_rbf(x: &Tensor, y: &Tensor, bandwidth: Bandwidth) -> Result<Mmd> {
    if x.nrows() < 2 || y.nrows() < 2 {
        return Err(Error::InvalidArgument("mmd_rbf needs at least two rows per sample".into()));
    }
    same_dim("mmd_rbf", x, y)?;
    let h = match bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Median => median_pairwise_distance(x, y),
    };
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "degenerate kernel bandwidth {h} (all pooled points identical?)"
        )));
    }
    let gamma = 1.0 / (2.0 * h * h);
    let v = mean_kernel(x, x, gamma) + mean_kernel(y, y, gamma) - 2.0 * mean_kernel(x, y, gamma);
    Ok(Mmd {
        value: v.max(0.0),
        bandwidth: h,
    })
}

/// The `q`-quantile (nearest-rank) of each row's distance to its nearest
/// other row.
pub fn nearest_neighbor_quantile(x: &Tensor, q: f64) -> Result<f64> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two rows for nearest-neighbor distances".into()));
    }
    let mut nn: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| sq_dist(x.row(i), x.row(j)))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    Ok(nn[rank - 1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Generated samples drawn per arm.
    pub n_samples: usize,
    pub min_count: usize,
    /// Fixed recall radius; defaults to the 5th percentile of held-in
    /// nearest-neighbor distances.
    pub tau: Option<f64>,
    pub tau_quantile: f64,
    /// Fresh held-out references generated for shapes data.
    pub heldout_refs: usize,
    /// Cap on rows per side for MMD and the nearest-neighbor scan.
    pub max_points: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            min_count: 10,
            tau: None,
            tau_quantile: 0.05,
            heldout_refs: 200,
            max_points: 500,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_samples: usize,
    /// `None` when the dataset has no known mixture modes.
    pub mode_coverage: Option<f64>,
    pub mode_counts: Option<Vec<usize>>,
    pub mode_sigma: Option<f64>,
    pub min_count: usize,
    /// `None` when nothing was held out.
    pub holdout_recall: Option<f64>,
    pub holdout_tau: Option<f64>,
    pub holdout_refs: usize,
    pub mmd: f64,
    pub mmd_bandwidth: f64,
    pub mmd_estimator: String,
    /// Filled in by the pipeline for the dual-space arm.
    pub reconstruction: Option<ReconstructionError>,
}

impl MetricsReport {
    /// `(name, value)` for every metric present.
    pub fn entries(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("mode_coverage", self.mode_coverage),
            ("holdout_recall", self.holdout_recall),
            ("holdout_tau", self.holdout_tau),
            ("mmd", Some(self.mmd)),
            ("mmd_bandwidth", Some(self.mmd_bandwidth)),
            ("recon_mse_heldin", self.reconstruction.map(|r| r.mse_heldin)),
            ("recon_mse_heldout", self.reconstruction.and_then(|r| r.mse_heldout)),
        ]
    }
}

/// Evenly strided subset of at most `max` rows.
fn cap_rows(x: &Tensor, max: usize) -> Tensor {
    if x.nrows() <= max || max == 0 {
        return x.clone();
    }
    let idx: Vec<usize> = (0..max).map(|i| i * x.nrows() / max).collect();
    x.select_rows(&idx)
}

/// Held-out reference rows: the masked samples, or for shapes data fresh
/// samples drawn from the held-out parameter range.
pub fn heldout_references(dataset: &Dataset, rule: &HoldoutRule, cfg: &EvalConfig) -> Result<Option<Tensor>> {
    if rule.is_none() {
        return Ok(None);
    }
    match (&dataset.meta.generator, rule) {
        (Generator::Shapes(ranges), HoldoutRule::ParamRange { param, min, max }) => {
            let held = ranges.with_range(*param, (*min, *max));
            let refs = gen_shapes_dataset(&held, cfg.heldout_refs, seed::derive(cfg.seed, "heldout-refs"))?;
            Ok(Some(refs.samples))
        }
        _ => {
            let h = dataset.heldout_samples();
            Ok((h.nrows() > 0).then_some(h))
        }
    }
}

pub fn evaluate_arm(samples: &Tensor, dataset: &Dataset, rule: &HoldoutRule, cfg: &EvalConfig) -> Result<MetricsReport> {
    let (mode_coverage, mode_counts, mode_sigma) = match &dataset.meta.generator {
        Generator::Ring(p) => {
            let mc = mode_coverage(samples, &ring_centers(p), p.sigma, cfg.min_count)?;
            (Some(mc.fraction), Some(mc.counts), Some(p.sigma))
        }
        _ => (None, None, None),
    };

    let heldin = dataset.training_samples();
    let (holdout_recall, holdout_tau, n_refs) = match heldout_references(dataset, rule, cfg)? {
        Some(refs) => {
            let tau = match cfg.tau {
                Some(t) => t,
                None => nearest_neighbor_quantile(&cap_rows(&heldin, 2 * cfg.max_points), cfg.tau_quantile)?,
            };
            (Some(holdout_recall(samples, &refs, tau)?), Some(tau), refs.nrows())
        }
        None => (None, None, 0),
    };

    let mmd = mmd_rbf(
        &cap_rows(samples, cfg.max_points),
        &cap_rows(&heldin, cfg.max_points),
        Bandwidth::Median,
    )?;

    Ok(MetricsReport {
        n_samples: samples.nrows(),
        mode_coverage,
        mode_counts,
        mode_sigma,
        min_count: cfg.min_count,
        holdout_recall,
        holdout_tau,
        holdout_refs: n_refs,
        mmd: mmd.value,
        mmd_bandwidth: mmd.bandwidth,
        mmd_estimator: "biased_v_statistic".into(),
        reconstruction: None,
    })
}
