//! Non-cumulative multi-cutoff analysis: effects at each cutoff, the
//! estimated pooling weights, the weighted average of cutoff effects, the
//! pooled effect on the recentered score, and z-tests on linear contrasts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{CutoffOptions, Dataset, PerCutoffOptions};
use crate::error::{RdError, Result};
use crate::localpoly::{rd_estimate, RdResult};
use crate::stats::{critical_value, two_sided_p};

/// Recentered score `x - c`.
pub fn normalize_score(x: f64, c: f64) -> f64 {
    x - c
}

/// Display label of a cutoff value.
pub fn cutoff_label(c: f64) -> String {
    format!("{c}")
}

/// Share of the units near the normalized cutoff that face cutoff `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffWeight {
    pub cutoff: f64,
    /// Units facing `cutoff` inside the window.
    pub count: usize,
    /// Units inside the window over all cutoffs.
    pub total: usize,
    pub weight: f64,
}

/// Count-ratio weights over the window `-h <= x - c <= h`.
pub fn estimate_weights(dataset: &Dataset, h: f64) -> Result<Vec<CutoffWeight>> {
    estimate_weights_window(dataset, h, h)
}

/// Count-ratio weights over `-lower <= x - c <= upper`.
pub fn estimate_weights_window(dataset: &Dataset, lower: f64, upper: f64) -> Result<Vec<CutoffWeight>> {
    if !(lower > 0.0 && upper > 0.0) {
        return Err(RdError::InvalidOption {
            option: "weight bandwidth".into(),
            value: format!("{lower},{upper}"),
            reason: "must be positive".into(),
        });
    }
    let mut counts = vec![0usize; dataset.cutoffs.len()];
    for o in &dataset.observations {
        let Some(c) = o.cutoff else { continue };
        let xt = normalize_score(o.x1, c);
        if -lower <= xt && xt <= upper {
            let k = dataset
                .cutoffs
                .iter()
                .position(|g| g.value == c)
                .expect("cutoff groups cover every observation");
            counts[k] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(RdError::EmptyWindow { lower, upper });
    }
    Ok(dataset
        .cutoffs
        .iter()
        .zip(counts)
        .map(|(g, count)| CutoffWeight {
            cutoff: g.value,
            count,
            total,
            weight: count as f64 / total as f64,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffEstimate {
    pub cutoff: f64,
    pub result: RdResult,
    /// Estimated pooling weight; filled once the pooled bandwidth is known.
    pub weight: Option<f64>,
    /// Units facing this cutoff.
    pub n: usize,
}

fn group_columns(dataset: &Dataset, c: f64) -> (Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
    let idx = dataset.group_indices(c);
    let obs = &dataset.observations;
    let ys = idx.iter().map(|&i| obs[i].y).collect();
    let xs = idx.iter().map(|&i| obs[i].x1).collect();
    let ws = dataset
        .weights()
        .map(|w| idx.iter().map(|&i| w[i]).collect());
    (ys, xs, ws)
}

fn check_two_per_side(xs: &[f64], c: f64, label: &str) -> Result<()> {
    let below = xs.iter().filter(|&&x| x < c).count();
    let above = xs.iter().filter(|&&x| x > c).count();
    for (side, n) in [("left", below), ("right", above)] {
        if n < 2 {
            return Err(RdError::at(
                label,
                RdError::InsufficientObservations {
                    side,
                    found: n,
                    needed: 2,
                },
            ));
        }
    }
    Ok(())
}

/// One RD fit per cutoff, each on the units facing that cutoff only.
/// Any failing cutoff fails the whole call.
pub fn cutoff_specific_estimates(dataset: &Dataset, options: &PerCutoffOptions) -> Result<Vec<CutoffEstimate>> {
    options.expect_len(dataset.cutoffs.len())?;
    dataset
        .cutoffs
        .par_iter()
        .zip(options.0.par_iter())
        .map(|(group, opts)| {
            let c = group.value;
            let label = format!("cutoff {}", cutoff_label(c));
            let (ys, xs, ws) = group_columns(dataset, c);
            check_two_per_side(&xs, c, &label)?;
            let result = rd_estimate(&ys, &xs, c, opts, ws.as_deref()).map_err(|e| RdError::at(&label, e))?;
            Ok(CutoffEstimate {
                cutoff: c,
                result,
                weight: None,
                n: group.count,
            })
        })
        .collect()
}

/// RD fit on the recentered score pooling all cutoffs at zero.
pub fn pooled_estimate(dataset: &Dataset, pooled: &CutoffOptions) -> Result<RdResult> {
    let ys = dataset.ys();
    let xt: Vec<f64> = dataset
        .observations
        .iter()
        .map(|o| normalize_score(o.x1, o.cutoff.unwrap_or(0.0)))
        .collect();
    let ws = dataset.weights();
    rd_estimate(&ys, &xt, 0.0, pooled, ws.as_deref()).map_err(|e| RdError::at("pooled", e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedEstimate {
    /// Weighted average of the conventional estimates.
    pub tau_conventional: f64,
    /// Weighted average of the bias-corrected estimates.
    pub tau: f64,
    /// Standard error treating cutoff estimates as independent and the
    /// weights as fixed.
    pub se: f64,
}

impl WeightedEstimate {
    pub fn ci(&self, level: f64) -> [f64; 2] {
        let z = critical_value(level);
        [self.tau - z * self.se, self.tau + z * self.se]
    }

    pub fn p_value(&self) -> f64 {
        two_sided_p(self.tau, self.se)
    }
}

pub fn weighted_average_estimate(estimates: &[CutoffEstimate]) -> Result<WeightedEstimate> {
    let mut weights = Vec::with_capacity(estimates.len());
    for e in estimates {
        let w = e
            .weight
            .ok_or_else(|| RdError::Invalid(format!("cutoff {} has no weight", cutoff_label(e.cutoff))))?;
        weights.push(w);
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(RdError::Invalid(format!("weights sum to {total}, not 1")));
    }
    let tau = estimates
        .iter()
        .zip(&weights)
        .map(|(e, w)| w * e.result.tau_bias_corrected)
        .sum();
    let tau_conventional = estimates
        .iter()
        .zip(&weights)
        .map(|(e, w)| w * e.result.tau_conventional)
        .sum();
    let var: f64 = estimates
        .iter()
        .zip(&weights)
        .map(|(e, w)| (w * e.result.se_robust).powi(2))
        .sum();
    Ok(WeightedEstimate {
        tau_conventional,
        tau,
        se: var.sqrt(),
    })
}

/// Bias-corrected estimates and their covariance, ready for contrasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatesBundle {
    pub labels: Vec<String>,
    pub b: Vec<f64>,
    #[serde(rename = "V")]
    pub v: Vec<Vec<f64>>,
}

impl EstimatesBundle {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn from_diagonal(labels: Vec<String>, b: Vec<f64>, variances: &[f64]) -> Self {
        let n = b.len();
        let v = (0..n)
            .map(|i| (0..n).map(|j| if i == j { variances[i] } else { 0.0 }).collect())
            .collect();
        EstimatesBundle { labels, b, v }
    }

    /// Contrast vector `e_i - e_j`.
    pub fn difference_contrast(&self, i: usize, j: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.dim()];
        c[i] = 1.0;
        c[j] = -1.0;
        c
    }
}

/// Cutoff rows in ascending order, then `weighted`, then `pooled`. Rows are
/// treated as independent, so `V` is diagonal.
pub fn assemble_bundle(estimates: &[CutoffEstimate], weighted: &WeightedEstimate, pooled: &RdResult) -> EstimatesBundle {
    let mut sorted: Vec<&CutoffEstimate> = estimates.iter().collect();
    sorted.sort_by(|a, b| a.cutoff.total_cmp(&b.cutoff));
    let mut labels: Vec<String> = sorted.iter().map(|e| cutoff_label(e.cutoff)).collect();
    let mut b: Vec<f64> = sorted.iter().map(|e| e.result.tau_bias_corrected).collect();
    let mut var: Vec<f64> = sorted.iter().map(|e| e.result.se_robust.powi(2)).collect();
    labels.extend(["weighted".to_string(), "pooled".to_string()]);
    b.extend([weighted.tau, pooled.tau_bias_corrected]);
    var.extend([weighted.se.powi(2), pooled.se_robust.powi(2)]);
    EstimatesBundle::from_diagonal(labels, b, &var)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastTest {
    pub contrast: Vec<f64>,
    pub estimate: f64,
    pub se: f64,
    pub statistic: f64,
    pub p_value: f64,
}

/// Wald z-test of `contrast' b = 0`.
pub fn hypothesis_test(bundle: &EstimatesBundle, contrast: &[f64]) -> Result<ContrastTest> {
    if contrast.len() != bundle.dim() {
        return Err(RdError::Dimension(format!(
            "contrast has {} entries for {} estimates",
            contrast.len(),
            bundle.dim()
        )));
    }
    let estimate: f64 = contrast.iter().zip(&bundle.b).map(|(c, b)| c * b).sum();
    let mut var = 0.0;
    for (i, ci) in contrast.iter().enumerate() {
        for (j, cj) in contrast.iter().enumerate() {
            var += ci * bundle.v[i][j] * cj;
        }
    }
    let (statistic, p_value) = if var > 0.0 {
        let z = estimate / var.sqrt();
        (z, two_sided_p(z, 1.0))
    } else if estimate == 0.0 {
        (0.0, 1.0)
    } else {
        return Err(RdError::ZeroVariance(estimate));
    };
    Ok(ContrastTest {
        contrast: contrast.to_vec(),
        estimate,
        se: var.max(0.0).sqrt(),
        statistic,
        p_value,
    })
}

/// Everything one multi-cutoff run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdmcOutput {
    pub estimates: Vec<CutoffEstimate>,
    pub weights: Vec<CutoffWeight>,
    /// `(lower, upper)` half-widths of the weight window.
    pub weight_window: (f64, f64),
    /// `true` when the weight window came from the caller rather than the
    /// pooled fit.
    pub weight_window_override: bool,
    pub weighted: WeightedEstimate,
    pub pooled: RdResult,
    pub bundle: EstimatesBundle,
}

/// Runs the whole multi-cutoff analysis. The weights use the pooled fit's
/// bandwidth unless `weight_bandwidth` is given.
pub fn rdmc(
    dataset: &Dataset,
    options: &PerCutoffOptions,
    pooled_options: &CutoffOptions,
    weight_bandwidth: Option<f64>,
) -> Result<RdmcOutput> {
    pooled_options.validate()?;
    let (estimates, pooled) = rayon::join(
        || cutoff_specific_estimates(dataset, options),
        || pooled_estimate(dataset, pooled_options),
    );
    let mut estimates = estimates?;
    let pooled = pooled?;
    let window = match weight_bandwidth {
        Some(h) => (h, h),
        None => (pooled.h_left, pooled.h_right),
    };
    let weights = estimate_weights_window(dataset, window.0, window.1)?;
    for (e, w) in estimates.iter_mut().zip(&weights) {
        e.weight = Some(w.weight);
    }
    let weighted = weighted_average_estimate(&estimates)?;
    let bundle = assemble_bundle(&estimates, &weighted, &pooled);
    Ok(RdmcOutput {
        estimates,
        weights,
        weight_window: window,
        weight_window_override: weight_bandwidth.is_some(),
        weighted,
        pooled,
        bundle,
    })
}
