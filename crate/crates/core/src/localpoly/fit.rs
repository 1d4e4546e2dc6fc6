use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result};
use crate::kernel::KernelKind;

/// Which side of the cutoff a fit uses. Ties at the cutoff go right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    /// Membership of a centered score `u = x - c`, ignoring the bandwidth.
    pub fn contains(self, u: f64) -> bool {
        match self {
            Side::Left => u < 0.0,
            Side::Right => u >= 0.0,
        }
    }
}

/// Weighted polynomial fit in the centered score `u = x - c`.
///
/// `coef[k]` is the coefficient on `u^k`. `smoother` maps the outcomes of the
/// rows in `rows` (same order) onto `coef`, so `coef = smoother * y[rows]`.
#[derive(Debug, Clone)]
pub(crate) struct PolyFit {
    pub rows: Vec<usize>,
    pub coef: Vec<f64>,
    pub smoother: DMatrix<f64>,
    pub residuals: Vec<f64>,
}

impl PolyFit {
    pub fn order(&self) -> usize {
        self.coef.len() - 1
    }

    /// HC1 sandwich covariance of the coefficients.
    pub fn hc1_covariance(&self) -> DMatrix<f64> {
        let m = self.rows.len();
        let k = self.coef.len();
        let dof = if m > k { m as f64 / (m - k) as f64 } else { 1.0 };
        let mut scaled = self.smoother.clone();
        for (j, e) in self.residuals.iter().enumerate() {
            let s = e.abs() * dof.sqrt();
            for i in 0..k {
                scaled[(i, j)] *= s;
            }
        }
        &scaled * scaled.transpose()
    }
}

pub(crate) fn eval_poly(coef: &[f64], u: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &b| acc * u + b)
}

/// Residuals of the polynomial `coef` on `rows`. Residuals that are all at
/// roundoff level relative to the outcomes are reported as an exact fit.
pub(crate) fn residuals_at(coef: &[f64], u: &[f64], y: &[f64], rows: &[usize]) -> Vec<f64> {
    let mut residuals: Vec<f64> = rows.iter().map(|&i| y[i] - eval_poly(coef, u[i])).collect();
    let y_scale = rows.iter().map(|&i| y[i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    if residuals.iter().all(|e| e.abs() <= 1e3 * f64::EPSILON * y_scale) {
        residuals.iter_mut().for_each(|e| *e = 0.0);
    }
    residuals
}

/// Solves the weighted least-squares problem on the rows with positive
/// weight. `scale` normalizes the abscissae before factorization; the
/// returned coefficients are in raw `u` units.
pub(crate) fn weighted_poly_fit(
    u: &[f64],
    y: &[f64],
    w: &[f64],
    rows: Vec<usize>,
    order: usize,
    scale: f64,
    side: Side,
) -> Result<PolyFit> {
    let k = order + 1;
    let m = rows.len();
    if m < k {
        return Err(RdError::InsufficientObservations {
            side: side.name(),
            found: m,
            needed: k,
        });
    }
    let scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };

    let sqrt_w: Vec<f64> = rows.iter().map(|&i| w[i].sqrt()).collect();
    let design = DMatrix::from_fn(m, k, |r, j| {
        let t = u[rows[r]] / scale;
        sqrt_w[r] * t.powi(j as i32)
    });
    let qr = design.qr();
    let r = qr.r();
    let diag_max = (0..k).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if diag_max == 0.0 || (0..k).any(|j| r[(j, j)].abs() <= 1e-10 * diag_max) {
        return Err(RdError::Collinear { side: side.name() });
    }
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(RdError::Collinear { side: side.name() })?;
    // smoother for the scaled coefficients, then rescale rows by scale^-j
    let mut smoother = r_inv * qr.q().transpose();
    for (c, sw) in sqrt_w.iter().enumerate() {
        for j in 0..k {
            smoother[(j, c)] *= sw;
        }
    }
    for j in 0..k {
        let f = scale.powi(-(j as i32));
        for c in 0..m {
            smoother[(j, c)] *= f;
        }
    }

    let coef: Vec<f64> = (0..k)
        .map(|j| (0..m).map(|c| smoother[(j, c)] * y[rows[c]]).sum())
        .collect();

    let residuals = residuals_at(&coef, u, y, &rows);

    Ok(PolyFit {
        rows,
        coef,
        smoother,
        residuals,
    })
}

/// Rows inside the one-sided kernel window with strictly positive weight,
/// together with the combined kernel-times-sampling weight for every row.
pub(crate) fn side_window(
    u: &[f64],
    h: f64,
    kernel: KernelKind,
    side: Side,
    sampling: Option<&[f64]>,
) -> (Vec<usize>, Vec<f64>) {
    let mut rows = Vec::new();
    let mut w = vec![0.0; u.len()];
    for (i, &ui) in u.iter().enumerate() {
        if !side.contains(ui) {
            continue;
        }
        let kw = kernel.weight(ui / h);
        let sw = sampling.map_or(1.0, |s| s[i]);
        let wi = kw * sw;
        if wi > 0.0 {
            rows.push(i);
            w[i] = wi;
        }
    }
    (rows, w)
}

/// One-sided local polynomial fit at a cutoff.
#[derive(Debug, Clone)]
pub struct SideFit {
    pub side: Side,
    /// Coefficients on `(x - c)^k`, `k = 0..=p`.
    pub coefficients: Vec<f64>,
    /// HC1 heteroskedasticity-robust covariance of `coefficients`.
    pub covariance: DMatrix<f64>,
    pub n_effective: usize,
    pub bandwidth: f64,
}

/// Kernel-weighted polynomial regression of `ys` on `xs - c` using the
/// observations on one side of `c` within bandwidth `h`.
#[allow(clippy::too_many_arguments)]
pub fn local_poly_fit(
    ys: &[f64],
    xs: &[f64],
    c: f64,
    h: f64,
    p: usize,
    kernel: KernelKind,
    side: Side,
    weights: Option<&[f64]>,
) -> Result<SideFit> {
    check_lengths(ys, xs, weights)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(RdError::InvalidOption {
            option: "h".into(),
            value: h.to_string(),
            reason: "bandwidth must be positive and finite".into(),
        });
    }
    let u: Vec<f64> = xs.iter().map(|&x| x - c).collect();
    let fit = fit_window(&u, ys, h, p, kernel, side, weights)?;
    Ok(SideFit {
        side,
        covariance: fit.hc1_covariance(),
        n_effective: fit.rows.len(),
        coefficients: fit.coef,
        bandwidth: h,
    })
}

pub(crate) fn fit_window(
    u: &[f64],
    y: &[f64],
    h: f64,
    order: usize,
    kernel: KernelKind,
    side: Side,
    sampling: Option<&[f64]>,
) -> Result<PolyFit> {
    let (rows, w) = side_window(u, h, kernel, side, sampling);
    weighted_poly_fit(u, y, &w, rows, order, h, side)
}

pub(crate) fn check_lengths(ys: &[f64], xs: &[f64], weights: Option<&[f64]>) -> Result<()> {
    if ys.len() != xs.len() {
        return Err(RdError::Dimension(format!(
            "{} outcomes vs {} scores",
            ys.len(),
            xs.len()
        )));
    }
    if let Some(w) = weights {
        if w.len() != xs.len() {
            return Err(RdError::Dimension(format!(
                "{} weights vs {} scores",
                w.len(),
                xs.len()
            )));
        }
    }
    Ok(())
}
