//! Plug-in MSE-optimal bandwidths.
//!
//! Per side, a global polynomial pilot (order `max(4, q + 1)`) supplies the
//! higher-order derivatives and the residual variance, and a one-sided count
//! near the cutoff supplies the score density. These are plugged into the
//! asymptotic MSE of the boundary local polynomial estimator, using exact
//! kernel moments. A regularization term built from the pilot's coefficient
//! variance keeps the bandwidth finite when the estimated bias vanishes.
//!
//! The main bandwidth `h` is common to both sides and targets the order-`p`
//! estimator of the `deriv`-th derivative. The bias bandwidth `b` targets
//! the order-`q` estimator of the `(p + 1)`-th derivative, and is never
//! smaller than `h`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::fit::{check_lengths, weighted_poly_fit, Side};
use crate::error::{RdError, Result};
use crate::kernel::KernelKind;

const MIN_SIDE_OBS: usize = 10;
const REGULARIZATION_SCALE: f64 = 3.0;
/// Rule-of-thumb constant for the density pilot window.
const DENSITY_WINDOW_SCALE: f64 = 2.576;

/// Polynomial orders and kernel of a local polynomial RD fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub p: usize,
    pub q: usize,
    pub deriv: usize,
    pub kernel: KernelKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub h_left: f64,
    pub h_right: f64,
    pub b_left: f64,
    pub b_right: f64,
}

struct SidePilot {
    side: Side,
    coef: Vec<f64>,
    coef_var: Vec<f64>,
    sigma2: f64,
    /// Observations per unit of score just off the cutoff on this side.
    density: f64,
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `(e_ν' Γ⁻¹ ϑ, e_ν' Γ⁻¹ Ψ Γ⁻¹ e_ν)` for the one-sided boundary problem.
pub(crate) fn boundary_constants(kernel: KernelKind, order: usize, deriv: usize, side: Side) -> (f64, f64) {
    let k = order + 1;
    let sign = |e: usize| match side {
        Side::Right => 1.0,
        Side::Left if e.is_multiple_of(2) => 1.0,
        Side::Left => -1.0,
    };
    let gamma = DMatrix::from_fn(k, k, |i, j| sign(i + j) * kernel.moment(i + j));
    let psi = DMatrix::from_fn(k, k, |i, j| sign(i + j) * kernel.squared_moment(i + j));
    let theta = DVector::from_fn(k, |i, _| sign(i + k) * kernel.moment(i + k));
    let gamma_inv = gamma.try_inverse().expect("kernel moment matrix is positive definite");
    let bias = (&gamma_inv * theta)[deriv];
    let var = (&gamma_inv * psi * &gamma_inv)[(deriv, deriv)];
    (bias, var)
}

fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let pos = prob * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn density_window(u: &[f64]) -> f64 {
    let n = u.len() as f64;
    let mean = u.iter().sum::<f64>() / n;
    let sd = (u.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = u.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.349) } else { sd };
    DENSITY_WINDOW_SCALE * spread * n.powf(-0.2)
}

fn side_pilot(u: &[f64], y: &[f64], weights: Option<&[f64]>, side: Side, order: usize, window: f64) -> Result<SidePilot> {
    let rows: Vec<usize> = (0..u.len()).filter(|&i| side.contains(u[i])).collect();
    let n_side = rows.len();
    let extent = rows.iter().map(|&i| u[i].abs()).fold(0.0, f64::max);
    let w: Vec<f64> = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; u.len()],
    };
    let fit = weighted_poly_fit(u, y, &w, rows, order, extent, side)?;
    let cov = fit.hc1_covariance();
    let dof = n_side.saturating_sub(order + 1).max(1) as f64;
    let sigma2 = fit.residuals.iter().map(|e| e * e).sum::<f64>() / dof;
    let near = fit.rows.iter().filter(|&&i| u[i].abs() <= window).count();
    let density = if near > 0 && window > 0.0 {
        near as f64 / window
    } else {
        n_side as f64 / extent.max(f64::MIN_POSITIVE)
    };
    Ok(SidePilot {
        side,
        coef_var: (0..=order).map(|j| cov[(j, j)]).collect(),
        coef: fit.coef,
        sigma2,
        density,
    })
}

/// MSE-optimal common bandwidth for the order-`order` estimator of the
/// `deriv`-th derivative jump. `None` when the plug-in has no variance or no
/// bias to trade off.
fn mse_bandwidth(kernel: KernelKind, order: usize, deriv: usize, pilots: &[SidePilot; 2]) -> Option<f64> {
    let fact = factorial(deriv);
    let mut bias = [0.0; 2];
    let mut reg = 0.0;
    let mut var = 0.0;
    for (s, pilot) in pilots.iter().enumerate() {
        let (bc, vc) = boundary_constants(kernel, order, deriv, pilot.side);
        bias[s] = fact * bc * pilot.coef[order + 1];
        reg += (fact * bc).powi(2) * pilot.coef_var[order + 1];
        var += fact * fact * vc * pilot.sigma2 / pilot.density;
    }
    let num = (1 + 2 * deriv) as f64 * var;
    let den = 2.0 * (order + 1 - deriv) as f64 * ((bias[1] - bias[0]).powi(2) + REGULARIZATION_SCALE * reg);
    if num > 0.0 && den > 0.0 {
        Some((num / den).powf(1.0 / (2 * order + 3) as f64))
    } else if den > 0.0 {
        Some(0.0)
    } else {
        None
    }
}

/// Data-driven bandwidths `(h, h, b, b)` for an RD fit at cutoff `c`.
pub fn select_bandwidth(
    ys: &[f64],
    xs: &[f64],
    c: f64,
    spec: &FitSpec,
    weights: Option<&[f64]>,
) -> Result<Bandwidths> {
    check_lengths(ys, xs, weights)?;
    let u: Vec<f64> = xs.iter().map(|&x| x - c).collect();
    select_centered(&u, ys, spec, weights)
}

pub(crate) fn select_centered(u: &[f64], ys: &[f64], spec: &FitSpec, weights: Option<&[f64]>) -> Result<Bandwidths> {
    let mut left: Vec<f64> = u.iter().copied().filter(|v| Side::Left.contains(*v)).map(f64::abs).collect();
    let mut right: Vec<f64> = u.iter().copied().filter(|v| Side::Right.contains(*v)).collect();
    for (side, d) in [(Side::Left, &left), (Side::Right, &right)] {
        if d.len() < MIN_SIDE_OBS {
            return Err(RdError::InsufficientObservations {
                side: side.name(),
                found: d.len(),
                needed: MIN_SIDE_OBS,
            });
        }
    }
    left.sort_by(f64::total_cmp);
    right.sort_by(f64::total_cmp);

    // smallest bandwidth leaving enough kernel-positive points per side for
    // the order-q fit, and the largest that still reaches every observation
    let need = (spec.q + 3).min(MIN_SIDE_OBS);
    let h_min = left[need - 1].max(right[need - 1]) * (1.0 + 1e-6);
    let h_max = left[left.len() - 1].max(right[right.len() - 1]);
    let h_min = h_min.min(h_max);

    let pilot_order = 4.max(spec.q + 1);
    let window = density_window(u);
    let pilots = [
        side_pilot(u, ys, weights, Side::Left, pilot_order, window)?,
        side_pilot(u, ys, weights, Side::Right, pilot_order, window)?,
    ];

    let clamp = |v: Option<f64>| v.unwrap_or(h_max).clamp(h_min, h_max);
    let h = clamp(mse_bandwidth(spec.kernel, spec.p, spec.deriv, &pilots));
    let b = clamp(mse_bandwidth(spec.kernel, spec.q, spec.p + 1, &pilots)).max(h);
    Ok(Bandwidths {
        h_left: h,
        h_right: h,
        b_left: b,
        b_right: b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_linear_triangular_constants() {
        // closed-form moments: ∫(1-u)u^k = 1/((k+1)(k+2)), ∫(1-u)²u^k = 2/((k+1)(k+2)(k+3))
        let (bias, var) = boundary_constants(KernelKind::Triangular, 1, 0, Side::Right);
        assert!((bias + 0.1).abs() < 1e-12, "{bias}");
        assert!((var - 4.8).abs() < 1e-10, "{var}");
        let (bias_l, var_l) = boundary_constants(KernelKind::Triangular, 1, 0, Side::Left);
        // u² is even, so the left side shares the sign
        assert!((bias_l + 0.1).abs() < 1e-12, "{bias_l}");
        assert!((var_l - var).abs() < 1e-10);
        // local constant: bias term u is odd, Γ = 1/2, ϑ = 1/6
        let (b0r, _) = boundary_constants(KernelKind::Triangular, 0, 0, Side::Right);
        let (b0l, _) = boundary_constants(KernelKind::Triangular, 0, 0, Side::Left);
        assert!((b0r - 1.0 / 3.0).abs() < 1e-12 && (b0l + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_outcome_gives_finite_bandwidth() {
        let xs: Vec<f64> = (0..201).map(|i| -1.0 + i as f64 / 100.0).collect();
        let ys = vec![3.0; xs.len()];
        let spec = FitSpec { p: 1, q: 2, deriv: 0, kernel: KernelKind::Triangular };
        let bw = select_bandwidth(&ys, &xs, 0.0, &spec, None).unwrap();
        assert!(bw.h_left.is_finite() && bw.h_left > 0.0 && bw.h_left <= 2.0);
        assert!(bw.b_left >= bw.h_left);
    }

    #[test]
    fn too_few_observations() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 - 5.0).collect();
        let ys = xs.clone();
        let spec = FitSpec { p: 1, q: 2, deriv: 0, kernel: KernelKind::Triangular };
        let err = select_bandwidth(&ys, &xs, 0.0, &spec, None).unwrap_err();
        assert!(matches!(err, RdError::InsufficientObservations { side: "left", found: 5, .. }));
    }
}
