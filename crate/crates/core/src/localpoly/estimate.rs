use serde::{Deserialize, Serialize};

use super::bandwidth::{factorial, select_centered, Bandwidths};
use super::fit::{check_lengths, fit_window, residuals_at, PolyFit, Side};
use crate::datamodel::CutoffOptions;
use crate::error::{RdError, Result};
use crate::kernel::KernelKind;
use crate::stats::{critical_value, two_sided_p};

/// Where the main bandwidth came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthSource {
    Mserd,
    Manual,
}

/// A sharp RD fit at one cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdResult {
    pub tau_conventional: f64,
    pub tau_bias_corrected: f64,
    pub se_conventional: f64,
    pub se_robust: f64,
    /// Robust confidence interval around `tau_bias_corrected`.
    pub ci_robust: [f64; 2],
    pub p_value_robust: f64,
    pub h_left: f64,
    pub h_right: f64,
    pub b_left: f64,
    pub b_right: f64,
    /// Kernel-positive observations within `h` on each side.
    pub n_left: usize,
    pub n_right: usize,
    pub p: usize,
    pub q: usize,
    pub deriv: usize,
    pub kernel: KernelKind,
    pub level: f64,
    pub bw_source: BandwidthSource,
    /// Order-`p` coefficients on `(x - c)^k` from each side.
    pub coef_left: Vec<f64>,
    pub coef_right: Vec<f64>,
}

/// Bias-corrected derivative estimate on one side: a linear combination of
/// outcomes plus its HC1 variance.
struct CorrectedSide {
    estimate: f64,
    variance: f64,
}

fn union_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len().max(b.len()));
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(_), Some(&y)) => {
                j += 1;
                y
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        out.push(next);
    }
    out
}

fn hc1_linear_variance(weights: &[f64], residuals: &[f64], n_params: usize) -> f64 {
    let m = weights.len();
    let dof = if m > n_params { m as f64 / (m - n_params) as f64 } else { 1.0 };
    dof * weights.iter().zip(residuals).map(|(a, e)| (a * e).powi(2)).sum::<f64>()
}

/// Order-`p` estimate at bandwidth `h` minus its leading bias, estimated by
/// the `(p + 1)`-th coefficient of an order-`q` fit at bandwidth `b`.
fn corrected_general(u: &[f64], y: &[f64], fit_p: &PolyFit, fit_q: &PolyFit, deriv: usize) -> CorrectedSide {
    let p = fit_p.order();
    // smoother of the order-p fit applied to u^{p+1}
    let lambda: f64 = fit_p
        .rows
        .iter()
        .enumerate()
        .map(|(c, &i)| fit_p.smoother[(deriv, c)] * u[i].powi(p as i32 + 1))
        .sum();
    let rows = union_sorted(&fit_p.rows, &fit_q.rows);
    let mut a = vec![0.0; rows.len()];
    let (mut ip, mut iq) = (0, 0);
    for (slot, &r) in rows.iter().enumerate() {
        if fit_p.rows.get(ip) == Some(&r) {
            a[slot] += fit_p.smoother[(deriv, ip)];
            ip += 1;
        }
        if fit_q.rows.get(iq) == Some(&r) {
            a[slot] -= lambda * fit_q.smoother[(p + 1, iq)];
            iq += 1;
        }
    }
    let residuals = residuals_at(&fit_q.coef, u, y, &rows);
    CorrectedSide {
        estimate: rows.iter().zip(&a).map(|(&i, ai)| ai * y[i]).sum(),
        variance: hc1_linear_variance(&a, &residuals, fit_q.coef.len()),
    }
}

/// With `b = h` and `q = p + 1` the corrected estimator is exactly the
/// order-`q` fit.
fn corrected_from_q(fit_q: &PolyFit, deriv: usize) -> CorrectedSide {
    let a: Vec<f64> = (0..fit_q.rows.len()).map(|c| fit_q.smoother[(deriv, c)]).collect();
    CorrectedSide {
        estimate: fit_q.coef[deriv],
        variance: hc1_linear_variance(&a, &fit_q.residuals, fit_q.coef.len()),
    }
}

fn resolve_bandwidths(
    u: &[f64],
    y: &[f64],
    opts: &CutoffOptions,
    weights: Option<&[f64]>,
) -> Result<(Bandwidths, BandwidthSource)> {
    if let Some(h_left) = opts.h_left {
        let h_right = opts.h_right.unwrap_or(h_left);
        let (b_left, b_right) = match (opts.b_left, opts.rho) {
            (Some(b), _) => (b, opts.b_right.unwrap_or(b)),
            (None, Some(rho)) => (h_left / rho, h_right / rho),
            (None, None) => (h_left / 0.5, h_right / 0.5),
        };
        let bw = Bandwidths {
            h_left,
            h_right,
            b_left,
            b_right,
        };
        return Ok((bw, BandwidthSource::Manual));
    }
    let mut bw = select_centered(u, y, &opts.fit_spec(), weights)?;
    match (opts.b_left, opts.rho) {
        (Some(b), _) => {
            bw.b_left = b;
            bw.b_right = opts.b_right.unwrap_or(b);
        }
        (None, Some(rho)) => {
            bw.b_left = bw.h_left / rho;
            bw.b_right = bw.h_right / rho;
        }
        (None, None) => {}
    }
    Ok((bw, BandwidthSource::Mserd))
}

/// RD effect at cutoff `c`: conventional order-`p` estimate plus the
/// bias-corrected estimate with robust inference.
pub fn rd_estimate(
    ys: &[f64],
    xs: &[f64],
    c: f64,
    opts: &CutoffOptions,
    weights: Option<&[f64]>,
) -> Result<RdResult> {
    check_lengths(ys, xs, weights)?;
    opts.validate()?;
    let u: Vec<f64> = xs.iter().map(|&x| x - c).collect();
    estimate_centered(&u, ys, opts, weights)
}

fn estimate_centered(
    u: &[f64],
    y: &[f64],
    opts: &CutoffOptions,
    weights: Option<&[f64]>,
) -> Result<RdResult> {
    let spec = opts.fit_spec();
    let (bw, bw_source) = resolve_bandwidths(u, y, opts, weights)?;
    let nu = spec.deriv;
    let fact = factorial(nu);

    let mut conventional = [0.0; 2];
    let mut conventional_var = [0.0; 2];
    let mut corrected = [0.0; 2];
    let mut corrected_var = [0.0; 2];
    let mut n_eff = [0; 2];
    let mut coefs: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for (s, side) in [Side::Left, Side::Right].into_iter().enumerate() {
        let (h, b) = match side {
            Side::Left => (bw.h_left, bw.b_left),
            Side::Right => (bw.h_right, bw.b_right),
        };
        let fit_p = fit_window(u, y, h, spec.p, spec.kernel, side, weights)?;
        let fit_q = fit_window(u, y, b, spec.q, spec.kernel, side, weights)?;
        conventional[s] = fit_p.coef[nu];
        conventional_var[s] = fit_p.hc1_covariance()[(nu, nu)];
        let bc = if h == b && spec.q == spec.p + 1 {
            corrected_from_q(&fit_q, nu)
        } else {
            corrected_general(u, y, &fit_p, &fit_q, nu)
        };
        corrected[s] = bc.estimate;
        corrected_var[s] = bc.variance;
        n_eff[s] = fit_p.rows.len();
        coefs[s] = fit_p.coef;
    }

    let tau_cl = fact * (conventional[1] - conventional[0]);
    let tau_bc = fact * (corrected[1] - corrected[0]);
    let se_cl = fact * (conventional_var[0] + conventional_var[1]).sqrt();
    let se_rb = fact * (corrected_var[0] + corrected_var[1]).sqrt();
    let z = critical_value(opts.level);
    let [coef_left, coef_right] = coefs;
    Ok(RdResult {
        tau_conventional: tau_cl,
        tau_bias_corrected: tau_bc,
        se_conventional: se_cl,
        se_robust: se_rb,
        ci_robust: [tau_bc - z * se_rb, tau_bc + z * se_rb],
        p_value_robust: two_sided_p(tau_bc, se_rb),
        h_left: bw.h_left,
        h_right: bw.h_right,
        b_left: bw.b_left,
        b_right: bw.b_right,
        n_left: n_eff[0],
        n_right: n_eff[1],
        p: spec.p,
        q: spec.q,
        deriv: nu,
        kernel: spec.kernel,
        level: opts.level,
        bw_source,
        coef_left,
        coef_right,
    })
}

pub(crate) fn require_both_sides(u: &[f64], what: &str) -> Result<()> {
    let left = u.iter().filter(|v| Side::Left.contains(**v)).count();
    let right = u.len() - left;
    if left == 0 || right == 0 {
        return Err(RdError::OneSidedSupport(format!(
            "{what}: {left} observations below and {right} at or above the cutoff"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localpoly::fit::fit_window;

    fn wiggly(n: usize) -> (Vec<f64>, Vec<f64>) {
        let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| 0.5 * x + x * x + if x >= 0.0 { 1.5 } else { 0.0 } + 0.3 * ((i * 7919 % 101) as f64 / 101.0 - 0.5))
            .collect();
        (xs, ys)
    }

    #[test]
    fn exact_step() {
        let xs: Vec<f64> = (0..100).map(|i| -1.0 + i as f64 / 49.5).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| if x >= 0.0 { 1.0 } else { 0.0 }).collect();
        let opts = CutoffOptions { h_left: Some(0.8), ..Default::default() };
        let r = rd_estimate(&ys, &xs, 0.0, &opts, None).unwrap();
        assert!((r.tau_conventional - 1.0).abs() < 1e-12);
        assert_eq!(r.se_conventional, 0.0);
        assert_eq!(r.se_robust, 0.0);
        assert_eq!(r.p_value_robust, 0.0);
    }

    #[test]
    fn equal_bandwidths_give_order_q_estimate_exactly() {
        let (xs, ys) = wiggly(400);
        let opts = CutoffOptions { h_left: Some(0.6), b_left: Some(0.6), ..Default::default() };
        let r = rd_estimate(&ys, &xs, 0.0, &opts, None).unwrap();
        let q_opts = CutoffOptions { p: 2, h_left: Some(0.6), ..Default::default() };
        let rq = rd_estimate(&ys, &xs, 0.0, &q_opts, None).unwrap();
        assert_eq!(r.tau_bias_corrected, rq.tau_conventional);
    }

    #[test]
    fn general_correction_reduces_to_order_q_fit() {
        let (xs, ys) = wiggly(400);
        let u = xs.clone();
        for side in [Side::Left, Side::Right] {
            let fp = fit_window(&u, &ys, 0.7, 1, KernelKind::Triangular, side, None).unwrap();
            let fq = fit_window(&u, &ys, 0.7, 2, KernelKind::Triangular, side, None).unwrap();
            let general = corrected_general(&u, &ys, &fp, &fq, 0);
            let direct = corrected_from_q(&fq, 0);
            assert!((general.estimate - direct.estimate).abs() < 1e-10);
            assert!((general.variance - direct.variance).abs() < 1e-10 * direct.variance);
        }
    }

    #[test]
    fn manual_bandwidth_echoed() {
        let (xs, ys) = wiggly(300);
        let opts = CutoffOptions { h_left: Some(0.5), ..Default::default() };
        let r = rd_estimate(&ys, &xs, 0.0, &opts, None).unwrap();
        assert_eq!((r.h_left, r.h_right, r.b_left, r.b_right), (0.5, 0.5, 1.0, 1.0));
        assert_eq!(r.bw_source, BandwidthSource::Manual);
        let opts = CutoffOptions { h_left: Some(0.5), rho: Some(0.25), ..Default::default() };
        let r = rd_estimate(&ys, &xs, 0.0, &opts, None).unwrap();
        assert_eq!(r.b_left, 2.0);
    }

    #[test]
    fn ci_width_and_containment() {
        let (xs, ys) = wiggly(500);
        let r = rd_estimate(&ys, &xs, 0.0, &CutoffOptions::default(), None).unwrap();
        let z = critical_value(95.0);
        assert!(r.ci_robust[0] <= r.tau_bias_corrected && r.tau_bias_corrected <= r.ci_robust[1]);
        assert!(((r.ci_robust[1] - r.ci_robust[0]) - 2.0 * z * r.se_robust).abs() < 1e-12);
        assert_eq!(r.bw_source, BandwidthSource::Mserd);
        assert!(r.b_left >= r.h_left);
    }

    #[test]
    fn derivative_effect_scaled_by_factorial() {
        // kink of slope 2 at zero, no jump
        let xs: Vec<f64> = (0..200).map(|i| -1.0 + i as f64 / 99.5).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| if x >= 0.0 { 3.0 * x } else { x }).collect();
        let opts = CutoffOptions { deriv: 1, h_left: Some(0.5), ..Default::default() };
        let r = rd_estimate(&ys, &xs, 0.0, &opts, None).unwrap();
        assert!((r.tau_conventional - 2.0).abs() < 1e-10);
        assert!((r.tau_bias_corrected - 2.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_invalid_orders() {
        let (xs, ys) = wiggly(100);
        let opts = CutoffOptions { p: 2, q: Some(2), ..Default::default() };
        assert!(rd_estimate(&ys, &xs, 0.0, &opts, None).unwrap_err().is_validation());
    }
}
