//! Multiple scores: one score facing an ordered set of cumulative cutoffs,
//! and two scores with a treatment region whose frontier is the boundary.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{CutoffOptions, Dataset, DesignKind, PerCutoffOptions};
use crate::error::{RdError, Result};
use crate::localpoly::{rd_estimate, require_both_sides, RdResult};
use crate::multicutoff::cutoff_label;

/// Closest cutoff to `x`. Exact midpoints go to the lower cutoff.
pub fn assign_closest_cutoff(x: f64, cutoffs: &[f64]) -> f64 {
    assert!(!cutoffs.is_empty(), "no cutoffs");
    let mut best = cutoffs[0];
    for &c in &cutoffs[1..] {
        let (d, db) = ((x - c).abs(), (x - best).abs());
        if d < db || (d == db && c < best) {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub lo: f64,
    pub hi: f64,
}

impl ScoreRange {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

impl std::str::FromStr for ScoreRange {
    type Err = RdError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || RdError::InvalidOption {
            option: "range".into(),
            value: s.into(),
            reason: "expected lo,hi".into(),
        };
        let (lo, hi) = s.split_once(',').ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        if !(lo <= hi) {
            return Err(bad());
        }
        Ok(ScoreRange { lo, hi })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeEstimate {
    pub cutoff: f64,
    pub range: Option<ScoreRange>,
    /// Observations in the estimation sample.
    pub n_sample: usize,
    pub result: RdResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeOutput {
    pub estimates: Vec<CumulativeEstimate>,
    /// Per adjacent pair, observations inside both estimation windows.
    pub overlap: Vec<usize>,
    pub warnings: Vec<String>,
}

fn window_members(xs: &[f64], e: &CumulativeEstimate) -> Vec<bool> {
    let r = &e.result;
    let (left, right) = (r.h_left.max(r.b_left), r.h_right.max(r.b_right));
    xs.iter()
        .map(|&x| {
            let u = x - e.cutoff;
            let in_range = e.range.is_none_or(|rg| rg.contains(x));
            in_range && -left <= u && u <= right
        })
        .collect()
}

/// One RD fit per cutoff of an ordered cumulative design, each on the
/// observations inside that cutoff's range (all observations when no ranges
/// are given).
pub fn cumulative_estimates(
    ys: &[f64],
    xs: &[f64],
    cutoffs: &[f64],
    ranges: Option<&[ScoreRange]>,
    options: &PerCutoffOptions,
    weights: Option<&[f64]>,
) -> Result<CumulativeOutput> {
    if cutoffs.is_empty() {
        return Err(RdError::Invalid("no cutoffs".into()));
    }
    if cutoffs.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(RdError::Invalid("cumulative cutoffs must be strictly increasing".into()));
    }
    options.expect_len(cutoffs.len())?;
    if let Some(r) = ranges {
        if r.len() != cutoffs.len() {
            return Err(RdError::Dimension(format!(
                "{} ranges for {} cutoffs",
                r.len(),
                cutoffs.len()
            )));
        }
        for (c, rg) in cutoffs.iter().zip(r) {
            if !rg.contains(*c) {
                return Err(RdError::InvalidOption {
                    option: "range".into(),
                    value: format!("{},{}", rg.lo, rg.hi),
                    reason: format!("does not contain cutoff {}", cutoff_label(*c)),
                });
            }
        }
    }
    let estimates = cutoffs
        .par_iter()
        .enumerate()
        .map(|(j, &c)| {
            let label = format!("cutoff {}", cutoff_label(c));
            let range = ranges.map(|r| r[j]);
            let idx: Vec<usize> = (0..xs.len())
                .filter(|&i| range.is_none_or(|rg| rg.contains(xs[i])))
                .collect();
            if idx.is_empty() {
                let rg = range.expect("unrestricted sample is nonempty");
                return Err(RdError::at(&label, RdError::EmptyWindow { lower: rg.lo, upper: rg.hi }));
            }
            let y: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
            let x: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
            let w: Option<Vec<f64>> = weights.map(|w| idx.iter().map(|&i| w[i]).collect());
            let result = rd_estimate(&y, &x, c, options.get(j), w.as_deref()).map_err(|e| RdError::at(&label, e))?;
            Ok(CumulativeEstimate {
                cutoff: c,
                range,
                n_sample: idx.len(),
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let members: Vec<Vec<bool>> = estimates.iter().map(|e| window_members(xs, e)).collect();
    let overlap: Vec<usize> = members
        .windows(2)
        .map(|m| m[0].iter().zip(&m[1]).filter(|(a, b)| **a && **b).count())
        .collect();
    let mut warnings = Vec::new();
    if ranges.is_none() && cutoffs.len() > 1 {
        warnings.push(
            "no ranges given: every cutoff uses the full sample, so units treated at other \
             levels may enter each estimate"
                .to_string(),
        );
    }
    for (j, &n) in overlap.iter().enumerate() {
        if n > 0 {
            warnings.push(format!(
                "{n} observations enter the estimation windows of both cutoff {} and cutoff {}",
                cutoff_label(cutoffs[j]),
                cutoff_label(cutoffs[j + 1])
            ));
        }
    }
    Ok(CumulativeOutput {
        estimates,
        overlap,
        warnings,
    })
}

/// Signed Euclidean distance, positive for treated units.
pub fn distance_to_point(score: (f64, f64), point: (f64, f64), treated: bool) -> f64 {
    let d = (score.0 - point.0).hypot(score.1 - point.1);
    if treated {
        d
    } else {
        -d
    }
}

/// Frontier of a treatment region in the plane of the two scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Boundary {
    /// Treatment region `{x1 <= a, x2 <= b}`; the boundary is
    /// `{x1 <= a, x2 = b} ∪ {x1 = a, x2 <= b}`.
    Corner { a: f64, b: f64 },
    /// Piecewise-linear boundary through the vertices.
    Polyline { vertices: Vec<(f64, f64)> },
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - (a.0 + t * dx)).hypot(p.1 - (a.1 + t * dy))
}

impl Boundary {
    pub fn validate(&self) -> Result<()> {
        match self {
            Boundary::Corner { a, b } if a.is_finite() && b.is_finite() => Ok(()),
            Boundary::Corner { .. } => Err(RdError::Invalid("boundary corner must be finite".into())),
            Boundary::Polyline { vertices } if vertices.len() < 2 => Err(RdError::Invalid(format!(
                "boundary polyline needs at least 2 vertices, got {}",
                vertices.len()
            ))),
            Boundary::Polyline { .. } => Ok(()),
        }
    }

    /// Whether the corner region assigns treatment. Only defined for the
    /// corner form.
    pub fn treats(&self, score: (f64, f64)) -> Option<bool> {
        match *self {
            Boundary::Corner { a, b } => Some(score.0 <= a && score.1 <= b),
            Boundary::Polyline { .. } => None,
        }
    }

    /// Unsigned distance from `score` to the boundary set.
    pub fn distance(&self, score: (f64, f64)) -> Result<f64> {
        self.validate()?;
        Ok(match self {
            Boundary::Corner { a, b } => {
                let (x1, x2) = score;
                let horizontal = (x1 - x1.min(*a)).hypot(x2 - b);
                let vertical = (x1 - a).hypot(x2 - x2.min(*b));
                horizontal.min(vertical)
            }
            Boundary::Polyline { vertices } => vertices
                .windows(2)
                .map(|s| segment_distance(score, s[0], s[1]))
                .fold(f64::INFINITY, f64::min),
        })
    }
}

/// Signed shortest distance to the boundary, positive for treated units.
pub fn perpendicular_distance_to_boundary(score: (f64, f64), boundary: &Boundary, treated: bool) -> Result<f64> {
    let d = boundary.distance(score)?;
    Ok(if treated { d } else { -d })
}

fn row_list(rows: &[usize]) -> String {
    const SHOWN: usize = 10;
    let mut s: Vec<String> = rows.iter().take(SHOWN).map(|r| (r + 1).to_string()).collect();
    if rows.len() > SHOWN {
        s.push(format!("and {} more", rows.len() - SHOWN));
    }
    s.join(", ")
}

/// Fails when the treatment column disagrees with the corner region.
pub fn check_treatment_region(dataset: &Dataset, boundary: &Boundary) -> Result<()> {
    let bad: Vec<usize> = dataset
        .observations
        .iter()
        .filter_map(|o| {
            let x2 = o.x2?;
            let expected = boundary.treats((o.x1, x2))?;
            (o.treat != Some(expected)).then_some(o.row)
        })
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(RdError::Inconsistent(format!(
            "treatment does not match the declared region on data rows {}",
            row_list(&bad)
        )))
    }
}

/// Fails when a normalized score has the wrong sign for its unit's
/// treatment status. Zero is compatible with both.
pub fn check_xnorm_signs(xnorm: &[f64], treats: &[bool], rows: &[usize]) -> Result<()> {
    let bad: Vec<usize> = xnorm
        .iter()
        .zip(treats)
        .zip(rows)
        .filter(|((&v, &t), _)| (t && v < 0.0) || (!t && v > 0.0))
        .map(|(_, &r)| r)
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(RdError::Inconsistent(format!(
            "normalized score sign disagrees with treatment on data rows {}",
            row_list(&bad)
        )))
    }
}

pub fn point_label(point: (f64, f64)) -> String {
    format!("({},{})", point.0, point.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEstimate {
    pub point: (f64, f64),
    pub result: RdResult,
}

fn require_bivariate(dataset: &Dataset) -> Result<()> {
    if dataset.kind != DesignKind::Bivariate {
        return Err(RdError::Invalid("boundary estimates need a bivariate dataset".into()));
    }
    Ok(())
}

/// One RD fit per boundary point on the signed distance to that point.
pub fn boundary_point_estimates(
    dataset: &Dataset,
    points: &[(f64, f64)],
    options: &PerCutoffOptions,
) -> Result<Vec<BoundaryEstimate>> {
    require_bivariate(dataset)?;
    options.expect_len(points.len())?;
    let ys = dataset.ys();
    let ws = dataset.weights();
    points
        .par_iter()
        .enumerate()
        .map(|(j, &point)| {
            let label = format!("point {}", point_label(point));
            let dist: Vec<f64> = dataset
                .observations
                .iter()
                .map(|o| {
                    let x2 = o.x2.expect("bivariate rows carry x2");
                    distance_to_point((o.x1, x2), point, o.treat.expect("bivariate rows carry treat"))
                })
                .collect();
            require_both_sides(&dist, "signed distance").map_err(|e| RdError::at(&label, e))?;
            let result = rd_estimate(&ys, &dist, 0.0, options.get(j), ws.as_deref()).map_err(|e| RdError::at(&label, e))?;
            Ok(BoundaryEstimate { point, result })
        })
        .collect()
}

/// Signed perpendicular distance of every unit to `boundary`.
pub fn normalized_scores(dataset: &Dataset, boundary: &Boundary) -> Result<Vec<f64>> {
    require_bivariate(dataset)?;
    dataset
        .observations
        .iter()
        .map(|o| {
            let x2 = o.x2.expect("bivariate rows carry x2");
            perpendicular_distance_to_boundary((o.x1, x2), boundary, o.treat.expect("bivariate rows carry treat"))
        })
        .collect()
}

/// RD fit pooling the boundary on a normalized score with cutoff 0.
pub fn pooled_on_xnorm(ys: &[f64], xnorm: &[f64], pooled: &CutoffOptions, weights: Option<&[f64]>) -> Result<RdResult> {
    require_both_sides(xnorm, "normalized score").map_err(|e| RdError::at("pooled", e))?;
    rd_estimate(ys, xnorm, 0.0, pooled, weights).map_err(|e| RdError::at("pooled", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::Observation;

    #[test]
    fn closest_cutoff() {
        let c = [33.0, 66.0];
        assert_eq!(assign_closest_cutoff(40.0, &c), 33.0);
        assert_eq!(assign_closest_cutoff(49.5, &c), 33.0);
        assert_eq!(assign_closest_cutoff(49.6, &c), 66.0);
        assert_eq!(assign_closest_cutoff(70.0, &c), 66.0);
        assert_eq!(assign_closest_cutoff(-5.0, &[7.0]), 7.0);
    }

    #[test]
    fn point_distances() {
        assert_eq!(distance_to_point((47.0, 46.0), (50.0, 50.0), true), 5.0);
        assert_eq!(distance_to_point((53.0, 54.0), (50.0, 50.0), false), -5.0);
        let d = distance_to_point((50.0, 50.0), (50.0, 50.0), true);
        assert!(d == 0.0 && d.is_sign_positive());
    }

    #[test]
    fn corner_distances() {
        let b = Boundary::Corner { a: 50.0, b: 50.0 };
        assert_eq!(perpendicular_distance_to_boundary((25.0, 40.0), &b, true).unwrap(), 10.0);
        let d = perpendicular_distance_to_boundary((60.0, 60.0), &b, false).unwrap();
        assert!((d + 200f64.sqrt()).abs() < 1e-12);
        assert_eq!(perpendicular_distance_to_boundary((70.0, 20.0), &b, false).unwrap(), -20.0);
        assert_eq!(perpendicular_distance_to_boundary((50.0, 10.0), &b, true).unwrap(), 0.0);
    }

    #[test]
    fn polyline_matches_corner() {
        let corner = Boundary::Corner { a: 50.0, b: 50.0 };
        let poly = Boundary::Polyline {
            vertices: vec![(-1e6, 50.0), (50.0, 50.0), (50.0, -1e6)],
        };
        for score in [(25.0, 40.0), (60.0, 60.0), (70.0, 20.0), (10.0, 80.0), (49.0, 49.5)] {
            let (a, b) = (corner.distance(score).unwrap(), poly.distance(score).unwrap());
            assert!((a - b).abs() < 1e-9, "{score:?}: {a} vs {b}");
        }
        let short = Boundary::Polyline { vertices: vec![(0.0, 0.0)] };
        assert!(short.distance((1.0, 1.0)).is_err());
    }

    #[test]
    fn range_parsing() {
        let r: ScoreRange = "0, 65.5".parse().unwrap();
        assert_eq!((r.lo, r.hi), (0.0, 65.5));
        assert!("3".parse::<ScoreRange>().is_err());
        assert!("5,1".parse::<ScoreRange>().is_err());
    }

    fn cumulative_data(n: usize) -> (Vec<f64>, Vec<f64>) {
        let xs: Vec<f64> = (0..n).map(|i| 100.0 * (i as f64 + 0.5) / n as f64).collect();
        let ys = xs
            .iter()
            .map(|&x| 0.02 * x + if x >= 33.0 { 5.0 } else { 0.0 } + if x >= 66.0 { -3.0 } else { 0.0 })
            .collect();
        (xs, ys)
    }

    #[test]
    fn cumulative_exact_effects() {
        let (xs, ys) = cumulative_data(1000);
        let mut opts = PerCutoffOptions::defaults(2);
        for o in &mut opts.0 {
            o.h_left = Some(10.0);
            o.b_left = Some(10.0);
        }
        let ranges = [ScoreRange { lo: 0.0, hi: 65.5 }, ScoreRange { lo: 33.5, hi: 100.0 }];
        let out = cumulative_estimates(&ys, &xs, &[33.0, 66.0], Some(&ranges), &opts, None).unwrap();
        assert!((out.estimates[0].result.tau_conventional - 5.0).abs() < 1e-8);
        assert!((out.estimates[1].result.tau_conventional + 3.0).abs() < 1e-8);
        assert_eq!(out.overlap, [0]);
        assert!(out.warnings.is_empty());

        let full = cumulative_estimates(&ys, &xs, &[33.0, 66.0], None, &opts, None).unwrap();
        assert_eq!(full.estimates[0].result, out.estimates[0].result);
        assert_eq!(full.warnings.len(), 1);

        // b defaults to 2h: windows [13, 53] and [46, 86] share x in [46, 53]
        for o in &mut opts.0 {
            o.b_left = None;
        }
        let wide = cumulative_estimates(&ys, &xs, &[33.0, 66.0], Some(&ranges), &opts, None).unwrap();
        assert_eq!(wide.overlap, [70]);
        assert_eq!(wide.warnings.len(), 1);
    }

    #[test]
    fn cumulative_errors() {
        let (xs, ys) = cumulative_data(200);
        let opts = PerCutoffOptions::defaults(2);
        let bad = [ScoreRange { lo: 40.0, hi: 65.5 }, ScoreRange { lo: 33.5, hi: 100.0 }];
        assert!(cumulative_estimates(&ys, &xs, &[33.0, 66.0], Some(&bad), &opts, None).is_err());
        assert!(cumulative_estimates(&ys, &xs, &[66.0, 33.0], None, &opts, None).is_err());
    }

    fn bivariate(points: &[((f64, f64), bool, f64)]) -> Dataset {
        let obs = points
            .iter()
            .enumerate()
            .map(|(row, &((x1, x2), t, y))| Observation {
                row,
                x2: Some(x2),
                treat: Some(t),
                ..Observation::new(y, x1)
            })
            .collect();
        Dataset::new(DesignKind::Bivariate, obs).unwrap()
    }

    #[test]
    fn region_consistency() {
        let b = Boundary::Corner { a: 50.0, b: 50.0 };
        let ok = bivariate(&[((10.0, 10.0), true, 0.0), ((60.0, 10.0), false, 0.0)]);
        check_treatment_region(&ok, &b).unwrap();
        let bad = bivariate(&[((10.0, 10.0), true, 0.0), ((60.0, 10.0), true, 0.0)]);
        let msg = check_treatment_region(&bad, &b).unwrap_err().to_string();
        assert!(msg.contains("rows 2"), "{msg}");
        assert!(check_xnorm_signs(&[1.0, -1.0, 0.0], &[true, false, false], &[0, 1, 2]).is_ok());
        assert!(check_xnorm_signs(&[1.0, 1.0], &[true, false], &[0, 1]).is_err());
    }

    #[test]
    fn collinear_scores_match_univariate() {
        let pts: Vec<_> = (0..400)
            .map(|i| {
                let x1 = (i as f64 + 0.5) / 4.0;
                let y = (x1 / 20.0).sin() + if x1 >= 50.0 { 2.0 } else { 0.0 } + 0.1 * ((i * 7919) % 13) as f64;
                ((x1, 30.0), x1 >= 50.0, y)
            })
            .collect();
        let data = bivariate(&pts);
        let opts = PerCutoffOptions::defaults(1);
        let est = boundary_point_estimates(&data, &[(50.0, 30.0)], &opts).unwrap();
        let uni = rd_estimate(&data.ys(), &data.x1s(), 50.0, opts.get(0), None).unwrap();
        assert!((est[0].result.tau_bias_corrected - uni.tau_bias_corrected).abs() < 1e-10);
        assert!((est[0].result.se_robust - uni.se_robust).abs() < 1e-10);
    }

    #[test]
    fn one_sided_point_errors() {
        let pts: Vec<_> = (0..50).map(|i| ((i as f64, 0.0), true, 1.0)).collect();
        let data = bivariate(&pts);
        let err = boundary_point_estimates(&data, &[(25.0, 50.0)], &PerCutoffOptions::defaults(1)).unwrap_err();
        assert!(err.to_string().contains("(25,50)"), "{err}");
        assert!(pooled_on_xnorm(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0], &CutoffOptions::default(), None).is_err());
    }
}
