//! Synthetic sharp RD samples with known effects.
//!
//! Scores are uniform on `support`. The untreated mean is the polynomial
//! `baseline` in the raw score (summed over both scores in the bivariate
//! design). Treated units add the effect plus `treated_slope` times the
//! distance past the cutoff, so the jump at each cutoff is exactly the
//! configured effect.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datamodel::{ColumnMap, Dataset, DesignKind, Observation};
use crate::error::{RdError, Result};
use crate::multicutoff::cutoff_label;
use crate::multiscore::point_label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "lowercase")]
pub enum Design {
    /// Disjoint groups; group `g` faces `cutoffs[g]` with effect
    /// `effects[g]` and holds a `shares[g]` fraction of the units.
    Multicutoff {
        cutoffs: Vec<f64>,
        effects: Vec<f64>,
        shares: Vec<f64>,
    },
    /// One population; crossing `cutoffs[j]` adds `effects[j]`.
    Cumulative { cutoffs: Vec<f64>, effects: Vec<f64> },
    /// Treated when `x1 <= corner.0` and `x2 <= corner.1`, with a constant
    /// effect. `points` are the boundary points reported in the truth file.
    Bivariate {
        corner: (f64, f64),
        effect: f64,
        points: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub design: Design,
    pub n: usize,
    pub support: (f64, f64),
    /// Coefficients on `x^k` of the untreated mean.
    pub baseline: Vec<f64>,
    pub treated_slope: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

fn poly(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

impl DgpSpec {
    /// Two groups facing 33 and 66 on scores in `[0, 100]`.
    pub fn multicutoff(n: usize, effects: (f64, f64), seed: u64) -> Self {
        DgpSpec {
            design: Design::Multicutoff {
                cutoffs: vec![33.0, 66.0],
                effects: vec![effects.0, effects.1],
                shares: vec![0.5, 0.5],
            },
            n,
            support: (0.0, 100.0),
            baseline: vec![1.0, 0.03, 2e-4],
            treated_slope: 0.01,
            noise_sd: 1.0,
            seed,
        }
    }

    /// Cutoffs 33 and 66 on scores in `[0, 100]` with the given jumps.
    pub fn cumulative(n: usize, effects: (f64, f64), seed: u64) -> Self {
        DgpSpec {
            design: Design::Cumulative {
                cutoffs: vec![33.0, 66.0],
                effects: vec![effects.0, effects.1],
            },
            n,
            support: (0.0, 100.0),
            baseline: vec![1.0, 0.03, 2e-4],
            treated_slope: 0.01,
            noise_sd: 1.0,
            seed,
        }
    }

    /// Treatment region `{x1 <= 50, x2 <= 50}` on `[0, 100]²` with boundary
    /// points (25,50), (50,50) and (50,25).
    pub fn bivariate(n: usize, effect: f64, seed: u64) -> Self {
        DgpSpec {
            design: Design::Bivariate {
                corner: (50.0, 50.0),
                effect,
                points: vec![(25.0, 50.0), (50.0, 50.0), (50.0, 25.0)],
            },
            n,
            support: (0.0, 100.0),
            baseline: vec![1.0, 0.02],
            treated_slope: 0.0,
            noise_sd: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(RdError::Invalid(format!("simulation spec: {msg}")));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad("noise sd must be finite and nonnegative".into());
        }
        let (lo, hi) = self.support;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return bad("support must be a finite interval".into());
        }
        let check_cutoffs = |cutoffs: &[f64], effects: &[f64]| -> Result<()> {
            if cutoffs.is_empty() || cutoffs.len() != effects.len() {
                return bad("need one effect per cutoff".into());
            }
            if cutoffs.windows(2).any(|w| !(w[0] < w[1])) || cutoffs.iter().any(|c| !(lo < *c && *c < hi)) {
                return bad("cutoffs must increase strictly inside the support".into());
            }
            Ok(())
        };
        match &self.design {
            Design::Multicutoff { cutoffs, effects, shares } => {
                check_cutoffs(cutoffs, effects)?;
                if shares.len() != cutoffs.len() || shares.iter().any(|s| !(*s > 0.0)) {
                    return bad("need one positive share per cutoff".into());
                }
            }
            Design::Cumulative { cutoffs, effects } => check_cutoffs(cutoffs, effects)?,
            Design::Bivariate { .. } => {}
        }
        Ok(())
    }

    /// Units per group under proportional allocation, remainders to the
    /// first groups.
    fn group_sizes(&self, shares: &[f64]) -> Vec<usize> {
        let total: f64 = shares.iter().sum();
        let mut sizes: Vec<usize> = shares
            .iter()
            .map(|s| (self.n as f64 * s / total).floor() as usize)
            .collect();
        let mut left = self.n - sizes.iter().sum::<usize>();
        for s in sizes.iter_mut() {
            if left == 0 {
                break;
            }
            *s += 1;
            left -= 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueEffect {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: DgpSpec,
    pub effects: Vec<TrueEffect>,
    /// Jump of the pooled recentered design (multi-cutoff only).
    pub pooled: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub dataset: Dataset,
    /// Number of cutoffs crossed, for the cumulative design.
    pub dose: Option<Vec<usize>>,
    pub truth: GroundTruth,
}

/// Noiseless outcome mean of a unit.
pub fn conditional_mean(spec: &DgpSpec, x1: f64, x2: Option<f64>, cutoff: Option<f64>) -> f64 {
    let b = &spec.baseline;
    match &spec.design {
        Design::Multicutoff { cutoffs, effects, .. } => {
            let c = cutoff.expect("multi-cutoff units carry a cutoff");
            let g = cutoffs.iter().position(|v| *v == c).expect("known cutoff");
            poly(b, x1) + if x1 >= c { effects[g] + spec.treated_slope * (x1 - c) } else { 0.0 }
        }
        Design::Cumulative { cutoffs, effects } => {
            poly(b, x1)
                + cutoffs
                    .iter()
                    .zip(effects)
                    .filter(|(c, _)| x1 >= **c)
                    .map(|(c, t)| t + spec.treated_slope * (x1 - c))
                    .sum::<f64>()
        }
        Design::Bivariate { corner, effect, .. } => {
            let x2 = x2.expect("bivariate units carry x2");
            poly(b, x1) + poly(b, x2) + if x1 <= corner.0 && x2 <= corner.1 { *effect } else { 0.0 }
        }
    }
}

pub fn generate(spec: &DgpSpec) -> Result<Generated> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| RdError::Invalid(e.to_string()))?;
    let (lo, hi) = spec.support;
    let draw = |rng: &mut ChaCha20Rng| lo + (hi - lo) * rng.random::<f64>();

    let mut obs = Vec::with_capacity(spec.n);
    let mut dose = None;
    let (kind, effects, pooled) = match &spec.design {
        Design::Multicutoff { cutoffs, effects, shares } => {
            let sizes = spec.group_sizes(shares);
            for (g, &size) in sizes.iter().enumerate() {
                for _ in 0..size {
                    let x = draw(&mut rng);
                    let c = cutoffs[g];
                    let y = conditional_mean(spec, x, None, Some(c)) + noise.sample(&mut rng);
                    obs.push(Observation {
                        row: obs.len(),
                        cutoff: Some(c),
                        treat: Some(x >= c),
                        ..Observation::new(y, x)
                    });
                }
            }
            let total: f64 = shares.iter().sum();
            let pooled = shares.iter().zip(effects).map(|(s, t)| s / total * t).sum();
            let truth = cutoffs
                .iter()
                .zip(effects)
                .map(|(c, t)| TrueEffect { label: cutoff_label(*c), value: *t })
                .collect();
            (DesignKind::MultiCutoff, truth, Some(pooled))
        }
        Design::Cumulative { cutoffs, effects } => {
            let mut d = Vec::with_capacity(spec.n);
            for _ in 0..spec.n {
                let x = draw(&mut rng);
                let y = conditional_mean(spec, x, None, None) + noise.sample(&mut rng);
                d.push(cutoffs.iter().filter(|c| x >= **c).count());
                obs.push(Observation {
                    row: obs.len(),
                    ..Observation::new(y, x)
                });
            }
            dose = Some(d);
            let truth = cutoffs
                .iter()
                .zip(effects)
                .map(|(c, t)| TrueEffect { label: cutoff_label(*c), value: *t })
                .collect();
            (DesignKind::Cumulative, truth, None)
        }
        Design::Bivariate { corner, effect, points } => {
            for _ in 0..spec.n {
                let x1 = draw(&mut rng);
                let x2 = draw(&mut rng);
                let y = conditional_mean(spec, x1, Some(x2), None) + noise.sample(&mut rng);
                obs.push(Observation {
                    row: obs.len(),
                    x2: Some(x2),
                    treat: Some(x1 <= corner.0 && x2 <= corner.1),
                    ..Observation::new(y, x1)
                });
            }
            let truth = points
                .iter()
                .map(|p| TrueEffect { label: point_label(*p), value: *effect })
                .collect();
            (DesignKind::Bivariate, truth, None)
        }
    };
    Ok(Generated {
        dataset: Dataset::new(kind, obs)?,
        dose,
        truth: GroundTruth {
            spec: spec.clone(),
            effects,
            pooled,
        },
    })
}

/// Column names the generated files use.
pub fn column_map(design: &Design) -> ColumnMap {
    match design {
        Design::Multicutoff { .. } => ColumnMap::new("y", "x").with_cutoff("c").with_treat("t"),
        Design::Cumulative { .. } => ColumnMap::new("y", "x"),
        Design::Bivariate { .. } => ColumnMap::new("y", "x1").with_x2("x2").with_treat("t"),
    }
}

/// Writes the sample; cumulative samples get an extra `dose` column.
pub fn write_generated<W: Write>(writer: W, generated: &Generated) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| RdError::Csv(e.to_string());
    let map = column_map(&generated.truth.spec.design);
    let mut header = vec![map.y.clone(), map.x.clone()];
    header.extend([&map.x2, &map.cutoff, &map.treat].iter().filter_map(|c| (*c).clone()));
    if generated.dose.is_some() {
        header.push("dose".into());
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, o) in generated.dataset.observations.iter().enumerate() {
        let mut rec = vec![o.y.to_string(), o.x1.to_string()];
        if let Some(x2) = o.x2 {
            rec.push(x2.to_string());
        }
        if let Some(c) = o.cutoff {
            rec.push(c.to_string());
        }
        if let Some(t) = o.treat {
            rec.push(if t { "1" } else { "0" }.into());
        }
        if let Some(d) = &generated.dose {
            rec.push(d[i].to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| RdError::Csv(e.to_string()))?;
    Ok(())
}

pub fn truth_json(truth: &GroundTruth) -> String {
    serde_json::to_string_pretty(truth).expect("ground truth serializes")
}
