//! Plot data for multi-cutoff designs: binned outcome means with confidence
//! intervals and per-side polynomial fits at each cutoff, emitted as
//! replication columns aligned with the input rows.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{reject_unsupported, Dataset, DesignKind};
use crate::error::{RdError, Result};
use crate::kernel::KernelKind;
use crate::localpoly::{eval_poly, fit_window, weighted_poly_fit, Side};
use crate::stats::critical_value;

pub const DEFAULT_PLOT_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinMethod {
    /// Evenly spaced.
    #[default]
    Es,
    /// Quantile spaced.
    Qs,
}

impl fmt::Display for BinMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinMethod::Es => "es",
            BinMethod::Qs => "qs",
        })
    }
}

impl FromStr for BinMethod {
    type Err = RdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "es" => Ok(BinMethod::Es),
            "qs" => Ok(BinMethod::Qs),
            other => Err(RdError::InvalidOption {
                option: "binselect".into(),
                value: other.into(),
                reason: "expected es or qs".into(),
            }),
        }
    }
}

/// `ceil(sqrt(n))`.
pub fn default_nbins(n: usize) -> usize {
    let mut k = (n as f64).sqrt().floor() as usize;
    while k * k < n {
        k += 1;
    }
    k.max(1)
}

fn quantile7(sorted: &[f64], prob: f64) -> f64 {
    let pos = prob * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bin edges for the scores on one side. `span` replaces the data range for
/// evenly spaced bins.
pub fn choose_bins(xs: &[f64], method: BinMethod, nbins: Option<usize>, span: Option<(f64, f64)>) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(RdError::Invalid("no observations to bin".into()));
    }
    let n = nbins.unwrap_or_else(|| default_nbins(xs.len()));
    if n == 0 {
        return Err(RdError::InvalidOption {
            option: "nbins".into(),
            value: "0".into(),
            reason: "need at least one bin".into(),
        });
    }
    if n > xs.len() {
        return Err(RdError::InvalidOption {
            option: "nbins".into(),
            value: n.to_string(),
            reason: format!("exceeds the {} observations on this side", xs.len()),
        });
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges = match method {
        BinMethod::Es => {
            let (lo, hi) = span.unwrap_or((sorted[0], sorted[sorted.len() - 1]));
            (0..=n)
                .map(|k| if k == n { hi } else { lo + (hi - lo) * k as f64 / n as f64 })
                .collect()
        }
        BinMethod::Qs => (0..=n).map(|k| quantile7(&sorted, k as f64 / n as f64)).collect(),
    };
    Ok(edges)
}

/// Bin of `x`: `[e_k, e_{k+1})`, with the last bin closed. `None` outside
/// the edges.
pub fn bin_index(x: f64, edges: &[f64]) -> Option<usize> {
    let nb = edges.len().checked_sub(1)?;
    if nb == 0 || x < edges[0] || x > edges[nb] {
        return None;
    }
    let k = edges.partition_point(|&e| e <= x);
    Some(k.saturating_sub(1).min(nb - 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_x: Option<f64>,
    pub mean_y: Option<f64>,
    pub ci_l: Option<f64>,
    pub ci_r: Option<f64>,
}

/// Per-bin means and normal-approximation intervals for the bin mean.
pub fn bin_stats(ys: &[f64], xs: &[f64], edges: &[f64], level: f64) -> Vec<BinStat> {
    let nb = edges.len().saturating_sub(1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); nb];
    for (i, &x) in xs.iter().enumerate() {
        if let Some(k) = bin_index(x, edges) {
            members[k].push(i);
        }
    }
    let z = critical_value(level);
    members
        .iter()
        .enumerate()
        .map(|(k, idx)| {
            let count = idx.len();
            let mut stat = BinStat {
                lower: edges[k],
                upper: edges[k + 1],
                count,
                mean_x: None,
                mean_y: None,
                ci_l: None,
                ci_r: None,
            };
            if count == 0 {
                return stat;
            }
            let nf = count as f64;
            let mx = idx.iter().map(|&i| xs[i]).sum::<f64>() / nf;
            let my = idx.iter().map(|&i| ys[i]).sum::<f64>() / nf;
            let half = if count > 1 {
                let ss: f64 = idx.iter().map(|&i| (ys[i] - my).powi(2)).sum();
                z * (ss / (nf - 1.0)).sqrt() / nf.sqrt()
            } else {
                0.0
            };
            stat.mean_x = Some(mx);
            stat.mean_y = Some(my);
            stat.ci_l = Some(my - half);
            stat.ci_r = Some(my + half);
            stat
        })
        .collect()
}

/// Polynomial fit on one side of a cutoff, in powers of `x - c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidePolynomial {
    pub side: Side,
    pub cutoff: f64,
    pub coefficients: Vec<f64>,
    /// Window half-width; `None` for a global fit on the whole side.
    pub h: Option<f64>,
}

impl SidePolynomial {
    pub fn eval(&self, x: f64) -> f64 {
        eval_poly(&self.coefficients, x - self.cutoff)
    }

    /// Whether `x` lies in the fitted domain.
    pub fn covers(&self, x: f64) -> bool {
        let u = x - self.cutoff;
        self.side.contains(u) && self.h.is_none_or(|h| u.abs() <= h)
    }
}

/// Order-`p` fit on one side. With `h`, a kernel-weighted fit inside the
/// window; without, an unweighted fit on every observation of the side.
pub fn side_polynomial(
    ys: &[f64],
    xs: &[f64],
    c: f64,
    p: usize,
    h: Option<f64>,
    kernel: KernelKind,
    side: Side,
) -> Result<SidePolynomial> {
    let u: Vec<f64> = xs.iter().map(|&x| x - c).collect();
    let fit = match h {
        Some(h) => fit_window(&u, ys, h, p, kernel, side, None)?,
        None => {
            let rows: Vec<usize> = (0..u.len()).filter(|&i| side.contains(u[i])).collect();
            let scale = rows.iter().map(|&i| u[i].abs()).fold(0.0, f64::max);
            let w = vec![1.0; u.len()];
            weighted_poly_fit(&u, ys, &w, rows, p, if scale > 0.0 { scale } else { 1.0 }, side)?
        }
    };
    Ok(SidePolynomial {
        side,
        cutoff: c,
        coefficients: fit.coef,
        h,
    })
}

/// Plot settings for one cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotOptions {
    pub p: usize,
    pub h_left: Option<f64>,
    pub h_right: Option<f64>,
    pub kernel: KernelKind,
    pub nbins_left: Option<usize>,
    pub nbins_right: Option<usize>,
    pub binselect: BinMethod,
    /// Score range spanned by evenly spaced bins.
    pub support: Option<(f64, f64)>,
    /// Styling options, recorded in the manifest only.
    pub presentation: BTreeMap<String, String>,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions {
            p: DEFAULT_PLOT_ORDER,
            h_left: None,
            h_right: None,
            kernel: KernelKind::Uniform,
            nbins_left: None,
            nbins_right: None,
            binselect: BinMethod::Es,
            support: None,
            presentation: BTreeMap::new(),
        }
    }
}

fn invalid(option: &str, value: &str, reason: &str) -> RdError {
    RdError::InvalidOption {
        option: option.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

impl PlotOptions {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase();
        let key = key.strip_suffix("var").unwrap_or(&key).to_string();
        reject_unsupported(&key)?;
        let v = value.trim();
        if v.is_empty() {
            return Ok(());
        }
        let pos = |name: &str| -> Result<f64> {
            v.parse::<f64>()
                .ok()
                .filter(|h| *h > 0.0 && h.is_finite())
                .ok_or_else(|| invalid(name, v, "expected a positive number"))
        };
        let count = |name: &str| -> Result<usize> { v.parse().map_err(|_| invalid(name, v, "expected an integer")) };
        match key.as_str() {
            "p" => self.p = count("p")?,
            "h" | "h_left" => self.h_left = Some(pos("h")?),
            "hright" | "h_right" => self.h_right = Some(pos("hright")?),
            "kernel" => self.kernel = v.parse()?,
            "nbins" => self.nbins_left = Some(count("nbins")?),
            "nbinsright" => self.nbins_right = Some(count("nbinsright")?),
            "binselect" => self.binselect = v.parse()?,
            "support" => {
                let (lo, hi) = v
                    .split_once([';', ':'])
                    .ok_or_else(|| invalid("support", v, "expected lo;hi"))?;
                let lo: f64 = lo.trim().parse().map_err(|_| invalid("support", v, "expected lo;hi"))?;
                let hi: f64 = hi.trim().parse().map_err(|_| invalid("support", v, "expected lo;hi"))?;
                if !(lo < hi) {
                    return Err(invalid("support", v, "lower end must be below upper end"));
                }
                self.support = Some((lo, hi));
            }
            "binsopt" | "lineopt" | "xlineopt" | "ciopt" => {
                self.presentation.insert(key, v.to_string());
            }
            _ => return Err(RdError::UnsupportedOption(key)),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.h_right.is_some() && self.h_left.is_none() {
            return Err(invalid("hright", "", "requires h"));
        }
        if self.nbins_right.is_some() && self.nbins_left.is_none() {
            return Err(invalid("nbinsright", "", "requires nbins"));
        }
        Ok(())
    }

    fn side_h(&self, side: Side) -> Option<f64> {
        match side {
            Side::Left => self.h_left,
            Side::Right => self.h_right.or(self.h_left),
        }
    }

    fn side_nbins(&self, side: Side) -> Option<usize> {
        match side {
            Side::Left => self.nbins_left,
            Side::Right => self.nbins_right.or(self.nbins_left),
        }
    }
}

/// Reads a plot option table: header of option names, one row per cutoff.
pub fn parse_plot_options_table<R: std::io::Read>(reader: R, n_cutoffs: usize) -> Result<Vec<PlotOptions>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| RdError::Csv(e.to_string()))?.clone();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| RdError::Csv(e.to_string()))?;
        let mut opts = PlotOptions::default();
        for (k, v) in headers.iter().zip(record.iter()) {
            opts.set(k, v).map_err(|e| RdError::at(format!("option table row {}", i + 1), e))?;
        }
        opts.validate()?;
        rows.push(opts);
    }
    if rows.len() != n_cutoffs {
        return Err(RdError::Dimension(format!(
            "option table has {} rows for {} cutoffs",
            rows.len(),
            n_cutoffs
        )));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotFlags {
    pub nobins: bool,
    pub nopoly: bool,
    pub ci_level: f64,
}

impl Default for PlotFlags {
    fn default() -> Self {
        PlotFlags {
            nobins: false,
            nopoly: false,
            ci_level: 95.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideSeries {
    pub n: usize,
    pub edges: Vec<f64>,
    pub bins: Vec<BinStat>,
    pub polynomial: Option<SidePolynomial>,
}

/// Plot data for one cutoff. Column vectors have one entry per dataset row;
/// rows facing other cutoffs or outside the plotted window are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    /// 1-based position of the cutoff in ascending order.
    pub index: usize,
    pub cutoff: f64,
    pub options: PlotOptions,
    pub left: SideSeries,
    pub right: SideSeries,
    #[serde(skip)]
    pub hat_y: Option<Vec<Option<f64>>>,
    #[serde(skip)]
    pub mean_x: Option<Vec<Option<f64>>>,
    #[serde(skip)]
    pub mean_y: Option<Vec<Option<f64>>>,
    #[serde(skip)]
    pub ci_l: Option<Vec<Option<f64>>>,
    #[serde(skip)]
    pub ci_r: Option<Vec<Option<f64>>>,
}

pub const GENVARS_PREFIX: &str = "rdmcplot";
const GENVARS_FIELDS: [&str; 5] = ["hat_y", "mean_x", "mean_y", "ci_l", "ci_r"];

pub fn genvars_name(field: &str, index: usize) -> String {
    format!("{GENVARS_PREFIX}_{field}_{index}")
}

impl PlotSeries {
    /// `(name, values)` for every column this series emits.
    pub fn columns(&self) -> Vec<(String, &Vec<Option<f64>>)> {
        let cols = [&self.hat_y, &self.mean_x, &self.mean_y, &self.ci_l, &self.ci_r];
        GENVARS_FIELDS
            .iter()
            .zip(cols)
            .filter_map(|(f, c)| c.as_ref().map(|v| (genvars_name(f, self.index), v)))
            .collect()
    }
}

fn side_series(
    ys: &[f64],
    xs: &[f64],
    c: f64,
    opts: &PlotOptions,
    flags: &PlotFlags,
    side: Side,
) -> Result<(SideSeries, Vec<usize>)> {
    let h = opts.side_h(side);
    let in_scope = |x: f64| {
        let u = x - c;
        side.contains(u)
            && h.is_none_or(|h| u.abs() <= h)
            && opts.support.is_none_or(|(lo, hi)| lo <= x && x <= hi)
    };
    let rows: Vec<usize> = (0..xs.len()).filter(|&i| in_scope(xs[i])).collect();
    let label = format!("{} side of cutoff {}", side.name(), c);
    if rows.is_empty() {
        return Err(RdError::at(
            &label,
            RdError::InsufficientObservations {
                side: side.name(),
                found: 0,
                needed: 1,
            },
        ));
    }
    let sx: Vec<f64> = rows.iter().map(|&i| xs[i]).collect();
    let sy: Vec<f64> = rows.iter().map(|&i| ys[i]).collect();
    let (edges, bins) = if flags.nobins {
        (Vec::new(), Vec::new())
    } else {
        let span = opts.support.map(|(lo, hi)| match side {
            Side::Left => (lo, c),
            Side::Right => (c, hi),
        });
        let edges = choose_bins(&sx, opts.binselect, opts.side_nbins(side), span).map_err(|e| RdError::at(&label, e))?;
        let bins = bin_stats(&sy, &sx, &edges, flags.ci_level);
        (edges, bins)
    };
    let polynomial = if flags.nopoly {
        None
    } else {
        Some(side_polynomial(&sy, &sx, c, opts.p, h, opts.kernel, side).map_err(|e| RdError::at(&label, e))?)
    };
    Ok((
        SideSeries {
            n: rows.len(),
            edges,
            bins,
            polynomial,
        },
        rows,
    ))
}

fn series_for(dataset: &Dataset, index: usize, c: f64, opts: &PlotOptions, flags: &PlotFlags) -> Result<PlotSeries> {
    let group = dataset.group_indices(c);
    let ys: Vec<f64> = group.iter().map(|&i| dataset.observations[i].y).collect();
    let xs: Vec<f64> = group.iter().map(|&i| dataset.observations[i].x1).collect();
    let (left, left_rows) = side_series(&ys, &xs, c, opts, flags, Side::Left)?;
    let (right, right_rows) = side_series(&ys, &xs, c, opts, flags, Side::Right)?;

    let n = dataset.len();
    let mut hat_y = vec![None; n];
    let mut cols: [Vec<Option<f64>>; 4] = std::array::from_fn(|_| vec![None; n]);
    for (s, rows) in [(&left, &left_rows), (&right, &right_rows)] {
        for &r in rows {
            let i = group[r];
            let x = xs[r];
            if let Some(poly) = &s.polynomial {
                hat_y[i] = Some(poly.eval(x));
            }
            if let Some(k) = bin_index(x, &s.edges) {
                let b = &s.bins[k];
                for (col, v) in cols.iter_mut().zip([b.mean_x, b.mean_y, b.ci_l, b.ci_r]) {
                    col[i] = v;
                }
            }
        }
    }
    let [mean_x, mean_y, ci_l, ci_r] = cols;
    let bins = |v: Vec<Option<f64>>| (!flags.nobins).then_some(v);
    Ok(PlotSeries {
        index,
        cutoff: c,
        options: opts.clone(),
        left,
        right,
        hat_y: (!flags.nopoly).then_some(hat_y),
        mean_x: bins(mean_x),
        mean_y: bins(mean_y),
        ci_l: bins(ci_l),
        ci_r: bins(ci_r),
    })
}

/// Plot series for every cutoff of a multi-cutoff dataset.
pub fn build_plot_data(dataset: &Dataset, options: &[PlotOptions], flags: &PlotFlags) -> Result<Vec<PlotSeries>> {
    if dataset.kind != DesignKind::MultiCutoff {
        return Err(RdError::Invalid("plot data needs cutoff groups".into()));
    }
    if options.len() != dataset.cutoffs.len() {
        return Err(RdError::Dimension(format!(
            "{} plot option rows for {} cutoffs",
            options.len(),
            dataset.cutoffs.len()
        )));
    }
    for o in options {
        o.validate()?;
    }
    if !(flags.ci_level > 0.0 && flags.ci_level < 100.0) {
        return Err(invalid("ci", &flags.ci_level.to_string(), "must lie strictly between 0 and 100"));
    }
    dataset
        .cutoffs
        .par_iter()
        .zip(options.par_iter())
        .enumerate()
        .map(|(j, (g, o))| series_for(dataset, j + 1, g.value, o, flags))
        .collect()
}

/// Writes the replication columns with one line per source row. `source_rows[i]`
/// is the source row of dataset observation `i`; rows without an observation
/// and missing entries are blank.
pub fn write_genvars<W: Write>(writer: W, series: &[PlotSeries], source_rows: &[usize], n_rows: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let cols: Vec<(String, &Vec<Option<f64>>)> = series.iter().flat_map(|s| s.columns()).collect();
    let csv_err = |e: csv::Error| RdError::Csv(e.to_string());
    let mut obs_at: Vec<Option<usize>> = vec![None; n_rows];
    for (i, &r) in source_rows.iter().enumerate() {
        if r >= n_rows {
            return Err(RdError::Dimension(format!("source row {r} beyond {n_rows} rows")));
        }
        obs_at[r] = Some(i);
    }
    w.write_record(cols.iter().map(|(n, _)| n.as_str())).map_err(csv_err)?;
    for slot in obs_at {
        w.write_record(cols.iter().map(|(_, v)| slot.and_then(|i| v[i]).map(|x| x.to_string()).unwrap_or_default()))
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| RdError::Csv(e.to_string()))?;
    Ok(())
}

/// Sidecar description of a plot data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotManifest {
    pub columns: Vec<String>,
    pub flags: PlotFlags,
    pub series: Vec<PlotSeries>,
}

pub fn plot_manifest(series: &[PlotSeries], flags: &PlotFlags) -> PlotManifest {
    PlotManifest {
        columns: series.iter().flat_map(|s| s.columns().into_iter().map(|(n, _)| n)).collect(),
        flags: *flags,
        series: series.to_vec(),
    }
}
