use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result};
use crate::kernel::KernelKind;
use crate::localpoly::FitSpec;

/// Option names from the host packages that this toolkit deliberately does
/// not implement. They are rejected instead of being ignored.
pub const UNSUPPORTED_OPTIONS: &[&str] = &[
    "fuzzy",
    "covs",
    "covsdrop",
    "covseval",
    "masspoints",
    "stdvars",
    "scaleregul",
    "scalepar",
    "bwcheck",
    "bwrestrict",
    "cluster",
    "nnmatch",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BwSelect {
    #[default]
    Mserd,
    Manual,
}

impl FromStr for BwSelect {
    type Err = RdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mserd" => Ok(BwSelect::Mserd),
            "manual" => Ok(BwSelect::Manual),
            other => Err(RdError::InvalidOption {
                option: "bwselect".into(),
                value: other.into(),
                reason: "expected mserd or manual".into(),
            }),
        }
    }
}

impl fmt::Display for BwSelect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BwSelect::Mserd => "mserd",
            BwSelect::Manual => "manual",
        })
    }
}

/// Estimation options for one cutoff (or for the pooled fit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffOptions {
    pub p: usize,
    /// Bias-correction order; `p + 1` when unset.
    pub q: Option<usize>,
    pub deriv: usize,
    pub h_left: Option<f64>,
    pub h_right: Option<f64>,
    pub b_left: Option<f64>,
    pub b_right: Option<f64>,
    pub rho: Option<f64>,
    pub kernel: KernelKind,
    pub bwselect: BwSelect,
    pub level: f64,
}

impl Default for CutoffOptions {
    fn default() -> Self {
        CutoffOptions {
            p: 1,
            q: None,
            deriv: 0,
            h_left: None,
            h_right: None,
            b_left: None,
            b_right: None,
            rho: None,
            kernel: KernelKind::Triangular,
            bwselect: BwSelect::Mserd,
            level: 95.0,
        }
    }
}

fn canonical_key(key: &str) -> String {
    let k = key.trim().to_ascii_lowercase();
    let k = k.strip_suffix("var").filter(|s| !s.is_empty()).map(str::to_string).unwrap_or(k);
    match k.as_str() {
        "h_left" => "h".into(),
        "h_right" => "hright".into(),
        "b_left" => "b".into(),
        "b_right" => "bright".into(),
        "ci_level" | "ci" => "level".into(),
        _ => k,
    }
}

fn invalid(option: &str, value: &str, reason: &str) -> RdError {
    RdError::InvalidOption {
        option: option.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

fn parse_usize(option: &str, value: &str) -> Result<usize> {
    value
        .trim()
        .parse::<usize>()
        .map_err(|_| invalid(option, value, "expected a nonnegative integer"))
}

fn parse_positive(option: &str, value: &str) -> Result<f64> {
    match value.trim().parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(invalid(option, value, "expected a positive number")),
    }
}

/// Rejects names from [`UNSUPPORTED_OPTIONS`] irrespective of suffixes.
pub fn reject_unsupported(key: &str) -> Result<()> {
    let k = canonical_key(key);
    if UNSUPPORTED_OPTIONS.contains(&k.as_str()) {
        return Err(RdError::UnsupportedOption(key.trim().to_string()));
    }
    Ok(())
}

impl CutoffOptions {
    pub fn q(&self) -> usize {
        self.q.unwrap_or(self.p + 1)
    }

    pub fn fit_spec(&self) -> FitSpec {
        FitSpec {
            p: self.p,
            q: self.q(),
            deriv: self.deriv,
            kernel: self.kernel,
        }
    }

    /// Sets one option from its textual name and value. Empty values keep
    /// the current setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        reject_unsupported(key)?;
        let k = canonical_key(key);
        if value.trim().is_empty() {
            return Ok(());
        }
        match k.as_str() {
            "p" => self.p = parse_usize("p", value)?,
            "q" => self.q = Some(parse_usize("q", value)?),
            "deriv" => self.deriv = parse_usize("deriv", value)?,
            "h" => self.h_left = Some(parse_positive("h", value)?),
            "hright" => self.h_right = Some(parse_positive("hright", value)?),
            "b" => self.b_left = Some(parse_positive("b", value)?),
            "bright" => self.b_right = Some(parse_positive("bright", value)?),
            "rho" => self.rho = Some(parse_positive("rho", value)?),
            "kernel" => self.kernel = value.parse()?,
            "bwselect" => self.bwselect = value.parse()?,
            "level" => {
                self.level = value
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| invalid("level", value, "expected a number"))?
            }
            "vce" => {
                if !value.trim().eq_ignore_ascii_case("hc1") {
                    return Err(RdError::UnsupportedOption(format!("vce={}", value.trim())));
                }
            }
            _ => return Err(RdError::UnsupportedOption(key.trim().to_string())),
        }
        Ok(())
    }

    /// Parses whitespace- or comma-separated `key=value` pairs.
    pub fn from_pairs(spec: &str) -> Result<Self> {
        let mut opts = CutoffOptions::default();
        opts.apply_pairs(spec)?;
        opts.validate()?;
        Ok(opts)
    }

    pub fn apply_pairs(&mut self, spec: &str) -> Result<()> {
        for token in spec.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let (k, v) = token
                .split_once('=')
                .ok_or_else(|| invalid(token, "", "expected key=value"))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.q();
        if self.deriv > self.p {
            return Err(invalid("deriv", &self.deriv.to_string(), "must not exceed p"));
        }
        if q <= self.p {
            return Err(invalid("q", &q.to_string(), "must exceed p"));
        }
        if !(self.level > 0.0 && self.level < 100.0) {
            return Err(invalid("level", &self.level.to_string(), "must lie strictly between 0 and 100"));
        }
        if self.h_right.is_some() && self.h_left.is_none() {
            return Err(invalid("hright", "", "requires h"));
        }
        if self.b_right.is_some() && self.b_left.is_none() {
            return Err(invalid("bright", "", "requires b"));
        }
        if self.bwselect == BwSelect::Manual && self.h_left.is_none() {
            return Err(invalid("bwselect", "manual", "requires h"));
        }
        Ok(())
    }

    /// `true` when the main bandwidth comes from the user.
    pub fn manual_bandwidth(&self) -> bool {
        self.h_left.is_some()
    }
}

/// One [`CutoffOptions`] record per cutoff, in ascending cutoff order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerCutoffOptions(pub Vec<CutoffOptions>);

impl PerCutoffOptions {
    pub fn defaults(n: usize) -> Self {
        PerCutoffOptions(vec![CutoffOptions::default(); n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> &CutoffOptions {
        &self.0[i]
    }

    pub fn expect_len(&self, n: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(RdError::Dimension(format!(
                "option table has {} rows for {} cutoffs",
                self.0.len(),
                n
            )));
        }
        Ok(())
    }

    /// Overrides a column for every cutoff from a list of values.
    pub fn set_column(&mut self, key: &str, values: &[String]) -> Result<()> {
        if values.len() != self.0.len() {
            return Err(RdError::Dimension(format!(
                "`{key}` has {} values for {} cutoffs",
                values.len(),
                self.0.len()
            )));
        }
        for (o, v) in self.0.iter_mut().zip(values) {
            o.set(key, v)?;
            o.validate()?;
        }
        Ok(())
    }
}

/// Parses an option table: a header row of option names followed by one row
/// per cutoff. Blank cells keep defaults.
pub fn parse_options_table<R: std::io::Read>(reader: R, n_cutoffs: usize) -> Result<PerCutoffOptions> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| RdError::Csv(e.to_string()))?.clone();
    for h in headers.iter() {
        reject_unsupported(h)?;
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| RdError::Csv(e.to_string()))?;
        let mut opts = CutoffOptions::default();
        for (k, v) in headers.iter().zip(record.iter()) {
            opts.set(k, v).map_err(|e| RdError::at(format!("option table row {}", i + 1), e))?;
        }
        opts.validate().map_err(|e| RdError::at(format!("option table row {}", i + 1), e))?;
        rows.push(opts);
    }
    let table = PerCutoffOptions(rows);
    table.expect_len(n_cutoffs)?;
    Ok(table)
}

/// Reads the per-cutoff option table, or returns defaults when `path` is
/// `None`.
pub fn load_options(path: Option<&Path>, n_cutoffs: usize) -> Result<PerCutoffOptions> {
    match path {
        None => Ok(PerCutoffOptions::defaults(n_cutoffs)),
        Some(p) => {
            let file = std::fs::File::open(p).map_err(|source| RdError::Io {
                path: p.display().to_string(),
                source,
            })?;
            parse_options_table(file, n_cutoffs)
        }
    }
}
