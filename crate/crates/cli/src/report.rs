use std::fmt::Write as _;

use serde::Serialize;

use rdmulti_core::multicutoff::{ContrastTest, CutoffEstimate, CutoffWeight, WeightedEstimate};
use rdmulti_core::{CutoffOptions, RdResult, ScoreRange};

pub const SCHEMA: &str = "rdmulti.results/1";

#[derive(Debug, Clone, Serialize)]
pub struct InputInfo {
    pub path: String,
    pub sha256: String,
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Cutoff,
    Point,
    Weighted,
    Pooled,
}

/// One line of the results table.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateRow {
    pub label: String,
    pub kind: RowKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range: Option<ScoreRange>,
    pub tau_conventional: f64,
    pub tau_bias_corrected: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se_conventional: Option<f64>,
    pub se_robust: f64,
    pub ci_robust: [f64; 2],
    pub p_value_robust: f64,
    pub h_left: f64,
    pub h_right: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_left: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_right: Option<f64>,
    pub n_left: usize,
    pub n_right: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

impl EstimateRow {
    pub fn from_result(label: String, kind: RowKind, r: &RdResult) -> Self {
        EstimateRow {
            label,
            kind,
            cutoff: None,
            point: None,
            range: None,
            tau_conventional: r.tau_conventional,
            tau_bias_corrected: r.tau_bias_corrected,
            se_conventional: Some(r.se_conventional),
            se_robust: r.se_robust,
            ci_robust: r.ci_robust,
            p_value_robust: r.p_value_robust,
            h_left: r.h_left,
            h_right: r.h_right,
            b_left: Some(r.b_left),
            b_right: Some(r.b_right),
            n_left: r.n_left,
            n_right: r.n_right,
            weight: None,
        }
    }

    pub fn cutoff(e: &CutoffEstimate) -> Self {
        let mut row = Self::from_result(rdmulti_core::multicutoff::cutoff_label(e.cutoff), RowKind::Cutoff, &e.result);
        row.cutoff = Some(e.cutoff);
        row.weight = e.weight;
        row
    }

    /// The weighted row reports the weight window as its bandwidths and the
    /// units inside it as its sample sizes.
    pub fn weighted(w: &WeightedEstimate, window: (f64, f64), level: f64, n_sides: (usize, usize)) -> Self {
        EstimateRow {
            label: "weighted".into(),
            kind: RowKind::Weighted,
            cutoff: None,
            point: None,
            range: None,
            tau_conventional: w.tau_conventional,
            tau_bias_corrected: w.tau,
            se_conventional: None,
            se_robust: w.se,
            ci_robust: w.ci(level),
            p_value_robust: w.p_value(),
            h_left: window.0,
            h_right: window.1,
            b_left: None,
            b_right: None,
            n_left: n_sides.0,
            n_right: n_sides.1,
            weight: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TestRow {
    pub hypothesis: String,
    #[serde(flatten)]
    pub test: ContrastTest,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightInfo {
    pub lower: f64,
    pub upper: f64,
    /// `pooled` when the window is the pooled fit's bandwidth, `user` otherwise.
    pub source: &'static str,
    pub cutoffs: Vec<CutoffWeight>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptionsInfo {
    pub per_row: Vec<CutoffOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pooled: Option<CutoffOptions>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema: &'static str,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    pub input: InputInfo,
    pub options: OptionsInfo,
    pub rows: Vec<EstimateRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub tests: Vec<TestRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pooled_fit: Option<RdResult>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
}

fn fixed(v: f64, width: usize, prec: usize) -> String {
    format!("{v:>width$.prec$}")
}

/// Fixed-width rendering of the estimate rows and tests.
pub fn render_table(title: &str, rows: &[EstimateRow], tests: &[TestRow], level: f64) -> String {
    let mut out = String::new();
    let ci_head = format!("[{level}% Conf. Int.]");
    let _ = writeln!(out, "{title}");
    let _ = writeln!(
        out,
        "{:<14}{:>10}{:>9}{:>23}{:>10}{:>10}{:>8}{:>8}{:>9}",
        "", "Coef.", "P>|z|", ci_head, "hl", "hr", "Nhl", "Nhr", "Weight"
    );
    let rule = "-".repeat(101);
    let _ = writeln!(out, "{rule}");
    for r in rows {
        if matches!(r.kind, RowKind::Weighted) || (matches!(r.kind, RowKind::Pooled) && !rows.iter().any(|x| x.kind == RowKind::Weighted)) {
            let _ = writeln!(out, "{rule}");
        }
        let weight = r.weight.map(|w| fixed(w, 9, 3)).unwrap_or_else(|| format!("{:>9}", "."));
        let _ = writeln!(
            out,
            "{:<14}{}{}{}{}{}{}{:>8}{:>8}{}",
            r.label,
            fixed(r.tau_conventional, 10, 3),
            fixed(r.p_value_robust, 9, 3),
            fixed(r.ci_robust[0], 12, 3),
            fixed(r.ci_robust[1], 11, 3),
            fixed(r.h_left, 10, 3),
            fixed(r.h_right, 10, 3),
            r.n_left,
            r.n_right,
            weight
        );
    }
    let _ = writeln!(out, "{rule}");
    for t in tests {
        let _ = writeln!(
            out,
            "H0: {} = 0   estimate {}   z {}   p {}",
            t.hypothesis,
            fixed(t.test.estimate, 0, 4),
            fixed(t.test.statistic, 0, 4),
            fixed(t.test.p_value, 0, 4)
        );
    }
    out
}

/// Human-readable dump of one fit.
pub fn render_fit(label: &str, r: &RdResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{label} fit: p = {}, q = {}, deriv = {}, kernel = {}, bandwidths {}", r.p, r.q, r.deriv, r.kernel, match r.bw_source {
        rdmulti_core::localpoly::BandwidthSource::Mserd => "mserd",
        rdmulti_core::localpoly::BandwidthSource::Manual => "manual",
    });
    let _ = writeln!(out, "  h = ({:.6}, {:.6})  b = ({:.6}, {:.6})  N = ({}, {})", r.h_left, r.h_right, r.b_left, r.b_right, r.n_left, r.n_right);
    let _ = writeln!(out, "  conventional {:.6} (se {:.6})  bias-corrected {:.6} (robust se {:.6})", r.tau_conventional, r.se_conventional, r.tau_bias_corrected, r.se_robust);
    let fmt = |c: &[f64]| c.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", ");
    let _ = writeln!(out, "  left coefficients [{}]", fmt(&r.coef_left));
    let _ = writeln!(out, "  right coefficients [{}]", fmt(&r.coef_right));
    out
}
