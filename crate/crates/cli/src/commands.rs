use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use rdmulti_core::datamodel::{read_column_by_row, read_column_values, read_dataset, LoadedData};
use rdmulti_core::multicutoff::{cutoff_label, hypothesis_test, EstimatesBundle};
use rdmulti_core::multiscore::{
    check_treatment_region, check_xnorm_signs, normalized_scores, point_label, Boundary,
};
use rdmulti_core::rdplot::{parse_plot_options_table, plot_manifest, write_genvars, BinMethod, PlotManifest};
use rdmulti_core::simgen::{generate, truth_json, write_generated, DgpSpec};
use rdmulti_core::{
    assign_closest_cutoff, boundary_point_estimates, build_plot_data, cumulative_estimates, load_options, pooled_on_xnorm,
    rdmc, ColumnMap, CutoffOptions, Dataset, DesignKind, Observation, PerCutoffOptions, PlotFlags, PlotOptions, RdError,
    ScoreRange,
};

use crate::args::{BinSelectArg, DesignArg, InputArgs, PlotArgs, RdmcArgs, RdmsArgs, SimArgs};
use crate::report::{
    render_fit, render_table, EstimateRow, InputInfo, OptionsInfo, RowKind, RunReport, TestRow, WeightInfo, SCHEMA,
};

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_ESTIMATION: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }
}

impl From<RdError> for CliError {
    fn from(e: RdError) -> Self {
        CliError {
            code: if e.is_validation() { EXIT_VALIDATION } else { EXIT_ESTIMATION },
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Output file name and contents.
pub type NamedFile = (String, Vec<u8>);

/// Everything a command produces, before anything touches the filesystem.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub report: Option<RunReport>,
    pub files: Vec<NamedFile>,
    pub stdout: String,
    pub warnings: Vec<String>,
}

impl Outcome {
    /// Every output file, with the results document rendered.
    pub fn rendered_files(&self) -> Vec<NamedFile> {
        let mut files = Vec::new();
        if let Some(r) = &self.report {
            files.push(("results.json".to_string(), to_json(r)));
        }
        files.extend(self.files.iter().cloned());
        files
    }
}

pub fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable output");
    s.push(b'\n');
    s
}

struct Input {
    bytes: Vec<u8>,
    info: InputInfo,
    loaded: LoadedData,
}

fn read_input(args: &InputArgs, map: &ColumnMap, kind: DesignKind) -> CliResult<Input> {
    let bytes = std::fs::read(&args.data)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", args.data.display())))?;
    let loaded = read_dataset(bytes.as_slice(), map, kind)?;
    let info = InputInfo {
        path: args.data.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        rows_read: loaded.report.rows_read,
        rows_dropped: loaded.report.rows_dropped,
        n: loaded.dataset.len(),
    };
    Ok(Input { bytes, info, loaded })
}

fn base_map(args: &InputArgs) -> ColumnMap {
    let map = ColumnMap::new(&args.y, &args.x);
    match &args.weights {
        Some(w) => map.with_weight(w),
        None => map,
    }
}

fn parse_number_list(spec: &str) -> Option<Vec<f64>> {
    let vals: Vec<&str> = spec
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .collect();
    if vals.is_empty() {
        return None;
    }
    vals.iter().map(|t| t.parse::<f64>().ok()).collect()
}

/// A comma list of numbers, or else the non-missing values of a column.
fn numbers_or_column(spec: &str, bytes: &[u8]) -> CliResult<Vec<f64>> {
    match parse_number_list(spec) {
        Some(v) => Ok(v),
        None => Ok(read_column_values(bytes, spec.trim())?),
    }
}

fn split_list(spec: &str) -> Vec<String> {
    spec.split(',').map(|s| s.trim().to_string()).collect()
}

fn apply_level(opts: &mut PerCutoffOptions, pooled: &mut CutoffOptions, level: Option<f64>) {
    if let Some(l) = level {
        for o in &mut opts.0 {
            o.level = l;
        }
        pooled.level = l;
    }
}

fn pooled_options(spec: Option<&str>, level: Option<f64>) -> CliResult<CutoffOptions> {
    let mut pooled = CutoffOptions::default();
    if let Some(l) = level {
        pooled.level = l;
    }
    if let Some(s) = spec {
        pooled.apply_pairs(s)?;
    }
    pooled.validate()?;
    Ok(pooled)
}

/// Contrasts named by `--test`: `equal` expands to every pair of the first
/// `n_primary` rows; `A-B` names two row labels.
fn parse_tests(specs: &[String], bundle: &EstimatesBundle, n_primary: usize) -> CliResult<Vec<TestRow>> {
    let mut out = Vec::new();
    for spec in specs {
        let spec = spec.trim();
        let pairs: Vec<(usize, usize)> = if spec.eq_ignore_ascii_case("equal") {
            if n_primary < 2 {
                return Err(CliError::validation("`--test equal` needs at least two cutoffs"));
            }
            (0..n_primary)
                .flat_map(|i| (i + 1..n_primary).map(move |j| (i, j)))
                .collect()
        } else {
            let found = spec.match_indices('-').find_map(|(pos, _)| {
                let (a, b) = (spec[..pos].trim(), spec[pos + 1..].trim());
                let i = bundle.labels.iter().position(|l| l == a)?;
                let j = bundle.labels.iter().position(|l| l == b)?;
                Some((i, j))
            });
            match found {
                Some(p) if p.0 != p.1 => vec![p],
                _ => {
                    return Err(CliError::validation(format!(
                        "cannot parse test `{spec}`; expected `equal` or `A-B` with labels from {:?}",
                        bundle.labels
                    )))
                }
            }
        };
        for (i, j) in pairs {
            let test = hypothesis_test(bundle, &bundle.difference_contrast(i, j))?;
            out.push(TestRow {
                hypothesis: format!("{} - {}", bundle.labels[i], bundle.labels[j]),
                test,
            });
        }
    }
    Ok(out)
}

fn bundle_from_rows(rows: &[EstimateRow]) -> EstimatesBundle {
    EstimatesBundle::from_diagonal(
        rows.iter().map(|r| r.label.clone()).collect(),
        rows.iter().map(|r| r.tau_bias_corrected).collect(),
        &rows.iter().map(|r| r.se_robust * r.se_robust).collect::<Vec<_>>(),
    )
}

fn estimates_plot_csv(rows: &[EstimateRow]) -> Vec<u8> {
    let mut s = String::from("label,kind,cutoff,tau_conventional,tau_bias_corrected,ci_l,ci_r\n");
    for r in rows {
        let kind = match r.kind {
            RowKind::Cutoff => "cutoff",
            RowKind::Point => "point",
            RowKind::Weighted => "weighted",
            RowKind::Pooled => "pooled",
        };
        let c = r.cutoff.map(|c| c.to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{},{kind},{c},{},{},{},{}\n",
            r.label, r.tau_conventional, r.tau_bias_corrected, r.ci_robust[0], r.ci_robust[1]
        ));
    }
    s.into_bytes()
}

pub fn cmd_rdmc(args: &RdmcArgs) -> CliResult<Outcome> {
    let map = base_map(&args.input).with_cutoff(&args.c);
    let input = read_input(&args.input, &map, DesignKind::MultiCutoff)?;
    let ds = &input.loaded.dataset;
    let mut opts = load_options(args.options.as_deref(), ds.cutoffs.len())?;
    let mut pooled = pooled_options(None, None)?;
    apply_level(&mut opts, &mut pooled, args.level);
    if let Some(s) = &args.pooled_opt {
        pooled.apply_pairs(s)?;
        pooled.validate()?;
    }
    if let Some(h) = args.weight_bw {
        if !(h > 0.0 && h.is_finite()) {
            return Err(CliError::validation("--weight-bw must be positive"));
        }
    }

    let out = rdmc(ds, &opts, &pooled, args.weight_bw)?;
    let level = pooled.level;
    let (lower, upper) = out.weight_window;
    let mut n_sides = (0, 0);
    for o in &ds.observations {
        let xt = o.x1 - o.cutoff.expect("multi-cutoff rows carry a cutoff");
        if -lower <= xt && xt < 0.0 {
            n_sides.0 += 1;
        } else if 0.0 <= xt && xt <= upper {
            n_sides.1 += 1;
        }
    }
    let mut rows: Vec<EstimateRow> = out.estimates.iter().map(EstimateRow::cutoff).collect();
    rows.push(EstimateRow::weighted(&out.weighted, out.weight_window, level, n_sides));
    rows.push(EstimateRow::from_result("pooled".into(), RowKind::Pooled, &out.pooled));
    let tests = parse_tests(&args.test, &out.bundle, out.estimates.len())?;

    let mut warnings = input.loaded.report.warnings();
    warnings.push(if out.weight_window_override {
        format!("pooling weights use the window [-{lower}, {upper}] from --weight-bw")
    } else {
        format!("pooling weights use the pooled bandwidth window [-{lower}, {upper}]")
    });

    let mut stdout = render_table(
        "Cutoff-specific RD estimation with robust bias-corrected inference",
        &rows,
        &tests,
        level,
    );
    if args.output.verbose {
        stdout.push('\n');
        stdout.push_str(&render_fit("pooled", &out.pooled));
    }
    let report = RunReport {
        schema: SCHEMA,
        command: "rdmc".into(),
        mode: None,
        input: input.info,
        options: OptionsInfo {
            per_row: opts.0.clone(),
            pooled: Some(pooled),
        },
        rows: rows.clone(),
        tests,
        weights: Some(WeightInfo {
            lower,
            upper,
            source: if out.weight_window_override { "user" } else { "pooled" },
            cutoffs: out.weights.clone(),
        }),
        overlap: None,
        pooled_fit: args.output.verbose.then(|| out.pooled.clone()),
        warnings: warnings.clone(),
        timing_ms: None,
    };
    let mut files = vec![("estimates.json".to_string(), to_json(&out.bundle))];
    if args.plot {
        files.push(("rdmc_plot.csv".to_string(), estimates_plot_csv(&rows)));
    }
    Ok(Outcome {
        report: Some(report),
        files,
        stdout,
        warnings,
    })
}

#[derive(Debug, Serialize)]
struct PlotDocument {
    schema: &'static str,
    input: InputInfo,
    cutoffs: Vec<f64>,
    #[serde(flatten)]
    manifest: PlotManifest,
}

fn plot_outputs(ds: &Dataset, opts: &[PlotOptions], flags: &PlotFlags, input: &InputInfo) -> CliResult<(Vec<NamedFile>, String)> {
    let series = build_plot_data(ds, opts, flags)?;
    let mut genvars = Vec::new();
    let rows: Vec<usize> = ds.observations.iter().map(|o| o.row).collect();
    write_genvars(&mut genvars, &series, &rows, input.rows_read)?;
    let doc = PlotDocument {
        schema: "rdmulti.plot/1",
        input: input.clone(),
        cutoffs: ds.cutoff_values(),
        manifest: plot_manifest(&series, flags),
    };
    let mut summary = String::from("Plot data\n");
    summary.push_str(&format!("{:<10}{:>8}{:>8}{:>8}{:>8}{:>6}\n", "cutoff", "N left", "N right", "bins l", "bins r", "p"));
    for s in &series {
        summary.push_str(&format!(
            "{:<10}{:>8}{:>8}{:>8}{:>8}{:>6}\n",
            cutoff_label(s.cutoff),
            s.left.n,
            s.right.n,
            s.left.bins.len(),
            s.right.bins.len(),
            s.options.p
        ));
    }
    summary.push_str(&format!("columns: {}\n", doc.manifest.columns.join(" ")));
    Ok((
        vec![
            ("genvars.csv".to_string(), genvars),
            ("plot_manifest.json".to_string(), to_json(&doc)),
        ],
        summary,
    ))
}

fn set_plot_column(opts: &mut [PlotOptions], key: &str, spec: &str) -> CliResult<()> {
    let vals = split_list(spec);
    if vals.len() != opts.len() {
        return Err(CliError::validation(format!(
            "--{key} has {} values for {} cutoffs",
            vals.len(),
            opts.len()
        )));
    }
    for (o, v) in opts.iter_mut().zip(vals) {
        o.set(key, &v)?;
    }
    Ok(())
}

pub fn cmd_rdmcplot(args: &PlotArgs) -> CliResult<Outcome> {
    let map = ColumnMap::new(&args.input.y, &args.input.x).with_cutoff(&args.c);
    if args.input.weights.is_some() {
        return Err(CliError::validation("unsupported option `weights` for rdmcplot"));
    }
    let input = read_input(&args.input, &map, DesignKind::MultiCutoff)?;
    let ds = &input.loaded.dataset;
    let n = ds.cutoffs.len();
    let mut opts = match &args.options {
        Some(path) => {
            let file = std::fs::File::open(path)
                .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
            parse_plot_options_table(file, n)?
        }
        None => vec![PlotOptions::default(); n],
    };
    if let Some(h) = &args.h {
        set_plot_column(&mut opts, "h", h)?;
    }
    if let Some(p) = &args.p {
        set_plot_column(&mut opts, "p", p)?;
    }
    if let Some(b) = &args.nbins {
        set_plot_column(&mut opts, "nbins", b)?;
    }
    for o in &mut opts {
        if let Some(b) = args.binselect {
            o.binselect = match b {
                BinSelectArg::Es => BinMethod::Es,
                BinSelectArg::Qs => BinMethod::Qs,
            };
        }
        if let Some(k) = &args.kernel {
            o.kernel = k.parse()?;
        }
    }
    let flags = PlotFlags {
        nobins: args.nobins,
        nopoly: args.nopoly,
        ci_level: args.ci,
    };
    let (files, stdout) = plot_outputs(ds, &opts, &flags, &input.info)?;
    Ok(Outcome {
        report: None,
        files,
        stdout,
        warnings: input.loaded.report.warnings(),
    })
}

fn parse_corner(spec: &str) -> CliResult<Boundary> {
    match parse_number_list(spec).as_deref() {
        Some(&[a, b]) => Ok(Boundary::Corner { a, b }),
        _ => Err(CliError::validation(format!("--xnorm-corner expects `a,b`, got `{spec}`"))),
    }
}

/// Values of `column` for every observation, by source row.
fn aligned_column(bytes: &[u8], column: &str, ds: &Dataset) -> CliResult<Vec<f64>> {
    let by_row = read_column_by_row(bytes, column)?;
    ds.observations
        .iter()
        .map(|o| {
            by_row[o.row]
                .ok_or_else(|| CliError::validation(format!("missing `{column}` at data row {}", o.row + 1)))
        })
        .collect()
}

pub fn cmd_rdms(args: &RdmsArgs) -> CliResult<Outcome> {
    let named: Vec<&str> = [
        ("x2", args.x2.is_some()),
        ("treat", args.treat.is_some()),
        ("c2", args.c2.is_some()),
    ]
    .iter()
    .filter(|(_, on)| *on)
    .map(|(n, _)| *n)
    .collect();
    let bivariate = !named.is_empty() || args.xnorm_corner.is_some();
    if bivariate && named.len() < 3 {
        let missing: Vec<&str> = ["x2", "treat", "c2"].into_iter().filter(|n| !named.contains(n)).collect();
        return Err(CliError::validation(format!(
            "cannot infer the design: bivariate flags given but --{} missing",
            missing.join(", --")
        )));
    }
    if bivariate {
        rdms_bivariate(args)
    } else {
        rdms_cumulative(args)
    }
}

fn pooled_row(bytes: &[u8], ds: &Dataset, args: &RdmsArgs, pooled: &CutoffOptions, treats: Option<(&[bool], &Boundary)>) -> CliResult<Option<(EstimateRow, rdmulti_core::RdResult)>> {
    let xnorm = match (&args.xnorm, &args.xnorm_corner, treats) {
        (Some(_), Some(_), _) => return Err(CliError::validation("give either --xnorm or --xnorm-corner, not both")),
        (Some(col), None, _) => {
            let v = aligned_column(bytes, col, ds)?;
            if ds.kind == DesignKind::Bivariate {
                let rows: Vec<usize> = ds.observations.iter().map(|o| o.row).collect();
                check_xnorm_signs(&v, &ds.treats(), &rows)?;
            }
            v
        }
        (None, Some(_), Some((_, boundary))) => normalized_scores(ds, boundary)?,
        (None, Some(_), None) => return Err(CliError::validation("--xnorm-corner needs the bivariate design")),
        (None, None, _) => return Ok(None),
    };
    let ws = ds.weights();
    let r = pooled_on_xnorm(&ds.ys(), &xnorm, pooled, ws.as_deref())?;
    Ok(Some((EstimateRow::from_result("pooled".into(), RowKind::Pooled, &r), r)))
}

fn rdms_cumulative(args: &RdmsArgs) -> CliResult<Outcome> {
    let map = base_map(&args.input);
    let input = read_input(&args.input, &map, DesignKind::Cumulative)?;
    let ds = &input.loaded.dataset;
    let cutoffs = numbers_or_column(&args.c, &input.bytes)?;
    let mut opts = load_options(args.options.as_deref(), cutoffs.len())?;
    let mut pooled = pooled_options(None, None)?;
    apply_level(&mut opts, &mut pooled, args.level);
    if let Some(s) = &args.pooled_opt {
        pooled.apply_pairs(s)?;
        pooled.validate()?;
    }
    let ranges: Option<Vec<ScoreRange>> = if args.range.is_empty() {
        None
    } else {
        if args.range.len() != cutoffs.len() {
            return Err(CliError::validation(format!(
                "{} --range values for {} cutoffs",
                args.range.len(),
                cutoffs.len()
            )));
        }
        Some(args.range.iter().map(|r| r.parse()).collect::<Result<_, _>>()?)
    };
    let ws = ds.weights();
    let out = cumulative_estimates(&ds.ys(), &ds.x1s(), &cutoffs, ranges.as_deref(), &opts, ws.as_deref())?;
    let mut rows: Vec<EstimateRow> = out
        .estimates
        .iter()
        .map(|e| {
            let mut row = EstimateRow::from_result(cutoff_label(e.cutoff), RowKind::Cutoff, &e.result);
            row.cutoff = Some(e.cutoff);
            row.range = e.range;
            row
        })
        .collect();
    let pooled_fit = pooled_row(&input.bytes, ds, args, &pooled, None)?;
    let has_pooled = pooled_fit.is_some();
    if let Some((row, _)) = &pooled_fit {
        rows.push(row.clone());
    }
    let bundle = bundle_from_rows(&rows);
    let tests = parse_tests(&args.test, &bundle, out.estimates.len())?;

    let mut warnings = input.loaded.report.warnings();
    warnings.extend(out.warnings.iter().cloned());
    let level = opts.0.first().map_or(95.0, |o| o.level);
    let mut stdout = render_table("Cumulative cutoffs: RD estimation with robust bias-corrected inference", &rows, &tests, level);
    if args.output.verbose {
        if let Some((_, r)) = &pooled_fit {
            stdout.push('\n');
            stdout.push_str(&render_fit("pooled", r));
        }
    }
    let mut files = vec![("estimates.json".to_string(), to_json(&bundle))];
    if args.plot {
        let obs: Vec<Observation> = ds
            .observations
            .iter()
            .map(|o| Observation {
                cutoff: Some(assign_closest_cutoff(o.x1, &cutoffs)),
                ..o.clone()
            })
            .collect();
        let assigned = Dataset::new(DesignKind::MultiCutoff, obs)?;
        let n = assigned.cutoffs.len();
        let (plot_files, summary) = plot_outputs(&assigned, &vec![PlotOptions::default(); n], &PlotFlags::default(), &input.info)?;
        files.extend(plot_files);
        stdout.push('\n');
        stdout.push_str(&summary);
    }
    let report = RunReport {
        schema: SCHEMA,
        command: "rdms".into(),
        mode: Some("cumulative".into()),
        input: input.info,
        options: OptionsInfo {
            per_row: opts.0.clone(),
            pooled: has_pooled.then_some(pooled),
        },
        rows,
        tests,
        weights: None,
        overlap: Some(out.overlap.clone()),
        pooled_fit: if args.output.verbose { pooled_fit.map(|(_, r)| r) } else { None },
        warnings: warnings.clone(),
        timing_ms: None,
    };
    Ok(Outcome {
        report: Some(report),
        files,
        stdout,
        warnings,
    })
}

fn rdms_bivariate(args: &RdmsArgs) -> CliResult<Outcome> {
    if !args.range.is_empty() {
        return Err(CliError::validation("--range applies to cumulative cutoffs only"));
    }
    if args.plot {
        return Err(CliError::validation("--plot applies to cumulative cutoffs only"));
    }
    let (x2, treat, c2) = (
        args.x2.as_deref().expect("checked"),
        args.treat.as_deref().expect("checked"),
        args.c2.as_deref().expect("checked"),
    );
    let map = base_map(&args.input).with_x2(x2).with_treat(treat);
    let input = read_input(&args.input, &map, DesignKind::Bivariate)?;
    let ds = &input.loaded.dataset;
    let c1 = numbers_or_column(&args.c, &input.bytes)?;
    let c2 = numbers_or_column(c2, &input.bytes)?;
    if c1.len() != c2.len() {
        return Err(CliError::validation(format!(
            "{} first coordinates but {} second coordinates",
            c1.len(),
            c2.len()
        )));
    }
    let points: Vec<(f64, f64)> = c1.into_iter().zip(c2).collect();
    let mut opts = load_options(args.options.as_deref(), points.len())?;
    let mut pooled = pooled_options(None, None)?;
    apply_level(&mut opts, &mut pooled, args.level);
    if let Some(s) = &args.pooled_opt {
        pooled.apply_pairs(s)?;
        pooled.validate()?;
    }
    let boundary = match &args.xnorm_corner {
        Some(spec) => {
            let b = parse_corner(spec)?;
            check_treatment_region(ds, &b)?;
            Some(b)
        }
        None => None,
    };
    let est = boundary_point_estimates(ds, &points, &opts)?;
    let mut rows: Vec<EstimateRow> = est
        .iter()
        .map(|e| {
            let mut row = EstimateRow::from_result(point_label(e.point), RowKind::Point, &e.result);
            row.point = Some(e.point);
            row
        })
        .collect();
    let treats = ds.treats();
    let pooled_fit = pooled_row(&input.bytes, ds, args, &pooled, boundary.as_ref().map(|b| (treats.as_slice(), b)))?;
    let has_pooled = pooled_fit.is_some();
    if let Some((row, _)) = &pooled_fit {
        rows.push(row.clone());
    }
    let bundle = bundle_from_rows(&rows);
    let tests = parse_tests(&args.test, &bundle, est.len())?;
    let warnings = input.loaded.report.warnings();
    let level = opts.0.first().map_or(95.0, |o| o.level);
    let mut stdout = render_table("Boundary points: RD estimation with robust bias-corrected inference", &rows, &tests, level);
    if args.output.verbose {
        if let Some((_, r)) = &pooled_fit {
            stdout.push('\n');
            stdout.push_str(&render_fit("pooled", r));
        }
    }
    let report = RunReport {
        schema: SCHEMA,
        command: "rdms".into(),
        mode: Some("bivariate".into()),
        input: input.info,
        options: OptionsInfo {
            per_row: opts.0.clone(),
            pooled: has_pooled.then_some(pooled),
        },
        rows,
        tests,
        weights: None,
        overlap: None,
        pooled_fit: if args.output.verbose { pooled_fit.map(|(_, r)| r) } else { None },
        warnings: warnings.clone(),
        timing_ms: None,
    };
    Ok(Outcome {
        report: Some(report),
        files: vec![("estimates.json".to_string(), to_json(&bundle))],
        stdout,
        warnings,
    })
}

pub fn cmd_simulate(args: &SimArgs) -> CliResult<Outcome> {
    let effects: Option<Vec<f64>> = match &args.effects {
        Some(s) => Some(parse_number_list(s).ok_or_else(|| CliError::validation(format!("cannot parse --effects `{s}`")))?),
        None => None,
    };
    let pair = |default: (f64, f64)| -> CliResult<(f64, f64)> {
        match effects.as_deref() {
            None => Ok(default),
            Some(&[a, b]) => Ok((a, b)),
            Some(v) => Err(CliError::validation(format!("--effects needs 2 values, got {}", v.len()))),
        }
    };
    let mut spec = match args.design {
        DesignArg::Multicutoff => DgpSpec::multicutoff(args.n, pair((5.0, 2.0))?, args.seed),
        DesignArg::Cumulative => DgpSpec::cumulative(args.n, pair((5.0, -3.0))?, args.seed),
        DesignArg::Bivariate => {
            let effect = match effects.as_deref() {
                None => 4.0,
                Some(&[t]) => t,
                Some(v) => return Err(CliError::validation(format!("--effects needs 1 value, got {}", v.len()))),
            };
            DgpSpec::bivariate(args.n, effect, args.seed)
        }
    };
    if let Some(sd) = args.noise_sd {
        spec.noise_sd = sd;
    }
    let g = generate(&spec)?;
    let mut data = Vec::new();
    write_generated(&mut data, &g)?;
    let truth = truth_json(&g.truth).into_bytes();
    let stdout = format!(
        "simulated {} units ({} design, seed {})\n",
        g.dataset.len(),
        match args.design {
            DesignArg::Multicutoff => "multicutoff",
            DesignArg::Cumulative => "cumulative",
            DesignArg::Bivariate => "bivariate",
        },
        args.seed
    );
    Ok(Outcome {
        report: None,
        files: vec![("data.csv".to_string(), data), ("truth.json".to_string(), truth)],
        stdout,
        warnings: Vec::new(),
    })
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<()> {
    use std::io::Write;
    let io = |e: std::io::Error| CliError::validation(format!("cannot write {}: {e}", dir.join(name).display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(dir.join(name)).map_err(|e| io(e.error))?;
    Ok(())
}
