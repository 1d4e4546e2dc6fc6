use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "rdmulti", version, about = "Regression discontinuity with multiple cutoffs or multiple scores")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cutoff-specific, weighted and pooled effects for non-cumulative cutoffs
    Rdmc(RdmcArgs),
    /// Binned means and polynomial fits at each cutoff, as replication columns
    Rdmcplot(PlotArgs),
    /// Cumulative cutoffs on one score, or boundary points of two scores
    Rdms(RdmsArgs),
    /// Write a synthetic sample with known effects
    Simulate(SimArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Delimited input file with a header row
    #[arg(long)]
    pub data: PathBuf,
    /// Outcome column
    #[arg(long, default_value = "y")]
    pub y: String,
    /// Score column (first score in bivariate mode)
    #[arg(long, default_value = "x")]
    pub x: String,
    /// Sampling weight column
    #[arg(long)]
    pub weights: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Directory for the output files
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Include the pooled fit details
    #[arg(long)]
    pub verbose: bool,
    /// Re-run on a single worker and fail unless every output is identical
    #[arg(long)]
    pub seed_check: bool,
    /// Record wall-clock time in the results document
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RdmcArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Column holding each unit's cutoff
    #[arg(long)]
    pub c: String,
    /// Option table with one row per cutoff in ascending order
    #[arg(long)]
    pub options: Option<PathBuf>,
    /// Options for the pooled fit, as `key=value` pairs
    #[arg(long, allow_hyphen_values = true)]
    pub pooled_opt: Option<String>,
    /// Confidence level in percent for every fit
    #[arg(long)]
    pub level: Option<f64>,
    /// Write the estimates with their intervals as plot data
    #[arg(long)]
    pub plot: bool,
    /// Contrast to test: `equal` for all pairs of cutoffs, or `A-B` with row labels
    #[arg(long)]
    pub test: Vec<String>,
    /// Half-width of the window used for the pooling weights
    #[arg(long)]
    pub weight_bw: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BinSelectArg {
    Es,
    Qs,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Column holding each unit's cutoff
    #[arg(long)]
    pub c: String,
    /// Plot option table with one row per cutoff
    #[arg(long)]
    pub options: Option<PathBuf>,
    /// Bandwidth per cutoff, comma separated
    #[arg(long)]
    pub h: Option<String>,
    /// Polynomial order per cutoff, comma separated
    #[arg(long)]
    pub p: Option<String>,
    /// Bins per side per cutoff, comma separated
    #[arg(long)]
    pub nbins: Option<String>,
    #[arg(long, value_enum)]
    pub binselect: Option<BinSelectArg>,
    /// Kernel for windowed fits
    #[arg(long)]
    pub kernel: Option<String>,
    /// Omit the bin columns
    #[arg(long)]
    pub nobins: bool,
    /// Omit the fitted values
    #[arg(long)]
    pub nopoly: bool,
    /// Level in percent of the bin-mean intervals
    #[arg(long, default_value_t = 95.0)]
    pub ci: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RdmsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Second score column (bivariate mode)
    #[arg(long)]
    pub x2: Option<String>,
    /// Treatment indicator column (bivariate mode)
    #[arg(long)]
    pub treat: Option<String>,
    /// Cutoffs, or first coordinates of boundary points: a comma list or a column name
    #[arg(long)]
    pub c: String,
    /// Second coordinates of boundary points: a comma list or a column name
    #[arg(long)]
    pub c2: Option<String>,
    /// Option table with one row per cutoff or point
    #[arg(long)]
    pub options: Option<PathBuf>,
    /// Estimation range `lo,hi`, once per cutoff
    #[arg(long, allow_hyphen_values = true)]
    pub range: Vec<String>,
    /// Column with a normalized score for a pooled fit
    #[arg(long)]
    pub xnorm: Option<String>,
    /// Corner `a,b` of the treatment region {x1 <= a, x2 <= b}; the pooled fit uses the distance to its boundary
    #[arg(long, allow_hyphen_values = true)]
    pub xnorm_corner: Option<String>,
    /// Options for the pooled fit, as `key=value` pairs
    #[arg(long, allow_hyphen_values = true)]
    pub pooled_opt: Option<String>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Write plot data with units assigned to their closest cutoff (cumulative mode)
    #[arg(long)]
    pub plot: bool,
    /// Contrast to test: `equal` for all pairs, or `A-B` with row labels
    #[arg(long)]
    pub test: Vec<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    Multicutoff,
    Cumulative,
    Bivariate,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    #[arg(long, value_enum)]
    pub design: DesignArg,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Effects per cutoff (one value for the bivariate design), comma separated
    #[arg(long, allow_hyphen_values = true)]
    pub effects: Option<String>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Generate twice and fail unless the files are identical
    #[arg(long)]
    pub seed_check: bool,
}
