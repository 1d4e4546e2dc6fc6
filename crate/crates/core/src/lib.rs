//! Regression discontinuity estimation with multiple cutoffs or multiple
//! scores.
//!
//! - [`localpoly`]: the single-cutoff engine every analysis runs on.
//! - [`multicutoff`]: cutoff-specific, weighted-average and pooled effects
//!   for groups facing different cutoffs, plus post-estimation tests.
//! - [`multiscore`]: cumulative cutoffs with range restriction, and
//!   bivariate scores with distance-based normalization.
//! - [`rdplot`]: binned means, bin confidence intervals and per-side
//!   polynomial fits as replication columns.
//! - [`simgen`]: synthetic designs with known effects.

pub mod datamodel;
pub mod error;
pub mod kernel;
pub mod localpoly;
pub mod multicutoff;
pub mod multiscore;
pub mod rdplot;
pub mod simgen;
pub mod stats;

pub use datamodel::{
    load_dataset, load_options, ColumnMap, CutoffOptions, Dataset, DesignKind, MultiCutoffDataset,
    Observation, PerCutoffOptions,
};
pub use error::{RdError, Result};
pub use kernel::{kernel_weight, KernelKind};
pub use localpoly::{local_poly_fit, rd_estimate, select_bandwidth, RdResult, Side, SideFit};
pub use multicutoff::{
    assemble_bundle, cutoff_specific_estimates, estimate_weights, hypothesis_test, pooled_estimate, rdmc,
    weighted_average_estimate, CutoffEstimate, CutoffWeight, EstimatesBundle, RdmcOutput, WeightedEstimate,
};
pub use multiscore::{
    assign_closest_cutoff, boundary_point_estimates, cumulative_estimates, distance_to_point,
    perpendicular_distance_to_boundary, pooled_on_xnorm, Boundary, ScoreRange,
};
pub use rdplot::{build_plot_data, PlotFlags, PlotOptions, PlotSeries};
pub use simgen::{generate, DgpSpec, GroundTruth};
