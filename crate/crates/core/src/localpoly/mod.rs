//! Single-cutoff sharp RD engine: kernel-weighted local polynomial fits,
//! plug-in bandwidth selection and robust bias-corrected inference.
//!
//! The bias-corrected estimator subtracts the leading bias term of the
//! order-`p` fit on bandwidth `h`, estimated from the `(p + 1)`-th
//! coefficient of an order-`q` fit on bandwidth `b`. It is linear in the
//! outcomes, and its robust variance is the HC1 sandwich of that linear
//! combination with residuals from the order-`q` fit. When `b = h` and
//! `q = p + 1` it coincides with the order-`q` estimate itself.

mod bandwidth;
mod estimate;
mod fit;

pub use bandwidth::{select_bandwidth, Bandwidths, FitSpec};
pub use estimate::{rd_estimate, BandwidthSource, RdResult};
pub use fit::{local_poly_fit, Side, SideFit};

pub(crate) use estimate::require_both_sides;
pub(crate) use fit::{eval_poly, fit_window, weighted_poly_fit};
