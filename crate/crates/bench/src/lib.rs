//! Shared fixtures for the benchmarks.

use rdmulti_core::simgen::Generated;
use rdmulti_core::{generate, DgpSpec};

pub fn multicutoff_sample(n: usize) -> Generated {
    generate(&DgpSpec::multicutoff(n, (5.0, 2.0), 7)).expect("preset is valid")
}

pub fn cumulative_sample(n: usize) -> Generated {
    generate(&DgpSpec::cumulative(n, (5.0, -3.0), 7)).expect("preset is valid")
}

pub fn bivariate_sample(n: usize) -> Generated {
    generate(&DgpSpec::bivariate(n, 4.0, 7)).expect("preset is valid")
}
