use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::RdError;

/// Compactly supported kernels on [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    #[default]
    Triangular,
    Uniform,
    Epanechnikov,
}

impl KernelKind {
    pub fn weight(self, u: f64) -> f64 {
        kernel_weight(u, self)
    }

    /// One-sided moment `∫_0^1 K(u) u^k du`.
    pub fn moment(self, k: usize) -> f64 {
        let k = k as f64;
        match self {
            KernelKind::Triangular => 1.0 / (k + 1.0) - 1.0 / (k + 2.0),
            KernelKind::Uniform => 0.5 / (k + 1.0),
            KernelKind::Epanechnikov => 0.75 * (1.0 / (k + 1.0) - 1.0 / (k + 3.0)),
        }
    }

    /// One-sided moment of the squared kernel, `∫_0^1 K(u)^2 u^k du`.
    pub fn squared_moment(self, k: usize) -> f64 {
        let k = k as f64;
        match self {
            KernelKind::Triangular => 1.0 / (k + 1.0) - 2.0 / (k + 2.0) + 1.0 / (k + 3.0),
            KernelKind::Uniform => 0.25 / (k + 1.0),
            KernelKind::Epanechnikov => {
                0.5625 * (1.0 / (k + 1.0) - 2.0 / (k + 3.0) + 1.0 / (k + 5.0))
            }
        }
    }
}

/// Kernel weight at `u`; zero outside `|u| <= 1`.
pub fn kernel_weight(u: f64, kernel: KernelKind) -> f64 {
    let a = u.abs();
    if a > 1.0 {
        return 0.0;
    }
    match kernel {
        KernelKind::Triangular => 1.0 - a,
        KernelKind::Uniform => 0.5,
        KernelKind::Epanechnikov => 0.75 * (1.0 - u * u),
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Triangular => "triangular",
            KernelKind::Uniform => "uniform",
            KernelKind::Epanechnikov => "epanechnikov",
        })
    }
}

impl FromStr for KernelKind {
    type Err = RdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "triangular" | "tri" => Ok(KernelKind::Triangular),
            "uniform" | "uni" => Ok(KernelKind::Uniform),
            "epanechnikov" | "epa" => Ok(KernelKind::Epanechnikov),
            other => Err(RdError::InvalidOption {
                option: "kernel".into(),
                value: other.into(),
                reason: "expected triangular, uniform or epanechnikov".into(),
            }),
        }
    }
}
