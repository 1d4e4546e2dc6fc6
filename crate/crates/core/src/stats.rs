use statrs::distribution::{ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::standard()
}

pub fn normal_cdf(z: f64) -> f64 {
    standard().cdf(z)
}

/// Two-sided critical value `z_{1-α/2}` for a confidence level in percent.
pub fn critical_value(level: f64) -> f64 {
    let alpha = 1.0 - level / 100.0;
    standard().inverse_cdf(1.0 - alpha / 2.0)
}

/// Two-sided normal p-value of `estimate / se`. A zero standard error gives
/// 0 for a nonzero estimate and 1 otherwise.
pub fn two_sided_p(estimate: f64, se: f64) -> f64 {
    if se == 0.0 {
        return if estimate == 0.0 { 1.0 } else { 0.0 };
    }
    // erfc form keeps precision in the far tail
    2.0 * standard().sf((estimate / se).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_values() {
        assert!((critical_value(95.0) - 1.959963984540054).abs() < 1e-12);
        assert!((critical_value(90.0) - 1.6448536269514722).abs() < 1e-12);
    }

    #[test]
    fn p_values() {
        assert!((two_sided_p(1.959963984540054, 1.0) - 0.05).abs() < 1e-9);
        assert_eq!(two_sided_p(0.0, 0.0), 1.0);
        assert_eq!(two_sided_p(2.0, 0.0), 0.0);
    }
}
