//! Asymptotic reference distributions.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::{erf::erfc, gamma::gamma_ur};

use crate::error::{NnctError, Result};

/// Upper tail `P(Z > z)` of the standard normal.
pub fn normal_sf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Upper tail `P(X > x)` of the chi-square distribution with `df` degrees of
/// freedom, via the regularized upper incomplete gamma function.
pub fn chisq_sf(x: f64, df: u32) -> Result<f64> {
    if df == 0 {
        return Err(NnctError::Argument("chi-square needs df >= 1".into()));
    }
    if x.is_nan() {
        return Err(NnctError::Argument("chi-square statistic is NaN".into()));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(gamma_ur(df as f64 / 2.0, x / 2.0).clamp(0.0, 1.0))
}
