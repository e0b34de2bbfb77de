//! Thin wrappers over `statrs` special functions in the forms used here.

use statrs::function::{erf, gamma};

use std::f64::consts::SQRT_2;

/// Standard normal distribution function `Φ`.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal quantile `Φ^{-1}`.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        -SQRT_2 * erf::erfc_inv(2.0 * p)
    }
}

/// Regularized lower incomplete gamma `P(a, x)`, extended by 0 for
/// `x ≤ 0` and 1 at `x = ∞`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma::gamma_lr(a, x)
    }
}

pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

/// Central chi-square distribution function with `d` degrees of freedom.
#[inline]
pub fn chi2_cdf(d: usize, x: f64) -> f64 {
    gamma_p(0.5 * d as f64, 0.5 * x)
}
