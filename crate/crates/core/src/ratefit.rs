//! Least-squares fits of power laws on log-log scale.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RateFit {
    /// `(log x, log y)` pairs used in the fit.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_stderr: f64,
}

/// Ordinary least squares `v = intercept + slope·u` on already
/// log-transformed points.
pub fn fit_line(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::Domain(format!("a rate fit needs at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|(u, v)| !u.is_finite() || !v.is_finite()) {
        return Err(Error::Data("rate-fit points must be finite".into()));
    }
    let k = points.len() as f64;
    let mu = points.iter().map(|p| p.0).sum::<f64>() / k;
    let mv = points.iter().map(|p| p.1).sum::<f64>() / k;
    let suu: f64 = points.iter().map(|p| (p.0 - mu).powi(2)).sum();
    let suv: f64 = points.iter().map(|p| (p.0 - mu) * (p.1 - mv)).sum();
    let svv: f64 = points.iter().map(|p| (p.1 - mv).powi(2)).sum();
    if !(suu > 1e-300) || suu <= 1e-24 * points.iter().map(|p| p.0 * p.0).sum::<f64>() {
        return Err(Error::RankDeficient("all abscissas coincide".into()));
    }
    let slope = suv / suu;
    let intercept = mv - slope * mu;
    let sse: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if svv > 0.0 { (1.0 - sse / svv).clamp(0.0, 1.0) } else { 1.0 };
    let slope_stderr = (sse / (k - 2.0) / suu).sqrt();
    Ok(RateFit { points: points.to_vec(), slope, intercept, r2, slope_stderr })
}

/// Fits `y ≈ C x^slope` from positive raw values.
pub fn rate_fit(xs: &[f64], ys: &[f64]) -> Result<RateFit> {
    if xs.len() != ys.len() {
        return Err(Error::Contract("abscissas and ordinates differ in length".into()));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(Error::Domain("power-law fits need positive values".into()));
    }
    let points: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (x.ln(), y.ln())).collect();
    fit_line(&points)
}
