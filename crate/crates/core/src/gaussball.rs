//! Gaussian ball probabilities `P(|Z + μ| ≤ r)` for `Z ~ N(0, Σ)` and the
//! numerical anti-concentration constant on ellipsoids.
//!
//! In the eigenbasis of `Σ`, `|Z + μ|²` is a weighted noncentral
//! chi-square `Σ_j λ_j (G_j + c_j)²` plus a deterministic offset coming
//! from mean mass in the null space of `Σ`. Its distribution function is
//! evaluated by Imhof's inversion integral
//!
//! ```text
//! P(Q ≤ x) = 1/2 − (1/π) ∫_0^∞ sin θ(u) / (u ρ(u)) du
//! θ(u) = ½ Σ [atan(λ_j u) + c_j² λ_j u / (1 + λ_j² u²)] − ½ x u
//! ρ(u) = Π (1 + λ_j² u²)^{1/4} · exp(½ Σ c_j² λ_j² u² / (1 + λ_j² u²))
//! ```
//!
//! The integral is truncated where Imhof's modulus bound on the tail falls
//! below `tol/2`, and composite Gauss-Legendre panels are doubled until
//! two successive estimates agree to `tol/2`. When the modulus bound
//! decays too slowly for that to be affordable (few or very uneven
//! weights), the range past the point where the phase becomes strictly
//! monotone is integrated half-period by half-period and the resulting
//! alternating series is summed with repeated averaging.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::special::chi2_cdf;
use crate::spectral::{kappa, sym_eigen, SpectralSummary, SymMatrix};

use std::f64::consts::PI;

/// Above this many panels the tail is handled as an alternating series.
const PANEL_BUDGET: usize = 4096;
const MAX_PANELS: usize = 1 << 20;
const MAX_TAIL_PIECES: usize = 1 << 14;
const AVERAGING_LEVELS: usize = 12;

const GL_NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_4,
    0.219_086_362_515_982_0,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

/// The law of `Σ_j weights_j (G_j + c_j)² + offset`, with
/// `noncentralities_j = c_j²`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightedChiSquare {
    pub weights: Vec<f64>,
    pub noncentralities: Vec<f64>,
    pub offset: f64,
}

impl WeightedChiSquare {
    pub fn central(weights: Vec<f64>) -> Result<Self> {
        let nc = vec![0.0; weights.len()];
        Self::new(weights, nc, 0.0)
    }

    pub fn new(weights: Vec<f64>, noncentralities: Vec<f64>, offset: f64) -> Result<Self> {
        if weights.len() != noncentralities.len() {
            return Err(Error::Contract("weights and noncentralities differ in length".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Contract("weights must be strictly positive and finite".into()));
        }
        if noncentralities.iter().any(|&c| !(c >= 0.0 && c.is_finite())) {
            return Err(Error::Contract("noncentralities must be nonnegative".into()));
        }
        Ok(Self { weights, noncentralities, offset })
    }
}

/// Probability value together with the achieved error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CdfValue {
    pub value: f64,
    pub error_bound: f64,
}

/// Rewrites `|Z + μ|²`, `Z ~ N(0, Σ)`, as a weighted noncentral
/// chi-square. Zero eigenvalues are pruned and their mean mass moved into
/// `offset`.
pub fn to_weighted_chi2(sigma: &SymMatrix, mu: &[f64]) -> Result<WeightedChiSquare> {
    let s = sym_eigen(sigma, 1e-13)?;
    weighted_from_spectrum(&s, mu)
}

fn weighted_from_spectrum(s: &SpectralSummary, mu: &[f64]) -> Result<WeightedChiSquare> {
    let d = s.dim();
    if mu.len() != d {
        return Err(Error::Contract(format!("mean has length {}, expected {d}", mu.len())));
    }
    if let Some(&neg) = s.eigenvalues.iter().find(|&&l| l < 0.0) {
        return Err(Error::Contract(format!("covariance is not positive semidefinite (eigenvalue {neg:e})")));
    }
    let mut weights = Vec::with_capacity(d);
    let mut nc = Vec::with_capacity(d);
    let mut offset = 0.0;
    for (j, &l) in s.eigenvalues.iter().enumerate() {
        let proj: f64 = (0..d).map(|i| s.basis[i * d + j] * mu[i]).sum();
        if l > 0.0 {
            weights.push(l);
            nc.push(proj * proj / l);
        } else {
            offset += proj * proj;
        }
    }
    Ok(WeightedChiSquare { weights, noncentralities: nc, offset })
}

struct Integrand<'a> {
    weights: &'a [f64],
    nc: &'a [f64],
    x: f64,
}

impl Integrand<'_> {
    fn theta(&self, u: f64) -> f64 {
        let mut t = 0.0;
        for (&l, &c) in self.weights.iter().zip(self.nc) {
            let lu = l * u;
            t += lu.atan() + c * lu / (1.0 + lu * lu);
        }
        0.5 * t - 0.5 * self.x * u
    }

    fn theta_prime(&self, u: f64) -> f64 {
        let mut t = 0.0;
        for (&l, &c) in self.weights.iter().zip(self.nc) {
            let lu2 = (l * u) * (l * u);
            let den = 1.0 + lu2;
            t += l / den + c * l * (1.0 - lu2) / (den * den);
        }
        0.5 * t - 0.5 * self.x
    }

    fn eval(&self, u: f64) -> f64 {
        if u == 0.0 {
            return self.theta_prime(0.0);
        }
        let mut theta = 0.0;
        let mut ln_rho = 0.0;
        for (&l, &c) in self.weights.iter().zip(self.nc) {
            let lu = l * u;
            let lu2 = lu * lu;
            theta += lu.atan() + c * lu / (1.0 + lu2);
            ln_rho += 0.25 * lu2.ln_1p() + 0.5 * c * lu2 / (1.0 + lu2);
        }
        theta = 0.5 * theta - 0.5 * self.x * u;
        theta.sin() * (-ln_rho).exp() / u
    }

    /// Imhof's bound on `(1/π)|∫_U^∞ f|`.
    fn modulus_tail(&self, u: f64) -> f64 {
        let k = 0.5 * self.weights.len() as f64;
        let mut ln = (PI * k).ln() + k * u.ln();
        for (&l, &c) in self.weights.iter().zip(self.nc) {
            let lu2 = (l * u) * (l * u);
            ln += 0.5 * l.ln() + 0.5 * c * lu2 / (1.0 + lu2);
        }
        (-ln).exp()
    }

    /// Upper bound on `|θ'|`, used to size panels.
    fn max_rate(&self) -> f64 {
        let s: f64 = self.weights.iter().zip(self.nc).map(|(&l, &c)| l * (1.0 + c)).sum();
        0.5 * (s + self.x.abs())
    }
}

fn gauss_legendre(f: &impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        let mut acc = 0.0;
        for (&x, &w) in GL_NODES.iter().zip(&GL_WEIGHTS) {
            acc += w * (f(mid - half * x) + f(mid + half * x));
        }
        total += acc * half;
    }
    total
}

/// Integrates `f` over `[a, b]` doubling panels until successive estimates
/// differ by at most `budget` (in units of the integral). Returns the
/// estimate and the last observed difference.
fn refine(f: &impl Fn(f64) -> f64, a: f64, b: f64, initial: usize, budget: f64) -> Result<(f64, f64)> {
    let mut panels = initial.max(4);
    let mut prev = gauss_legendre(f, a, b, panels);
    loop {
        if panels > MAX_PANELS {
            return Err(Error::Quadrature { achieved: f64::NAN });
        }
        panels *= 2;
        let next = gauss_legendre(f, a, b, panels);
        let diff = (next - prev).abs();
        if diff <= budget {
            return Ok((next, diff));
        }
        if panels > MAX_PANELS {
            return Err(Error::Quadrature { achieved: diff / PI });
        }
        prev = next;
    }
}

/// Repeatedly averages neighbouring partial sums; the standard cheap
/// accelerator for alternating series with smooth terms.
fn averaged_limit(partial: &[f64]) -> f64 {
    let levels = AVERAGING_LEVELS.min(partial.len() - 1);
    let mut row: Vec<f64> = partial[partial.len() - 1 - levels..].to_vec();
    for _ in 0..levels {
        row = row.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    row[0]
}

/// Solves `θ(u) = target` for `u > from`, given `θ' ∈ [-3x/4, -x/4]` there.
fn next_phase_point(g: &Integrand<'_>, from: f64, target: f64) -> f64 {
    let gap = g.theta(from) - target;
    let mut lo = from + gap / (0.75 * g.x);
    let mut hi = from + gap / (0.25 * g.x);
    let mut u = from + gap / (0.5 * g.x);
    for _ in 0..100 {
        let r = g.theta(u) - target;
        if r.abs() <= 1e-13 * target.abs().max(1.0) {
            break;
        }
        if r > 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        let step = u - r / g.theta_prime(u);
        u = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    u
}

/// `P(Σ λ_j (G_j + c_j)² ≤ x)` by Imhof's inversion integral. The
/// distribution's `offset` is not applied here; callers shift `x`.
pub fn imhof_cdf(w: &WeightedChiSquare, x: f64, tol: f64) -> Result<CdfValue> {
    if !(tol >= 1e-9) {
        return Err(Error::Domain(format!("imhof tolerance {tol:e} below 1e-9")));
    }
    if w.weights.is_empty() {
        // Degenerate point mass at zero.
        let value = if x >= 0.0 { 1.0 } else { 0.0 };
        return Ok(CdfValue { value, error_bound: 0.0 });
    }
    if x <= 0.0 {
        return Ok(CdfValue { value: 0.0, error_bound: 0.0 });
    }
    if x.is_infinite() {
        return Ok(CdfValue { value: 1.0, error_bound: 0.0 });
    }
    let g = Integrand { weights: &w.weights, nc: &w.noncentralities, x };
    let f = |u: f64| g.eval(u);
    let half = 0.5 * tol;
    let lmax = w.weights.iter().cloned().fold(0.0, f64::max);

    // Classical truncation point by doubling.
    let mut upper = 1.0 / lmax;
    while g.modulus_tail(upper) >= half {
        upper *= 2.0;
        if !upper.is_finite() {
            return Err(Error::Quadrature { achieved: f64::INFINITY });
        }
    }
    let rate = g.max_rate();
    let panels_for = |len: f64| ((rate * len / PI).ceil() as usize).max(4);

    // Past `split` the phase falls at a rate between x/4 and 3x/4.
    let spread: f64 = w.weights.iter().zip(&w.noncentralities).map(|(&l, &c)| (1.0 + c) / l).sum();
    let split = (2.0 * spread / x).sqrt();

    let (integral, err) = if panels_for(upper) <= PANEL_BUDGET || split >= upper {
        let (val, diff) = refine(&f, 0.0, upper, panels_for(upper), half * PI)?;
        (val, diff / PI + g.modulus_tail(upper))
    } else {
        let (head, head_diff) = refine(&f, 0.0, split, panels_for(split), 0.5 * half * PI)?;
        let (tail, tail_err) = oscillating_tail(&g, split, 0.5 * half)?;
        (head + tail, head_diff / PI + tail_err)
    };

    let value = (0.5 - integral / PI).clamp(0.0, 1.0);
    Ok(CdfValue { value, error_bound: err })
}

/// `∫_start^∞ f` split at successive multiples of π in the phase.
fn oscillating_tail(g: &Integrand<'_>, start: f64, budget: f64) -> Result<(f64, f64)> {
    let f = |u: f64| g.eval(u);
    let mut partial = Vec::with_capacity(64);
    let mut sum = 0.0;
    let mut left = start;
    let mut target = (g.theta(start) / PI).ceil() * PI - PI;
    let mut last_estimate = f64::NAN;
    loop {
        let right = next_phase_point(g, left, target);
        sum += gauss_legendre(&f, left, right, 2);
        partial.push(sum);
        left = right;
        target -= PI;
        let m = partial.len();
        if m >= 2 * AVERAGING_LEVELS + 2 {
            let estimate = averaged_limit(&partial);
            let prev = averaged_limit(&partial[..m - 1]);
            let err = (estimate - prev).abs().max((estimate - last_estimate).abs()) / PI;
            if err <= budget {
                return Ok((estimate, err));
            }
            last_estimate = estimate;
            if m >= MAX_TAIL_PIECES {
                return Err(Error::Quadrature { achieved: err });
            }
        }
    }
}

/// `P(|Z + μ|² ≤ t)` prepared once for repeated queries.
#[derive(Clone, Debug)]
pub enum NormSqLaw {
    /// `σ² χ²_d`.
    ScaledChi2 {
        d: usize,
        scale: f64,
    },
    Weighted(WeightedChiSquare),
}

impl NormSqLaw {
    pub fn new(sigma: &SymMatrix, mu: &[f64]) -> Result<Self> {
        if mu.len() != sigma.dim() {
            return Err(Error::Contract(format!("mean has length {}, expected {}", mu.len(), sigma.dim())));
        }
        if mu.iter().all(|&m| m == 0.0) {
            if let Some(scale) = sigma.as_scalar_identity() {
                if scale < 0.0 {
                    return Err(Error::Contract("negative variance".into()));
                }
                return Ok(Self::ScaledChi2 { d: sigma.dim(), scale });
            }
        }
        Ok(Self::Weighted(to_weighted_chi2(sigma, mu)?))
    }

    pub fn cdf(&self, t: f64, tol: f64) -> Result<CdfValue> {
        match self {
            Self::ScaledChi2 { d, scale } => {
                let value = if *scale == 0.0 {
                    if t >= 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    chi2_cdf(*d, t / scale)
                };
                Ok(CdfValue { value, error_bound: 1e-12 })
            }
            Self::Weighted(w) => imhof_cdf(w, t - w.offset, tol),
        }
    }
}

/// `P(|Z + μ| ≤ r)` for `Z ~ N(0, Σ)`.
pub fn ball_prob(sigma: &SymMatrix, mu: &[f64], r: f64, tol: f64) -> Result<CdfValue> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("radius must be nonnegative, got {r}")));
    }
    NormSqLaw::new(sigma, mu)?.cdf(r * r, tol)
}

#[derive(Clone, Debug, Serialize)]
pub struct AntiConcentration {
    pub ratio: f64,
    /// Left end `a` of the maximizing window `[a, a + eps]`.
    pub argmax: f64,
    pub kappa: f64,
    pub eps: f64,
    pub grid_points: usize,
}

/// `max_a [P(|Z+μ|² ≤ a+ε) − P(|Z+μ|² ≤ a)] / (κ(Σ) ε)` over the grid
/// `a ∈ {0, step, …, grid_max}`. Defaults: `grid_max = tr Σ + 6Λ_1(Σ)`,
/// `step = ε/4`.
pub fn anti_concentration_ratio(
    sigma: &SymMatrix,
    mu: &[f64],
    eps: f64,
    grid_max: Option<f64>,
    grid_step: Option<f64>,
    tol: f64,
) -> Result<AntiConcentration> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let s = sym_eigen(sigma, 1e-13)?;
    let kap = kappa(&s)?;
    let law = NormSqLaw::new(sigma, mu)?;
    let grid_max = grid_max.unwrap_or(s.trace + 6.0 * s.lambda1);
    let step = grid_step.unwrap_or(0.25 * eps);
    if !(step > 0.0 && grid_max >= 0.0) {
        return Err(Error::Domain("grid step must be positive and grid max nonnegative".into()));
    }
    let points = (grid_max / step).floor() as usize + 1;

    let shift = eps / step;
    let shift_idx = shift.round() as usize;
    let aligned = (shift - shift.round()).abs() <= 1e-9 * shift;

    let mut lower = Vec::with_capacity(points + shift_idx);
    let extent = if aligned { points + shift_idx } else { points };
    for i in 0..extent {
        lower.push(law.cdf(i as f64 * step, tol)?.value);
    }
    let mut best = f64::NEG_INFINITY;
    let mut argmax = 0.0;
    for i in 0..points {
        let a = i as f64 * step;
        let upper = if aligned { lower[i + shift_idx] } else { law.cdf(a + eps, tol)?.value };
        let mass = upper - lower[i];
        if mass > best {
            best = mass;
            argmax = a;
        }
    }
    Ok(AntiConcentration { ratio: best / (kap * eps), argmax, kappa: kap, eps, grid_points: points })
}
