//! Error functionals and assembled right-hand sides of the Gaussian
//! approximation bounds, from analytic or plug-in moments.
//!
//! All right-hand sides omit the unspecified absolute constants; only
//! their shape in `(n, d, Σ, moments)` is meaningful.

use serde::Serialize;

use crate::dataset::{Dataset, ScaleConvention};
use crate::dgp::{DgpKind, DgpSpec, Marginal, MultiplierDist};
use crate::error::{Error, Result};
use crate::special::ln_gamma;
use crate::spectral::{inv_sqrt_from, kappa, sym_eigen, SpectralSummary, SymMatrix};

pub const CONSTANTS_NOTE: &str =
    "all right-hand sides hold up to an unspecified absolute constant C; compare shapes, not values";

const EIGEN_TOL: f64 = 1e-12;

/// Coordinates in which the summands were measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentBasis {
    Original,
    /// Summands `Σ^{-1/2} ξ_i`.
    Whitened,
}

/// Moment aggregates of the summands. The sums are always in summand
/// scale, `sum_p = Σ_i E|ξ_i|^p`; `scale` records how the source rows
/// were stored.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MomentSummary {
    pub n: usize,
    pub d: usize,
    pub sum2: f64,
    pub sum3: f64,
    pub sum4: f64,
    /// `sqrt(n^{-2} Σ_i E X_ij⁴)` per coordinate, `X_i = √n ξ_i`.
    pub coord_fourth: Vec<f64>,
    /// `δ` with `E|ξ_i|⁶ ≤ δ⁶` for all `i`.
    pub sixth_bound: Option<f64>,
    pub scale: ScaleConvention,
    pub basis: MomentBasis,
}

impl MomentSummary {
    fn checked(mut self) -> Result<Self> {
        let all = [self.sum2, self.sum3, self.sum4];
        if all.iter().chain(&self.coord_fourth).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Contract("moment sums must be finite and nonnegative".into()));
        }
        if self.coord_fourth.len() != self.d {
            return Err(Error::Contract("coordFourth must have length d".into()));
        }
        // Cauchy-Schwarz, enforced against round-off.
        self.sum3 = self.sum3.min((self.sum2 * self.sum4).sqrt());
        Ok(self)
    }
}

/// Covariance information: the target `Σ`, `Σ_W = Var(W)` and their gaps.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CovInfo {
    pub sigma: SymMatrix,
    pub sigma_w: SymMatrix,
    /// `‖Σ − Σ_W‖_HS`.
    pub hs_gap: f64,
    /// `Σ_j |Σ_jj − Σ_W,jj|`.
    pub diag_gap: f64,
    /// `‖I − Σ^{-1/2} Σ_W Σ^{-1/2}‖_HS`; absent when `Σ` is singular.
    pub white_gap: Option<f64>,
    /// `δ̂`, the operator-norm deviation of the centred sample covariance.
    pub op_delta: f64,
    /// The same with the uncentred `Σ̄ = n^{-1} Σ X_i X_iᵀ`.
    pub op_delta_wild: f64,
}

impl CovInfo {
    /// Gaps between `sigma` and `sigma_w`, with `δ̂` values supplied.
    pub fn new(sigma: SymMatrix, sigma_w: SymMatrix, op_delta: f64, op_delta_wild: f64) -> Result<Self> {
        let diff = sigma.sub(&sigma_w)?;
        let hs_gap = diff.hs_norm();
        let diag_gap = diff.diag().iter().map(|v| v.abs()).sum();
        let s = sym_eigen(&sigma, EIGEN_TOL)?;
        let white_gap = if s.min_eigenvalue() > 0.0 {
            let root = inv_sqrt_from(&s, 0.0)?;
            let white = sigma_w.conjugate(root.as_slice());
            Some(SymMatrix::identity(sigma.dim()).sub(&white)?.hs_norm())
        } else {
            None
        };
        Ok(Self { sigma, sigma_w, hs_gap, diag_gap, white_gap, op_delta, op_delta_wild })
    }
}

/// `(δ_0, δ'_0, δ_1, δ_2)` of the two-sided ball bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Ball2Deltas {
    pub delta0: f64,
    pub delta0p: f64,
    pub delta1: f64,
    pub delta2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BoundReport {
    pub delta_a: Option<f64>,
    pub delta_b: Option<f64>,
    pub delta0: f64,
    pub delta0p: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub rhs_convex: Option<f64>,
    pub rhs_ball: Option<f64>,
    pub rhs_ball2: Option<f64>,
    pub rhs_cor3: f64,
    pub rhs_mdep: Option<f64>,
    pub delta_star: Option<f64>,
    pub delta_circ: Option<f64>,
    pub constants_note: String,
}

/// `Ψ(x) = x · max(|ln x|, 1)`.
pub fn psi(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("psi needs x > 0, got {x}")));
    }
    Ok(x * x.ln().abs().max(1.0))
}

/// `Ψ` extended by its limit `Ψ(0+) = 0`.
fn psi0(x: f64) -> Result<f64> {
    if x == 0.0 {
        Ok(0.0)
    } else {
        psi(x)
    }
}

/// `δ_A = ‖I − Var(Σ^{-1/2}W)‖_HS + (Σ E|Σ^{-1/2}ξ_i|⁴)^{1/2}`.
pub fn delta_convex(m: &MomentSummary, c: &CovInfo) -> Result<f64> {
    if m.basis != MomentBasis::Whitened {
        return Err(Error::Contract("delta_A needs moments of the whitened summands".into()));
    }
    let gap = c.white_gap.ok_or(Error::Singular { eigenvalue: 0.0 })?;
    Ok(gap + m.sum4.sqrt())
}

/// `δ_B = ‖Σ^{-1}‖_op (‖Σ − Var(W)‖_HS + (Σ E|ξ_i|⁴)^{1/2})`.
pub fn delta_ball(m: &MomentSummary, c: &CovInfo, s: &SpectralSummary) -> Result<f64> {
    let low = s.min_eigenvalue();
    if !(low > 0.0) {
        return Err(Error::Singular { eigenvalue: low });
    }
    Ok((c.hs_gap + m.sum4.sqrt()) / low)
}

pub fn delta_functionals_ball2(
    m: &MomentSummary,
    c: &CovInfo,
    s_w: &SpectralSummary,
    s: &SpectralSummary,
) -> Result<Ball2Deltas> {
    if s_w.dim() != m.d || s.dim() != m.d {
        return Err(Error::Contract("moment and covariance dimensions differ".into()));
    }
    let spread = ((s_w.trace + s.trace) * (s_w.op_norm + s.op_norm)).max(0.0).sqrt();
    Ok(Ball2Deltas {
        delta0: spread * c.hs_gap,
        delta0p: c.diag_gap,
        delta1: s_w.hs_norm * m.sum4 + s_w.op_norm.powf(1.5) * m.sum3,
        delta2: s_w.op_norm.sqrt() * m.sum3 + m.sum4,
    })
}

/// `κ^{3/4} δ_1^{1/4} + κ^{2/3} δ_2^{1/3} + κ^{2/3} δ_0^{1/3} + κ^{1/2} δ'_0^{1/2}`.
pub fn rhs_ball2(kappa: f64, d: &Ball2Deltas) -> f64 {
    kappa.powf(0.75) * d.delta1.powf(0.25)
        + kappa.powf(2.0 / 3.0) * d.delta2.cbrt()
        + kappa.powf(2.0 / 3.0) * d.delta0.cbrt()
        + kappa.sqrt() * d.delta0p.sqrt()
}

/// `d^{1/4} Ψ(δ_A)`.
pub fn rhs_convex(d: usize, delta_a: f64) -> Result<f64> {
    Ok((d as f64).powf(0.25) * psi0(delta_a)?)
}

/// `Ψ(δ_B)`.
pub fn rhs_ball(delta_b: f64) -> Result<f64> {
    psi0(delta_b)
}

/// `n^{-1/8} + (d/n)^{1/6}`.
pub fn rhs_cor3(n: usize, d: usize) -> f64 {
    let (n, d) = (n as f64, d as f64);
    n.powf(-0.125) + (d / n).powf(1.0 / 6.0)
}

/// The six-term bootstrap functional with a given `δ̂`.
pub fn delta_star_with(m: &MomentSummary, s: &SpectralSummary, deltas: &Ball2Deltas, op_delta: f64) -> Result<f64> {
    let k = kappa(s)?;
    let coord: f64 = m.coord_fourth.iter().sum();
    let t1 = k.powf(0.75) * deltas.delta1.powf(0.25);
    let t2 = k.powf(2.0 / 3.0) * deltas.delta2.cbrt();
    let t3 = k.sqrt() * coord.sqrt();
    let t4 = k.powf(2.0 / 3.0) * (s.trace.max(0.0) * (op_delta + s.op_norm) * m.sum4).powf(1.0 / 6.0);
    let t5 = k.powf(0.75) * (op_delta.powf(1.5) * m.sum3).powf(0.25);
    let t6 = k.powf(2.0 / 3.0) * (op_delta.sqrt() * m.sum3).cbrt();
    Ok(t1 + t2 + t3 + t4 + t5 + t6)
}

/// `Δ*` with `δ̂ = ‖Σ̂ − Σ‖_op` from `c`.
pub fn delta_star(m: &MomentSummary, c: &CovInfo, s: &SpectralSummary, deltas: &Ball2Deltas) -> Result<f64> {
    delta_star_with(m, s, deltas, c.op_delta)
}

/// `Δ°`: as [`delta_star`] with `δ̂` taken from `Σ̄`.
pub fn delta_circ(m: &MomentSummary, c: &CovInfo, s: &SpectralSummary, deltas: &Ball2Deltas) -> Result<f64> {
    delta_star_with(m, s, deltas, c.op_delta_wild)
}

/// `L² √(‖Σ‖_op tr Σ / n) + L⁴ tr Σ / n`.
pub fn subgauss_op_norm_bound(l: f64, s: &SpectralSummary, n: usize) -> Result<f64> {
    if !(l >= 1.0) {
        return Err(Error::Domain(format!("sub-Gaussian constant must be >= 1, got {l}")));
    }
    if n == 0 {
        return Err(Error::Domain("n must be positive".into()));
    }
    let tr = s.trace.max(0.0);
    let nf = n as f64;
    Ok(l * l * (s.op_norm * tr / nf).sqrt() + l.powi(4) * tr / nf)
}

/// Two-term bound for `m`-dependent sums with `E|ξ_i|⁶ ≤ δ⁶`, `m̃ = max(m, 1)`.
pub fn rhs_mdep(n: usize, m: usize, delta_sixth: f64, sum2: f64, d: usize) -> Result<f64> {
    if m >= n {
        return Err(Error::Domain(format!("dependence order m = {m} must be below n = {n}")));
    }
    if !(delta_sixth > 0.0) || d == 0 {
        return Err(Error::Domain("delta must be positive and d >= 1".into()));
    }
    let mt = m.max(1) as f64;
    let nf = n as f64;
    let df = d as f64;
    let b = nf * mt.powi(3) * delta_sixth.powi(4);
    let t1 = ((mt * sum2 + b) * (b * (b + 1.0)) / df.powi(3)).powf(0.125);
    let t2 = ((nf * mt * mt * delta_sixth.powi(3) + b) / df).cbrt();
    Ok(t1 + t2)
}

/// Plug-in moments: expectations replaced by the observed values.
pub fn estimate_moments(data: &Dataset) -> Result<MomentSummary> {
    let (n, d) = (data.n(), data.d());
    let f = data.summand_factor();
    let (mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0);
    let mut max_norm = 0.0f64;
    let mut coord = vec![0.0; d];
    for row in data.rows() {
        let mut q = 0.0;
        for (j, &v) in row.iter().enumerate() {
            let xi = v * f;
            q += xi * xi;
            // X_ij⁴/n² = ξ_ij⁴.
            coord[j] += xi.powi(4);
        }
        s2 += q;
        s3 += q * q.sqrt();
        s4 += q * q;
        max_norm = max_norm.max(q.sqrt());
    }
    MomentSummary {
        n,
        d,
        sum2: s2,
        sum3: s3,
        sum4: s4,
        coord_fourth: coord.into_iter().map(f64::sqrt).collect(),
        sixth_bound: (max_norm > 0.0).then_some(max_norm),
        scale: data.scale(),
        basis: MomentBasis::Original,
    }
    .checked()
}

/// Plug-in moments of the whitened summands `Σ^{-1/2} ξ_i`.
pub fn estimate_whitened_moments(data: &Dataset, sigma: &SymMatrix) -> Result<MomentSummary> {
    let white = crate::spectral::whiten(data, sigma)?;
    let mut m = estimate_moments(&white)?;
    m.basis = MomentBasis::Whitened;
    m.scale = data.scale();
    Ok(m)
}

/// `Σ_i ξ_i ξ_iᵀ` (equal to `Σ̄` in the scale of `X`).
pub fn summand_gram(data: &Dataset) -> SymMatrix {
    let d = data.d();
    let f = data.summand_factor();
    let mut g = vec![0.0; d * d];
    for row in data.rows() {
        for j in 0..d {
            let a = row[j] * f;
            for k in j..d {
                g[j * d + k] += a * row[k] * f;
            }
        }
    }
    for j in 0..d {
        for k in 0..j {
            g[j * d + k] = g[k * d + j];
        }
    }
    SymMatrix::new(d, g).expect("finite gram matrix")
}

/// `Σ̂ = n^{-1} Σ (X_i − X̄)(X_i − X̄)ᵀ` in the scale of `X`.
pub fn centred_covariance(data: &Dataset) -> Result<SymMatrix> {
    let (n, d) = (data.n(), data.d());
    if n < 2 {
        return Err(Error::Degenerate(format!("centred covariance needs n >= 2, got {n}")));
    }
    let f = data.raw_factor();
    let mut mean = vec![0.0; d];
    for row in data.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v * f;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut g = vec![0.0; d * d];
    let mut c = vec![0.0; d];
    for row in data.rows() {
        for ((cj, v), m) in c.iter_mut().zip(row).zip(&mean) {
            *cj = v * f - m;
        }
        for j in 0..d {
            for k in j..d {
                g[j * d + k] += c[j] * c[k];
            }
        }
    }
    for j in 0..d {
        for k in 0..j {
            g[j * d + k] = g[k * d + j];
        }
    }
    g.iter_mut().for_each(|v| *v /= n as f64);
    SymMatrix::new(d, g)
}

/// Plug-in covariance information against the target `sigma`.
pub fn estimate_cov_info(data: &Dataset, sigma: &SymMatrix) -> Result<CovInfo> {
    if sigma.dim() != data.d() {
        return Err(Error::Contract(format!(
            "target covariance is {0}x{0} but data has d = {1}",
            sigma.dim(),
            data.d()
        )));
    }
    let sigma_w = summand_gram(data);
    let sigma_hat = centred_covariance(data)?;
    let op_delta = sym_eigen(&sigma_hat.sub(sigma)?, EIGEN_TOL)?.op_norm;
    let op_delta_wild = sym_eigen(&sigma_w.sub(sigma)?, EIGEN_TOL)?.op_norm;
    CovInfo::new(sigma.clone(), sigma_w, op_delta, op_delta_wild)
}

/// Everything computable from one set of inputs. Functionals whose
/// preconditions fail (singular `Σ`, `Λ_2(Σ) = 0`, missing whitened
/// moments or sixth-moment bound) are reported as `None`.
pub fn bound_report(
    m: &MomentSummary,
    whitened: Option<&MomentSummary>,
    c: &CovInfo,
    ma_order: usize,
) -> Result<BoundReport> {
    let s = sym_eigen(&c.sigma, EIGEN_TOL)?;
    let s_w = sym_eigen(&c.sigma_w, EIGEN_TOL)?;
    let deltas = delta_functionals_ball2(m, c, &s_w, &s)?;
    let delta_a = match whitened {
        Some(w) if c.white_gap.is_some() => Some(delta_convex(w, c)?),
        _ => None,
    };
    let delta_b = delta_ball(m, c, &s).ok();
    let kap = s.kappa;
    let rhs_mdep = match m.sixth_bound {
        Some(delta) if ma_order < m.n => Some(rhs_mdep(m.n, ma_order, delta, m.sum2, m.d)?),
        _ => None,
    };
    Ok(BoundReport {
        delta_a,
        delta_b,
        delta0: deltas.delta0,
        delta0p: deltas.delta0p,
        delta1: deltas.delta1,
        delta2: deltas.delta2,
        rhs_convex: delta_a.map(|a| rhs_convex(m.d, a)).transpose()?,
        rhs_ball: delta_b.map(rhs_ball).transpose()?,
        rhs_ball2: kap.map(|k| rhs_ball2(k, &deltas)),
        rhs_cor3: rhs_cor3(m.n, m.d),
        rhs_mdep,
        delta_star: kap.map(|_| delta_star(m, c, &s, &deltas)).transpose()?,
        delta_circ: kap.map(|_| delta_circ(m, c, &s, &deltas)).transpose()?,
        constants_note: CONSTANTS_NOTE.into(),
    })
}

/// `E|G|³` for `G ~ N(0, I_d)`.
fn gaussian_norm_third(d: usize) -> f64 {
    let h = 0.5 * d as f64;
    (1.5 * std::f64::consts::LN_2 + ln_gamma(h + 1.5) - ln_gamma(h)).exp()
}

fn multiplier_abs_moment(e: MultiplierDist, p: i32) -> f64 {
    match (e, p) {
        (_, 2) => 1.0,
        (MultiplierDist::Gaussian, 3) => 2.0 * (2.0 / std::f64::consts::PI).sqrt(),
        (MultiplierDist::Gaussian, 4) => 3.0,
        (MultiplierDist::Gaussian, 6) => 15.0,
        (MultiplierDist::Rademacher, _) => 1.0,
        (MultiplierDist::Mammen, p) => {
            let s5 = 5f64.sqrt();
            let (lo, hi) = ((1.0 - s5) / 2.0, (1.0 + s5) / 2.0);
            let p_lo = (5.0 + s5) / 10.0;
            p_lo * lo.abs().powi(p) + (1.0 - p_lo) * hi.powi(p)
        }
        _ => unreachable!("unsupported multiplier moment"),
    }
}

/// `E(y + S)^{3/2}` for `S ~ χ²_k`, by Gauss-Legendre quadrature in `√S`.
fn shifted_chi2_three_halves(y: f64, k: usize) -> f64 {
    if k == 0 {
        return y.powf(1.5);
    }
    let kf = k as f64;
    let top = (kf + 14.0 * (2.0 * kf).sqrt() + 60.0).sqrt();
    let ln_norm = -(0.5 * kf) * std::f64::consts::LN_2 - ln_gamma(0.5 * kf);
    // Density of T = √S: 2 t^{k-1} e^{-t²/2} / (2^{k/2} Γ(k/2)).
    let f = |t: f64| {
        if t <= 0.0 {
            return if k == 1 { 2.0 * ln_norm.exp() * y.powf(1.5) } else { 0.0 };
        }
        let dens = (std::f64::consts::LN_2 + (kf - 1.0) * t.ln() - 0.5 * t * t + ln_norm).exp();
        dens * (y + t * t).powf(1.5)
    };
    gauss_legendre_20(&f, 0.0, top, 400)
}

fn gauss_legendre_20(f: &impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 10] = [
        0.076_526_521_133_497_33,
        0.227_785_851_141_645_08,
        0.373_706_088_715_419_56,
        0.510_867_001_950_827_1,
        0.636_053_680_726_515,
        0.746_331_906_460_150_8,
        0.839_116_971_822_218_8,
        0.912_234_428_251_325_9,
        0.963_971_927_277_913_8,
        0.993_128_599_185_094_9,
    ];
    const W: [f64; 10] = [
        0.152_753_387_130_725_85,
        0.149_172_986_472_603_75,
        0.142_096_109_318_382_05,
        0.131_688_638_449_176_63,
        0.118_194_531_961_518_42,
        0.101_930_119_817_240_44,
        0.083_276_741_576_704_75,
        0.062_672_048_334_109_06,
        0.040_601_429_800_386_94,
        0.017_614_007_139_152_12,
    ];
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        for (&x, &w) in X.iter().zip(&W) {
            total += half * w * (f(mid - half * x) + f(mid + half * x));
        }
    }
    total
}

/// Closed-form moments for the processes where they are available:
/// `iid-marginal` and `multiplier` with Gaussian or Rademacher
/// coordinates, and `nagaev`.
pub fn analytic_moments(spec: &DgpSpec) -> Result<MomentSummary> {
    let spec = spec.clone().validated()?;
    let (n, d) = (spec.n, spec.d);
    let (nf, df) = (n as f64, d as f64);
    // Moments of |X| for one row, X = √n ξ.
    let (x2, x3, x4, x6, coord4): (f64, f64, f64, Option<f64>, Vec<f64>) = match spec.kind {
        DgpKind::IidMarginal | DgpKind::Multiplier => {
            let (m3, m6) = match spec.marginal {
                Marginal::Gaussian => (gaussian_norm_third(d), df * (df + 2.0) * (df + 4.0)),
                Marginal::Rademacher => (df.powf(1.5), df.powi(3)),
                other => {
                    return Err(Error::Contract(format!(
                        "no closed-form moments for {} coordinates; use plug-in estimates",
                        other.name()
                    )))
                }
            };
            let mu4 = spec.marginal.fourth_moment();
            let m4 = df * (mu4 + df - 1.0);
            let (e3, e4, e6) = match spec.multiplier_dist {
                Some(e) => (multiplier_abs_moment(e, 3), multiplier_abs_moment(e, 4), multiplier_abs_moment(e, 6)),
                None => (1.0, 1.0, 1.0),
            };
            (df, e3 * m3, e4 * m4, Some(e6 * m6), vec![e4 * mu4; d])
        }
        DgpKind::Nagaev => {
            let np = spec.nagaev_params.expect("validated");
            let k = d - 1;
            let kf = k as f64;
            let eta4 = np.fourth_moment();
            let m4 = eta4 + 2.0 * kf + kf * (kf + 2.0);
            // E(η² + S)^{3/2}: atom part plus a Gauss-Legendre average over G.
            let atom = shifted_chi2_three_halves(np.x * np.x, k);
            let smooth = gauss_legendre_20(
                &|g: f64| {
                    let phi = (-0.5 * g * g).exp() / (2.0 * std::f64::consts::PI).sqrt();
                    let eta = np.sigma * g - np.a;
                    phi * shifted_chi2_three_halves(eta * eta, k)
                },
                -12.0,
                12.0,
                24,
            );
            let m3 = np.p * atom + (1.0 - np.p) * smooth;
            let mut coord = vec![3.0; d];
            coord[0] = eta4;
            (df, m3, m4, None, coord)
        }
        DgpKind::MaMdep => {
            return Err(Error::Contract("no closed-form moments for moving averages; use plug-in estimates".into()))
        }
    };
    MomentSummary {
        n,
        d,
        sum2: x2,
        sum3: x3 / nf.sqrt(),
        sum4: x4 / nf,
        coord_fourth: coord4.into_iter().map(|m| (m / nf).sqrt()).collect(),
        sixth_bound: x6.map(|m| (m / nf.powi(3)).powf(1.0 / 6.0)),
        scale: ScaleConvention::RawXi,
        basis: MomentBasis::Original,
    }
    .checked()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::sym_eigen;

    fn moments(sum2: f64, sum3: f64, sum4: f64, d: usize) -> MomentSummary {
        MomentSummary {
            n: 1,
            d,
            sum2,
            sum3,
            sum4,
            coord_fourth: vec![0.0; d],
            sixth_bound: None,
            scale: ScaleConvention::RawXi,
            basis: MomentBasis::Original,
        }
    }

    fn cov(sigma: SymMatrix, sigma_w: SymMatrix) -> CovInfo {
        CovInfo::new(sigma, sigma_w, 0.0, 0.0).unwrap()
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi(1.0).unwrap(), 1.0);
        let e = std::f64::consts::E;
        assert!((psi(e).unwrap() - e).abs() < 1e-15);
        assert!((psi(0.1).unwrap() - 0.230_258_509_299_404_6).abs() < 1e-15);
        assert!(psi(0.0).is_err());
        assert!(psi(-1.0).is_err());
    }

    #[test]
    fn delta_convex_examples() {
        let c = cov(SymMatrix::identity(2), SymMatrix::identity(2));
        let mut m = moments(2.0, 0.0, 4.0, 2);
        assert!(delta_convex(&m, &c).is_err());
        m.basis = MomentBasis::Whitened;
        assert_eq!(delta_convex(&m, &c).unwrap(), 2.0);
        let c = cov(SymMatrix::identity(1), SymMatrix::diagonal(&[2.0]));
        let m = MomentSummary { basis: MomentBasis::Whitened, ..moments(0.0, 0.0, 0.0, 1) };
        assert_eq!(delta_convex(&m, &c).unwrap(), 1.0);
    }

    #[test]
    fn delta_convex_rademacher() {
        // E|X|⁴ = d² for unit Rademacher coordinates, so Σ E|ξ_i|⁴ = d²/n.
        let (n, d) = (50usize, 6usize);
        let mut m = analytic_moments(&DgpSpec::iid(n, d, Marginal::Rademacher)).unwrap();
        m.basis = MomentBasis::Whitened;
        let c = cov(SymMatrix::identity(d), SymMatrix::identity(d));
        let want = ((d * d) as f64 / n as f64).sqrt();
        assert!((delta_convex(&m, &c).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn delta_ball_examples() {
        let id = SymMatrix::identity(2);
        let c = cov(id.clone(), id.clone());
        let s = sym_eigen(&id, 1e-12).unwrap();
        assert_eq!(delta_ball(&moments(0.0, 0.0, 9.0, 2), &c, &s).unwrap(), 3.0);

        let sig = SymMatrix::diagonal(&[2.0, 1.0]);
        let c = cov(sig.clone(), SymMatrix::diagonal(&[2.0, 0.0]));
        let s = sym_eigen(&sig, 1e-12).unwrap();
        assert!((delta_ball(&moments(0.0, 0.0, 0.0, 2), &c, &s).unwrap() - 1.0).abs() < 1e-12);

        let sig = SymMatrix::diagonal(&[0.5, 1.0]);
        let c = cov(sig.clone(), sig.clone());
        let s = sym_eigen(&sig, 1e-12).unwrap();
        assert!((delta_ball(&moments(0.0, 0.0, 1.0, 2), &c, &s).unwrap() - 2.0).abs() < 1e-12);

        let sing = SymMatrix::diagonal(&[1.0, 0.0]);
        let s = sym_eigen(&sing, 1e-12).unwrap();
        let c = cov(sing.clone(), sing);
        assert!(matches!(delta_ball(&moments(0.0, 0.0, 1.0, 2), &c, &s), Err(Error::Singular { .. })));
    }

    #[test]
    fn ball2_single_signed_summand() {
        let data = Dataset::new(1, 2, vec![1.0, 0.0], ScaleConvention::RawXi).unwrap();
        let m = estimate_moments(&data).unwrap();
        let sw = summand_gram(&data);
        assert_eq!(sw, SymMatrix::diagonal(&[1.0, 0.0]));
        let c = cov(sw.clone(), sw.clone());
        let s = sym_eigen(&sw, 1e-12).unwrap();
        let dl = delta_functionals_ball2(&m, &c, &s, &s).unwrap();
        assert_eq!((dl.delta1, dl.delta2, dl.delta0, dl.delta0p), (2.0, 2.0, 0.0, 0.0));
    }

    #[test]
    fn rhs_examples() {
        let z = Ball2Deltas { delta0: 0.0, delta0p: 0.0, delta1: 16.0, delta2: 0.0 };
        assert!((rhs_ball2(1.0, &z) - 2.0).abs() < 1e-15);
        let z = Ball2Deltas { delta0: 0.0, delta0p: 0.0, delta1: 0.0, delta2: 8.0 };
        assert!((rhs_ball2(1.0, &z) - 2.0).abs() < 1e-15);
        let z = Ball2Deltas { delta0: 0.0, delta0p: 0.0, delta1: 0.0, delta2: 0.0 };
        assert_eq!(rhs_ball2(0.7, &z), 0.0);
        assert!((rhs_convex(16, 1.0).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(rhs_ball(1.0).unwrap(), 1.0);
        let e = std::f64::consts::E;
        assert!((rhs_convex(1, e).unwrap() - e).abs() < 1e-15);
        assert!((rhs_cor3(10_000, 100) - (10f64.powf(-0.5) + 10f64.powf(-1.0 / 3.0))).abs() < 1e-15);
        assert!((rhs_cor3(10_000, 100) - 0.780_387).abs() < 1e-6);
        assert_eq!(rhs_cor3(1, 1), 2.0);
        assert!((rhs_cor3(256, 256) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn delta_star_examples() {
        let id = SymMatrix::identity(2);
        let s = sym_eigen(&id, 1e-12).unwrap();
        let k = kappa(&s).unwrap();
        let m = moments(0.0, 0.0, 0.0, 2);
        let dl = Ball2Deltas { delta0: 0.0, delta0p: 0.0, delta1: 16.0, delta2: 0.0 };
        let v = delta_star_with(&m, &s, &dl, 0.0).unwrap();
        assert!((v - k.powf(0.75) * 2.0).abs() < 1e-14);
        // δ̂ = 0 removes the last two terms; only the trace term survives here.
        let m = moments(2.0, 1.0, 1.0, 2);
        let zero = Ball2Deltas { delta0: 0.0, delta0p: 0.0, delta1: 0.0, delta2: 0.0 };
        let v = delta_star_with(&m, &s, &zero, 0.0).unwrap();
        let t4 = k.powf(2.0 / 3.0) * (2.0f64 * 1.0 * 1.0).powf(1.0 / 6.0);
        assert!((v - t4).abs() < 1e-14);
        let rank1 = sym_eigen(&SymMatrix::diagonal(&[1.0, 0.0]), 1e-12).unwrap();
        assert!(matches!(delta_star_with(&m, &rank1, &zero, 0.0), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn delta_star_gaussian_coordinate_term() {
        let (n, d) = (100usize, 5usize);
        let m = analytic_moments(&DgpSpec::iid(n, d, Marginal::Gaussian)).unwrap();
        let s = sym_eigen(&SymMatrix::identity(d), 1e-12).unwrap();
        let k = kappa(&s).unwrap();
        let t3: f64 = k.sqrt() * (d as f64 * (3.0 / n as f64).sqrt()).sqrt();
        let only = MomentSummary { sum3: 0.0, sum4: 0.0, ..m };
        let zero = Ball2Deltas { delta0: 0.0, delta0p: 0.0, delta1: 0.0, delta2: 0.0 };
        let v = delta_star_with(&only, &s, &zero, 0.0).unwrap();
        assert!((v - t3).abs() < 1e-14);
    }

    #[test]
    fn subgauss_examples() {
        let (d, n) = (4usize, 100usize);
        let s = sym_eigen(&SymMatrix::identity(d), 1e-12).unwrap();
        let r = d as f64 / n as f64;
        assert!((subgauss_op_norm_bound(1.0, &s, n).unwrap() - (r.sqrt() + r)).abs() < 1e-15);
        let s = sym_eigen(&SymMatrix::diagonal(&[4.0, 0.0]), 1e-12).unwrap();
        let want = 4.0 * (16.0 / n as f64).sqrt() + 64.0 / n as f64;
        assert!((subgauss_op_norm_bound(2.0, &s, n).unwrap() - want).abs() < 1e-14);
        let mut prev = f64::INFINITY;
        for n in [10, 100, 1000, 10_000] {
            let v = subgauss_op_norm_bound(1.5, &s, n).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(subgauss_op_norm_bound(0.5, &s, 10).is_err());
    }

    #[test]
    fn mdep_examples() {
        assert!(rhs_mdep(5, 5, 1.0, 1.0, 2).is_err());
        assert_eq!(rhs_mdep(50, 0, 0.3, 4.0, 3).unwrap(), rhs_mdep(50, 1, 0.3, 4.0, 3).unwrap());
        let mut prev = f64::INFINITY;
        for d in [1, 10, 100, 1000] {
            let v = rhs_mdep(100, 2, 0.3, 4.0, d).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn mdep_reduces_to_cor3_shape() {
        // With m = 0, δ = √(d/n), Σ E|ξ|² = d the two terms are sandwiched:
        // n^{-1/8} + (d/n)^{1/6} ≤ bound ≤ (2^{1/8} + 2^{1/3}) (…).
        for n in [16usize, 256, 10_000] {
            for d in [1usize, 2, n / 4, n / 2, n] {
                let delta = (d as f64 / n as f64).sqrt();
                let r = rhs_mdep(n, 0, delta, d as f64, d).unwrap() / rhs_cor3(n, d);
                assert!((1.0 - 1e-12..=2.5).contains(&r), "n={n} d={d} ratio {r}");
            }
        }
    }

    #[test]
    fn plug_in_examples() {
        let data = Dataset::new(2, 1, vec![1.0, -1.0], ScaleConvention::XOverSqrtN).unwrap();
        assert_eq!(centred_covariance(&data).unwrap(), SymMatrix::identity(1));
        let single = Dataset::new(1, 1, vec![1.0], ScaleConvention::XOverSqrtN).unwrap();
        assert!(matches!(centred_covariance(&single), Err(Error::Degenerate(_))));
        let zeros = Dataset::new(3, 2, vec![0.0; 6], ScaleConvention::RawXi).unwrap();
        let m = estimate_moments(&zeros).unwrap();
        assert_eq!((m.sum2, m.sum3, m.sum4), (0.0, 0.0, 0.0));
        assert!(m.coord_fourth.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn plug_in_gaussian_coord_fourth() {
        let (n, d) = (100_000usize, 3usize);
        let data = crate::dgp::sample(&DgpSpec::iid(n, d, Marginal::Gaussian), 5).unwrap();
        let m = estimate_moments(&data).unwrap();
        // n^{-2} Σ X⁴ has mean 3/n and standard deviation √96/n^{3/2}.
        let sd_sq = 96f64.sqrt() / (n as f64).powf(1.5);
        let target = 3.0 / n as f64;
        for &c in &m.coord_fourth {
            assert!((c * c - target).abs() < 3.0 * sd_sq, "{} vs {target}", c * c);
        }
    }

    #[test]
    fn analytic_gaussian_third_moment() {
        // E|G|³ = 2√(2/π) for d = 1, 3√(π/2) for d = 2.
        assert!((gaussian_norm_third(1) - 2.0 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-13);
        assert!((gaussian_norm_third(2) - 3.0 * (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn analytic_nagaev_moments() {
        let spec = DgpSpec::nagaev(10_000, 4).unwrap();
        let m = analytic_moments(&spec).unwrap();
        let np = spec.nagaev_params.unwrap();
        let eta4 = np.fourth_moment();
        assert!((m.sum4 - (eta4 + 2.0 * 3.0 + 3.0 * 5.0) / 1e4).abs() < 1e-15);
        assert!(m.sum3 <= (m.sum2 * m.sum4).sqrt());
        // The atom dominates the third moment once n is large; compare with
        // the χ²_d value for a sanity band.
        let gauss = gaussian_norm_third(4) / 100.0;
        assert!(m.sum3 > 0.8 * gauss && m.sum3 < 2.0 * gauss, "{} vs {gauss}", m.sum3);
        assert!((shifted_chi2_three_halves(0.0, 3) - gaussian_norm_third(3)).abs() < 1e-9);
        assert!((shifted_chi2_three_halves(0.0, 1) - gaussian_norm_third(1)).abs() < 1e-9);
    }

    #[test]
    fn report_serializes_with_frozen_keys() {
        let n = 200;
        let data = crate::dgp::sample(&DgpSpec::iid(n, 3, Marginal::Gaussian), 1).unwrap();
        let sigma = SymMatrix::identity(3);
        let m = estimate_moments(&data).unwrap();
        let w = estimate_whitened_moments(&data, &sigma).unwrap();
        let c = estimate_cov_info(&data, &sigma).unwrap();
        let r = bound_report(&m, Some(&w), &c, 0).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in [
            "deltaA",
            "deltaB",
            "delta0",
            "delta0p",
            "delta1",
            "delta2",
            "rhsConvex",
            "rhsBall",
            "rhsBall2",
            "rhsCor3",
            "rhsMdep",
            "deltaStar",
            "deltaCirc",
            "constantsNote",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v["deltaStar"].as_f64().unwrap() > 0.0);
    }
}
