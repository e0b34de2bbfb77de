//! Data-generating processes for `W = Σ_i ξ_i`.
//!
//! Every process is standardized so that `Var(W) = I_d`:
//!
//! * `iid-marginal`: `ξ_i = X_i/√n`, coordinates i.i.d. from a
//!   standardized marginal.
//! * `multiplier`: `ξ_i = e_i X_i/√n` with `X_i` coordinates drawn from
//!   `marginal` and an independent multiplier `e_i`.
//! * `nagaev`: first coordinate of `X_i` is the two-piece mixture `η`
//!   (an atom at `x_n` with probability `p_n`, else `σ_n G − a_n`), the
//!   rest standard Gaussian.
//! * `ma-mdep`: `ξ_i = n^{-1/2} Σ_{k=0}^m ζ_{i+k}` with i.i.d. standardized
//!   innovations, rescaled by the exact `Var(W)^{-1/2}`.
//!
//! Datasets are generated row by row, row `i` from stream `i` (innovation
//! `t` from stream `t` for moving averages), so `ma-mdep` with `m = 0`
//! reproduces `iid-marginal` exactly. For Monte Carlo work,
//! [`WSampler`] draws `W` directly from its exact law where a closed
//! form exists, which avoids summing `n` rows per replicate.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Provenance, ScaleConvention};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DgpKind {
    IidMarginal,
    Nagaev,
    Multiplier,
    MaMdep,
}

/// Standardized (mean 0, variance 1) coordinate laws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Marginal {
    Gaussian,
    Rademacher,
    /// Uniform on `[-√3, √3]`.
    UniformStd,
    /// `Exp(1) − 1`.
    ExpStd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiplierDist {
    Gaussian,
    Rademacher,
    /// Two-point law on `(1 ∓ √5)/2` with probabilities `(5 ± √5)/10`.
    Mammen,
}

impl Marginal {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian => rng.sample(StandardNormal),
            Self::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::UniformStd => 3f64.sqrt() * rng.random_range(-1.0..1.0),
            Self::ExpStd => {
                let e: f64 = rng.sample(Exp1);
                e - 1.0
            }
        }
    }

    /// `E X⁴` of one coordinate.
    pub fn fourth_moment(self) -> f64 {
        match self {
            Self::Gaussian => 3.0,
            Self::Rademacher => 1.0,
            Self::UniformStd => 1.8,
            Self::ExpStd => 9.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Rademacher => "rademacher",
            Self::UniformStd => "uniform-std",
            Self::ExpStd => "exp-std",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "gaussian" => Self::Gaussian,
            "rademacher" => Self::Rademacher,
            "uniform-std" => Self::UniformStd,
            "exp-std" => Self::ExpStd,
            _ => return Err(Error::Parse(format!("unknown marginal `{s}`"))),
        })
    }
}

const MAMMEN_LOW: f64 = -0.618_033_988_749_894_9;
const MAMMEN_HIGH: f64 = 1.618_033_988_749_895;
const MAMMEN_P_LOW: f64 = 0.723_606_797_749_979;

impl MultiplierDist {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian => rng.sample(StandardNormal),
            Self::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::Mammen => {
                if rng.random::<f64>() < MAMMEN_P_LOW {
                    MAMMEN_LOW
                } else {
                    MAMMEN_HIGH
                }
            }
        }
    }

    /// `Var(e²) = E e⁴ − 1`.
    pub fn var_e_sq(self) -> f64 {
        match self {
            Self::Gaussian => 2.0,
            Self::Rademacher => 0.0,
            Self::Mammen => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Rademacher => "rademacher",
            Self::Mammen => "mammen",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "gaussian" => Self::Gaussian,
            "rademacher" => Self::Rademacher,
            "mammen" => Self::Mammen,
            _ => return Err(Error::Parse(format!("unknown multiplier `{s}`"))),
        })
    }
}

impl DgpKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::IidMarginal => "iid-marginal",
            Self::Nagaev => "nagaev",
            Self::Multiplier => "multiplier",
            Self::MaMdep => "ma-mdep",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "iid-marginal" => Self::IidMarginal,
            "nagaev" => Self::Nagaev,
            "multiplier" => Self::Multiplier,
            "ma-mdep" => Self::MaMdep,
            _ => return Err(Error::Parse(format!("unknown dgp kind `{s}`"))),
        })
    }
}

/// Parameters `(x_n, p_n, a_n, σ_n)` of the two-piece law `η`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NagaevParams {
    pub x: f64,
    pub p: f64,
    pub a: f64,
    pub sigma: f64,
}

impl NagaevParams {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if rng.random::<f64>() < self.p {
            self.x
        } else {
            let g: f64 = rng.sample(StandardNormal);
            self.sigma * g - self.a
        }
    }

    /// `E η⁴`.
    pub fn fourth_moment(&self) -> f64 {
        let (a2, s2) = (self.a * self.a, self.sigma * self.sigma);
        self.p * self.x.powi(4) + (1.0 - self.p) * (a2 * a2 + 6.0 * a2 * s2 + 3.0 * s2 * s2)
    }
}

/// Solves `x_n = √n/ln n`, `p_n x_n² = ½`, `p_n x_n = a_n(1 − p_n)` and
/// `½ + (σ_n² + a_n²)(1 − p_n) = 1`.
pub fn nagaev_params(n: usize) -> Result<NagaevParams> {
    if n < 3 {
        return Err(Error::Domain(format!("nagaev construction needs n >= 3, got {n}")));
    }
    let nf = n as f64;
    let x = nf.sqrt() / nf.ln();
    let p = 0.5 / (x * x);
    if p >= 1.0 {
        return Err(Error::Domain(format!("n = {n} too small for the nagaev construction")));
    }
    let a = p * x / (1.0 - p);
    let s2 = 0.5 / (1.0 - p) - a * a;
    if !(s2 > 0.0) {
        return Err(Error::Domain(format!("n = {n} too small: sigma_n^2 = {s2:e}")));
    }
    Ok(NagaevParams { x, p, a, sigma: s2.sqrt() })
}

/// Specification of a data-generating process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub n: usize,
    pub d: usize,
    pub marginal: Marginal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier_dist: Option<MultiplierDist>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var_e_sq: Option<f64>,
    #[serde(default)]
    pub ma_order: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nagaev_params: Option<NagaevParams>,
}

impl DgpSpec {
    pub fn iid(n: usize, d: usize, marginal: Marginal) -> Self {
        Self {
            kind: DgpKind::IidMarginal,
            n,
            d,
            marginal,
            multiplier_dist: None,
            var_e_sq: None,
            ma_order: 0,
            nagaev_params: None,
        }
    }

    pub fn multiplier(n: usize, d: usize, marginal: Marginal, e: MultiplierDist) -> Self {
        Self {
            kind: DgpKind::Multiplier,
            multiplier_dist: Some(e),
            var_e_sq: Some(e.var_e_sq()),
            ..Self::iid(n, d, marginal)
        }
    }

    pub fn nagaev(n: usize, d: usize) -> Result<Self> {
        Ok(Self {
            kind: DgpKind::Nagaev,
            nagaev_params: Some(nagaev_params(n)?),
            ..Self::iid(n, d, Marginal::Gaussian)
        })
    }

    pub fn ma(n: usize, d: usize, marginal: Marginal, m: usize) -> Self {
        Self { kind: DgpKind::MaMdep, ma_order: m, ..Self::iid(n, d, marginal) }
    }

    /// Checks the combination of fields and fills derived caches.
    pub fn validated(mut self) -> Result<Self> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::Contract(format!("n and d must be positive, got n={} d={}", self.n, self.d)));
        }
        match self.kind {
            DgpKind::Multiplier => {
                let e = self
                    .multiplier_dist
                    .ok_or_else(|| Error::Contract("multiplier dgp requires a multiplier distribution".into()))?;
                match self.var_e_sq {
                    None => self.var_e_sq = Some(e.var_e_sq()),
                    Some(v) if (v - e.var_e_sq()).abs() > 1e-12 => {
                        return Err(Error::Contract(format!(
                            "Var(e^2) = {v} is inconsistent with the {} multiplier ({})",
                            e.name(),
                            e.var_e_sq()
                        )))
                    }
                    Some(_) => {}
                }
            }
            DgpKind::Nagaev => {
                let fresh = nagaev_params(self.n)?;
                if let Some(cached) = self.nagaev_params {
                    if cached != fresh {
                        return Err(Error::Contract("cached nagaev parameters do not match n".into()));
                    }
                }
                self.nagaev_params = Some(fresh);
            }
            DgpKind::MaMdep => {
                if self.ma_order >= self.n {
                    return Err(Error::Contract(format!(
                        "moving-average order {} must be below n = {}",
                        self.ma_order, self.n
                    )));
                }
            }
            DgpKind::IidMarginal => {}
        }
        if self.kind != DgpKind::Multiplier && self.multiplier_dist.is_some() {
            return Err(Error::Contract(format!("{} dgp takes no multiplier", self.kind.name())));
        }
        if self.kind != DgpKind::MaMdep && self.ma_order != 0 {
            return Err(Error::Contract(format!("{} dgp takes no moving-average order", self.kind.name())));
        }
        Ok(self)
    }

    /// `Σ_t mult_t²/n`, the variance of each coordinate of the unwhitened
    /// moving-average sum, where `mult_t` counts the windows covering
    /// innovation `t`.
    pub fn ma_raw_variance(&self) -> f64 {
        let (n, m) = (self.n, self.ma_order);
        let total: f64 = (0..n + m).map(|t| ma_multiplicity(n, m, t).powi(2)).sum();
        total / n as f64
    }
}

fn ma_multiplicity(n: usize, m: usize, t: usize) -> f64 {
    // Windows i ∈ [0, n) with i ≤ t ≤ i + m.
    let lo = t.saturating_sub(m);
    let hi = t.min(n - 1);
    (hi + 1 - lo) as f64
}

/// Draws the `n×d` dataset of summands `ξ_i` (tagged `raw-xi`).
pub fn sample(spec: &DgpSpec, seed: u64) -> Result<Dataset> {
    let spec = spec.clone().validated()?;
    let (n, d) = (spec.n, spec.d);
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let mut values = vec![0.0; n * d];
    match spec.kind {
        DgpKind::IidMarginal => {
            for (i, row) in values.chunks_exact_mut(d).enumerate() {
                let mut rng = stream(seed, i as u64);
                for v in row.iter_mut() {
                    *v = spec.marginal.sample(&mut rng) * inv_sqrt_n;
                }
            }
        }
        DgpKind::Multiplier => {
            let e_dist = spec.multiplier_dist.expect("validated");
            for (i, row) in values.chunks_exact_mut(d).enumerate() {
                let mut rng = stream(seed, i as u64);
                let e = e_dist.sample(&mut rng);
                for v in row.iter_mut() {
                    *v = e * spec.marginal.sample(&mut rng) * inv_sqrt_n;
                }
            }
        }
        DgpKind::Nagaev => {
            let np = spec.nagaev_params.expect("validated");
            for (i, row) in values.chunks_exact_mut(d).enumerate() {
                let mut rng = stream(seed, i as u64);
                row[0] = np.sample(&mut rng) * inv_sqrt_n;
                for v in row[1..].iter_mut() {
                    let g: f64 = rng.sample(StandardNormal);
                    *v = g * inv_sqrt_n;
                }
            }
        }
        DgpKind::MaMdep => {
            let m = spec.ma_order;
            let mut innovations = vec![0.0; (n + m) * d];
            for (t, row) in innovations.chunks_exact_mut(d).enumerate() {
                let mut rng = stream(seed, t as u64);
                for v in row.iter_mut() {
                    *v = spec.marginal.sample(&mut rng);
                }
            }
            let white = 1.0 / spec.ma_raw_variance().sqrt();
            for (i, row) in values.chunks_exact_mut(d).enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for k in 0..=m {
                        s += innovations[(i + k) * d + j];
                    }
                    // Var(W) = c·I, so whitening is a scalar map.
                    *v = s * inv_sqrt_n * white;
                }
            }
        }
    }
    Ok(Dataset::new(n, d, values, ScaleConvention::RawXi)?.with_provenance(Provenance { dgp: spec, seed }))
}

/// Number of dyadic levels drawn exactly in the standardized-uniform sum;
/// the remainder carries a `4^{-K}` share of the variance.
pub const UNIFORM_DYADIC_LEVELS: u32 = 10;

/// Draws `W` from its law under a [`DgpSpec`].
///
/// Exact in law for `iid-marginal` with Gaussian, Rademacher or
/// standardized-exponential coordinates (`W_j` from normal, binomial and
/// gamma sums), for `nagaev` (binomial count of atoms) and for
/// `multiplier` with Gaussian coordinates (`W | e ~ N(0, mean(e²)·I)`).
/// For standardized-uniform coordinates the first
/// [`UNIFORM_DYADIC_LEVELS`] binary digits of the `n` uniforms are summed
/// exactly and the remaining digits, a `4^{-K}` share of the variance,
/// by their moment-matched Gaussian. Other cases sum rows directly.
#[derive(Clone, Debug)]
pub struct WSampler {
    spec: DgpSpec,
    binomial_half: Option<Binomial>,
    gamma_n: Option<Gamma<f64>>,
    nagaev_count: Option<Binomial>,
    ma_white: f64,
}

impl WSampler {
    pub fn new(spec: &DgpSpec) -> Result<Self> {
        let spec = spec.clone().validated()?;
        let n = spec.n as u64;
        let needs_binomial =
            matches!((spec.kind, spec.marginal), (DgpKind::IidMarginal, Marginal::Rademacher | Marginal::UniformStd));
        let binomial_half =
            if needs_binomial { Some(Binomial::new(n, 0.5).map_err(|e| Error::Domain(e.to_string()))?) } else { None };
        let gamma_n = if spec.kind == DgpKind::IidMarginal && spec.marginal == Marginal::ExpStd {
            Some(Gamma::new(spec.n as f64, 1.0).map_err(|e| Error::Domain(e.to_string()))?)
        } else {
            None
        };
        let nagaev_count = match spec.nagaev_params {
            Some(np) => Some(Binomial::new(n, np.p).map_err(|e| Error::Domain(e.to_string()))?),
            None => None,
        };
        let ma_white = if spec.kind == DgpKind::MaMdep { 1.0 / spec.ma_raw_variance().sqrt() } else { 1.0 };
        Ok(Self { spec, binomial_half, gamma_n, nagaev_count, ma_white })
    }

    pub fn spec(&self) -> &DgpSpec {
        &self.spec
    }

    pub fn d(&self) -> usize {
        self.spec.d
    }

    /// Fills `w` (length `d`) with one draw of `W`.
    pub fn sample_into(&self, rng: &mut StreamRng, w: &mut [f64]) {
        let (n, d) = (self.spec.n, self.spec.d);
        debug_assert_eq!(w.len(), d);
        let nf = n as f64;
        let inv_sqrt_n = 1.0 / nf.sqrt();
        match (self.spec.kind, self.spec.marginal) {
            (DgpKind::IidMarginal, Marginal::Gaussian) | (DgpKind::MaMdep, Marginal::Gaussian) => {
                for v in w.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
            (DgpKind::IidMarginal, Marginal::Rademacher) => {
                let b = self.binomial_half.as_ref().expect("binomial");
                for v in w.iter_mut() {
                    let k = b.sample(rng) as f64;
                    *v = (2.0 * k - nf) * inv_sqrt_n;
                }
            }
            (DgpKind::IidMarginal, Marginal::ExpStd) => {
                let g = self.gamma_n.as_ref().expect("gamma");
                for v in w.iter_mut() {
                    *v = (g.sample(rng) - nf) * inv_sqrt_n;
                }
            }
            (DgpKind::IidMarginal, Marginal::UniformStd) => {
                let b = self.binomial_half.as_ref().expect("binomial");
                let tail_scale = 0.5f64.powi(UNIFORM_DYADIC_LEVELS as i32);
                let tail_sd = tail_scale * (nf / 12.0).sqrt();
                for v in w.iter_mut() {
                    // Σ U_i = Σ_k 2^{-k} Bin(n, ½) + 2^{-K} Σ U'_i.
                    let mut s = 0.0;
                    let mut scale = 0.5;
                    for _ in 0..UNIFORM_DYADIC_LEVELS {
                        s += scale * b.sample(rng) as f64;
                        scale *= 0.5;
                    }
                    let g: f64 = rng.sample(StandardNormal);
                    s += tail_scale * 0.5 * nf + tail_sd * g;
                    // U(-√3, √3) = √3(2U − 1).
                    *v = 3f64.sqrt() * (2.0 * s - nf) * inv_sqrt_n;
                }
            }
            (DgpKind::Nagaev, _) => {
                let np = self.spec.nagaev_params.expect("validated");
                let k = self.nagaev_count.as_ref().expect("binomial").sample(rng) as f64;
                let g: f64 = rng.sample(StandardNormal);
                w[0] = (k * np.x - (nf - k) * np.a + np.sigma * (nf - k).sqrt() * g) * inv_sqrt_n;
                for v in w[1..].iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
            (DgpKind::Multiplier, Marginal::Gaussian) => {
                let e = self.spec.multiplier_dist.expect("validated");
                let mut sq = 0.0;
                for _ in 0..n {
                    let x = e.sample(rng);
                    sq += x * x;
                }
                let scale = (sq / nf).sqrt();
                for v in w.iter_mut() {
                    let g: f64 = rng.sample(StandardNormal);
                    *v = scale * g;
                }
            }
            (DgpKind::Multiplier, marginal) => {
                let e = self.spec.multiplier_dist.expect("validated");
                w.fill(0.0);
                for _ in 0..n {
                    let ei = e.sample(rng);
                    for v in w.iter_mut() {
                        *v += ei * marginal.sample(rng);
                    }
                }
                w.iter_mut().for_each(|v| *v *= inv_sqrt_n);
            }
            (DgpKind::MaMdep, marginal) => {
                let m = self.spec.ma_order;
                w.fill(0.0);
                for t in 0..n + m {
                    let c = ma_multiplicity(n, m, t);
                    for v in w.iter_mut() {
                        *v += c * marginal.sample(rng);
                    }
                }
                w.iter_mut().for_each(|v| *v *= inv_sqrt_n * self.ma_white);
            }
        }
    }

    /// One draw of `|W|²`, reusing `buf` as scratch.
    pub fn sample_norm_sq(&self, rng: &mut StreamRng, buf: &mut [f64]) -> f64 {
        self.sample_into(rng, buf);
        buf.iter().map(|v| v * v).sum()
    }
}

/// `W = Σ ξ_i` computed by generating and summing the full dataset.
pub fn direct_w(spec: &DgpSpec, seed: u64) -> Result<Vec<f64>> {
    Ok(sample(spec, seed)?.sum())
}

/// Coupled draws of `(|W|², |Z|²)` for i.i.d. Rademacher coordinates.
///
/// Each coordinate `W_j = (2B − n)/√n` is the binomial quantile transform
/// of the same standard normal `Z_j`, so `W` has its exact law while the
/// pair is strongly positively dependent.
#[derive(Clone, Debug)]
pub struct RademacherCoupling {
    n: usize,
    d: usize,
    /// `Φ^{-1}(P(B ≤ k))` for `k < n/2`; the upper half follows by symmetry.
    thresholds: Vec<f64>,
}

impl RademacherCoupling {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Contract("coupling needs positive n and d".into()));
        }
        let half = n.div_ceil(2);
        let mut thresholds = Vec::with_capacity(half);
        // Accumulate binomial(n, ½) masses in log space.
        let ln_norm = crate::special::ln_gamma(n as f64 + 1.0) - n as f64 * std::f64::consts::LN_2;
        let mut cdf = 0.0;
        for k in 0..half {
            let ln_pk =
                ln_norm - crate::special::ln_gamma(k as f64 + 1.0) - crate::special::ln_gamma((n - k) as f64 + 1.0);
            cdf += ln_pk.exp();
            thresholds.push(crate::special::normal_quantile(cdf.min(0.5)));
        }
        Ok(Self { n, d, thresholds })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Binomial count `B = F_B^{-1}(Φ(z))`.
    fn count(&self, z: f64) -> usize {
        if z <= 0.0 {
            // Smallest k with z ≤ t_k.
            self.thresholds.partition_point(|&t| t < z)
        } else {
            // Mirror: B(z) = n − B(−z) for continuous z.
            self.n - self.thresholds.partition_point(|&t| t < -z)
        }
    }

    /// Returns `(|W|², |Z|²)` for one coupled replicate.
    pub fn sample_pair(&self, rng: &mut StreamRng) -> (f64, f64) {
        let nf = self.n as f64;
        let mut w2 = 0.0;
        let mut z2 = 0.0;
        for _ in 0..self.d {
            let z: f64 = rng.sample(StandardNormal);
            let w = (2.0 * self.count(z) as f64 - nf) / nf.sqrt();
            w2 += w * w;
            z2 += z * z;
        }
        (w2, z2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nagaev_params_satisfy_constraints() {
        // Independent solve of the four constraints at n = 10⁴.
        let np = nagaev_params(10_000).unwrap();
        assert!((np.x - 10.857_362_047_581_296).abs() < 1e-12);
        assert!((np.p - 0.004_241_518_488_382_718_5).abs() < 1e-15);
        assert!((np.a - 0.046_247_863_025_953_69).abs() < 1e-14);
        assert!((np.sigma - 0.707_100_366_260_165_7).abs() < 1e-12);
        for n in [3usize, 10, 100, 10_000, 1_000_000] {
            let np = nagaev_params(n).unwrap();
            let nf = n as f64;
            assert!((np.x - nf.sqrt() / nf.ln()).abs() <= 1e-12 * np.x);
            assert!((np.p * np.x - np.a * (1.0 - np.p)).abs() < 1e-12);
            assert!((np.p * np.x * np.x - 0.5).abs() < 1e-12);
            assert!((0.5 + (np.sigma.powi(2) + np.a.powi(2)) * (1.0 - np.p) - 1.0).abs() < 1e-12);
        }
        assert!(nagaev_params(2).is_err());
    }

    #[test]
    fn mammen_moments() {
        let p_high = 1.0 - MAMMEN_P_LOW;
        let m = |k: i32| MAMMEN_P_LOW * MAMMEN_LOW.powi(k) + p_high * MAMMEN_HIGH.powi(k);
        assert!(m(1).abs() < 1e-15);
        assert!((m(2) - 1.0).abs() < 1e-15);
        assert!((m(4) - 1.0 - MultiplierDist::Mammen.var_e_sq()).abs() < 1e-14);
        assert!((MAMMEN_P_LOW - (5.0 + 5f64.sqrt()) / 10.0).abs() < 1e-15);
    }

    #[test]
    fn ma_zero_matches_iid() {
        for marginal in [Marginal::Gaussian, Marginal::ExpStd] {
            let a = sample(&DgpSpec::iid(50, 3, marginal), 9).unwrap();
            let b = sample(&DgpSpec::ma(50, 3, marginal, 0), 9).unwrap();
            assert_eq!(a.as_slice(), b.as_slice());
        }
    }

    #[test]
    fn ma_variance_is_whitened() {
        let spec = DgpSpec::ma(10, 1, Marginal::Gaussian, 2);
        // Multiplicities 1,2,3,…,3,2,1 over 12 innovations.
        let raw: f64 =
            [1.0f64, 2.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 2.0, 1.0].iter().map(|c| c * c).sum::<f64>() / 10.0;
        assert!((spec.ma_raw_variance() - raw).abs() < 1e-14);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(DgpSpec::ma(5, 2, Marginal::Gaussian, 5).validated().is_err());
        let mut s = DgpSpec::multiplier(5, 2, Marginal::Gaussian, MultiplierDist::Gaussian);
        s.var_e_sq = Some(0.5);
        assert!(s.validated().is_err());
        let mut s = DgpSpec::iid(5, 2, Marginal::Gaussian);
        s.multiplier_dist = Some(MultiplierDist::Rademacher);
        assert!(s.validated().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = DgpSpec::nagaev(100, 4).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"kind\":\"nagaev\""));
        let back: DgpSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn coupling_counts_follow_binomial_quantiles() {
        let c = RademacherCoupling::new(4, 1).unwrap();
        // P(B ≤ 0) = 1/16, P(B ≤ 1) = 5/16.
        assert!((c.thresholds[0] - crate::special::normal_quantile(1.0 / 16.0)).abs() < 1e-12);
        assert!((c.thresholds[1] - crate::special::normal_quantile(5.0 / 16.0)).abs() < 1e-12);
        assert_eq!(c.count(-3.0), 0);
        assert_eq!(c.count(-1.0), 1);
        assert_eq!(c.count(-0.1), 2);
        assert_eq!(c.count(0.1), 2);
        assert_eq!(c.count(1.0), 3);
        assert_eq!(c.count(3.0), 4);
    }
}
