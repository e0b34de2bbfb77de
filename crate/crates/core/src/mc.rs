//! Monte Carlo estimation of Kolmogorov distances and the deterministic
//! replication harness.

use rayon::prelude::*;
use serde::Serialize;

use crate::dgp::{DgpSpec, RademacherCoupling, WSampler};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};
use crate::special::{chi2_cdf, normal_cdf};

/// 95% quantile of the Kolmogorov null distribution, `√M·D`.
pub const KS_NULL_95: f64 = 1.36;
/// 99% quantile of the Kolmogorov null distribution, `√M·D`.
pub const KS_NULL_99: f64 = 1.63;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceFamily {
    CenteredBalls,
    HalfSpace,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DistanceEstimate {
    pub value: f64,
    pub family: DistanceFamily,
    pub mc_samples: usize,
    /// For one-sample statistics the 95% Kolmogorov null band `1.36/√M`;
    /// for coupled estimates the binomial standard error of the
    /// discordance at the maximizing radius.
    pub stderr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dgp: Option<DgpSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `P̂(W·u < 0) − ½` for half-space estimates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_at_zero: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_stderr: Option<f64>,
}

impl DistanceEstimate {
    pub fn with_origin(mut self, dgp: &DgpSpec, seed: u64) -> Self {
        self.dgp = Some(dgp.clone());
        self.seed = Some(seed);
        self
    }
}

/// Evaluates `f(r, rng_r)` for `r = 0..count` with `rng_r = stream(seed, r)`
/// on `workers` threads. The output is ordered by `r` and identical for
/// every worker count.
pub fn run_replicated<T, F>(count: usize, workers: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &mut StreamRng) -> T + Sync,
{
    run_replicated_with(count, workers, seed, || (), |_, r, rng| f(r, rng))
}

/// As [`run_replicated`], with per-thread scratch state from `init`.
pub fn run_replicated_with<T, S, I, F>(count: usize, workers: usize, seed: u64, init: I, f: F) -> Result<Vec<T>>
where
    T: Send,
    I: Fn() -> S + Sync,
    F: Fn(&mut S, u64, &mut StreamRng) -> T + Sync,
{
    if workers == 0 {
        return Err(Error::Domain("workers must be at least 1".into()));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let job =
        || (0..count as u64).into_par_iter().map_init(&init, |state, r| f(state, r, &mut stream(seed, r))).collect();
    if workers == 1 {
        let mut state = init();
        return Ok((0..count as u64).map(|r| f(&mut state, r, &mut stream(seed, r))).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Domain(format!("cannot start {workers} worker threads: {e}")))?;
    Ok(pool.install(job))
}

fn sort_checked(samples: &mut [f64]) -> Result<()> {
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::Data("NaN among Monte Carlo samples".into()));
    }
    samples.sort_unstable_by(f64::total_cmp);
    Ok(())
}

/// One-sample Kolmogorov statistic
/// `max_i max(i/M − F(t_(i)), F(t_(i)) − (i−1)/M)`; sorts `samples`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Data("no samples".into()));
    }
    sort_checked(samples)?;
    let m = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &t) in samples.iter().enumerate() {
        let f = cdf(t);
        d = d.max((i + 1) as f64 / m - f).max(f - i as f64 / m);
    }
    Ok(d.clamp(0.0, 1.0))
}

/// Kolmogorov distance between the law of `|W|²` (given by samples) and
/// the squared-norm distribution function `cdf`.
pub fn ks_ball_distance(mut samples: Vec<f64>, cdf: impl Fn(f64) -> f64) -> Result<DistanceEstimate> {
    let value = ks_statistic(&mut samples, cdf)?;
    let m = samples.len();
    Ok(DistanceEstimate {
        value,
        family: DistanceFamily::CenteredBalls,
        mc_samples: m,
        stderr: KS_NULL_95 / (m as f64).sqrt(),
        dgp: None,
        seed: None,
        gap_at_zero: None,
        gap_stderr: None,
    })
}

/// Percentile interval for the Kolmogorov statistic from `b` resamples of
/// the Monte Carlo draws; useful when the true distance is positive and
/// the null band says little.
pub fn ks_bootstrap_interval(
    samples: &[f64],
    cdf: impl Fn(f64) -> f64 + Sync,
    b: usize,
    level: f64,
    seed: u64,
    workers: usize,
) -> Result<(f64, f64)> {
    if b == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain("need b >= 1 and level in (0, 1)".into()));
    }
    let m = samples.len();
    let mut stats = run_replicated(b, workers, seed, |_, rng| {
        use rand::Rng;
        let mut draw: Vec<f64> = (0..m).map(|_| samples[rng.random_range(0..m)]).collect();
        ks_statistic(&mut draw, &cdf)
    })?
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    stats.sort_unstable_by(f64::total_cmp);
    let lo = ((1.0 - level) / 2.0 * b as f64).floor() as usize;
    let hi = (((1.0 + level) / 2.0 * b as f64).ceil() as usize).clamp(1, b) - 1;
    Ok((stats[lo.min(b - 1)], stats[hi]))
}

/// `M` draws of `|W|²`, replicate `r` from `stream(seed, r)`.
pub fn norm_sq_samples(sampler: &WSampler, m: usize, workers: usize, seed: u64) -> Result<Vec<f64>> {
    let d = sampler.d();
    run_replicated_with(m, workers, seed, || vec![0.0; d], |buf, _, rng| sampler.sample_norm_sq(rng, buf))
}

/// `M` draws of `W·u`.
pub fn projection_samples(
    sampler: &WSampler,
    direction: &[f64],
    m: usize,
    workers: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let d = sampler.d();
    if direction.len() != d {
        return Err(Error::Contract(format!("direction has length {}, expected {d}", direction.len())));
    }
    let norm: f64 = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::Contract(format!("direction must be a unit vector, |u| = {norm}")));
    }
    run_replicated_with(
        m,
        workers,
        seed,
        || vec![0.0; d],
        |buf, _, rng| {
            sampler.sample_into(rng, buf);
            buf.iter().zip(direction).map(|(a, b)| a * b).sum()
        },
    )
}

/// Ball distance of a standardized process (`Var(W) = I_d`) to
/// `N(0, I_d)`, from `M` direct draws of `W`.
pub fn ball_distance(spec: &DgpSpec, m: usize, workers: usize, seed: u64) -> Result<DistanceEstimate> {
    let sampler = WSampler::new(spec)?;
    let d = spec.d;
    let samples = norm_sq_samples(&sampler, m, workers, seed)?;
    Ok(ks_ball_distance(samples, |t| chi2_cdf(d, t))?.with_origin(sampler.spec(), seed))
}

/// Half-space statistic `sup_t |P̂(W·u ≤ t) − Φ(t/σ)|` together with the
/// signed gap at `t = 0`.
pub fn halfspace_distance(mut projections: Vec<f64>, sigma_dir: f64) -> Result<DistanceEstimate> {
    if !(sigma_dir > 0.0) {
        return Err(Error::Domain(format!("direction scale must be positive, got {sigma_dir}")));
    }
    let m = projections.len();
    let value = ks_statistic(&mut projections, |t| normal_cdf(t / sigma_dir))?;
    let below = projections.partition_point(|&v| v < 0.0) as f64 / m as f64;
    let mf = m as f64;
    Ok(DistanceEstimate {
        value,
        family: DistanceFamily::HalfSpace,
        mc_samples: m,
        stderr: KS_NULL_95 / mf.sqrt(),
        dgp: None,
        seed: None,
        gap_at_zero: Some(below - 0.5),
        gap_stderr: Some((below * (1.0 - below) / mf).sqrt()),
    })
}

/// Half-space estimate along `direction` for a standardized process.
pub fn halfspace_mc(
    spec: &DgpSpec,
    direction: &[f64],
    m: usize,
    workers: usize,
    seed: u64,
) -> Result<DistanceEstimate> {
    let sampler = WSampler::new(spec)?;
    let proj = projection_samples(&sampler, direction, m, workers, seed)?;
    Ok(halfspace_distance(proj, 1.0)?.with_origin(sampler.spec(), seed))
}

/// `sup_r |F̂_W(r) − F̂_Z(r)|` for paired samples `(|W|², |Z|²)`, with the
/// fraction of discordant pairs at the maximizing radius.
pub fn paired_sup_distance(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::Data("no samples".into()));
    }
    let mut events: Vec<(f64, i8)> = Vec::with_capacity(2 * pairs.len());
    for &(w, z) in pairs {
        if w.is_nan() || z.is_nan() {
            return Err(Error::Data("NaN among Monte Carlo samples".into()));
        }
        events.push((w, 1));
        events.push((z, -1));
    }
    events.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let m = pairs.len() as f64;
    let mut diff: i64 = 0;
    let mut best = (0i64, f64::NEG_INFINITY);
    let mut i = 0;
    while i < events.len() {
        let t = events[i].0;
        while i < events.len() && events[i].0 == t {
            diff += events[i].1 as i64;
            i += 1;
        }
        if diff.abs() > best.0.abs() {
            best = (diff, t);
        }
    }
    let r = best.1;
    let discordant =
        if r.is_finite() { pairs.iter().filter(|&&(w, z)| (w <= r) != (z <= r)).count() as f64 / m } else { 0.0 };
    Ok((best.0.unsigned_abs() as f64 / m, discordant))
}

/// Ball distance for i.i.d. Rademacher coordinates from `M` coupled
/// replicates sharing Gaussian draws with their `Z` counterpart.
pub fn coupled_ball_distance(
    coupling: &RademacherCoupling,
    m: usize,
    workers: usize,
    seed: u64,
) -> Result<DistanceEstimate> {
    let pairs = run_replicated(m, workers, seed, |_, rng| coupling.sample_pair(rng))?;
    let (value, discordant) = paired_sup_distance(&pairs)?;
    let spec = DgpSpec::iid(coupling.n(), coupling.d(), crate::dgp::Marginal::Rademacher);
    Ok(DistanceEstimate {
        value,
        family: DistanceFamily::CenteredBalls,
        mc_samples: m,
        stderr: (discordant / m as f64).sqrt(),
        dgp: Some(spec),
        seed: Some(seed),
        gap_at_zero: None,
        gap_stderr: None,
    })
}
