//! Efron's empirical bootstrap and the wild (multiplier) bootstrap for
//! `|W|`, their quantile rule and coverage experiments.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{centred_covariance, summand_gram};
use crate::dataset::Dataset;
use crate::dgp::{sample, DgpSpec, MultiplierDist};
use crate::error::{Error, Result};
use crate::mc::run_replicated;
use crate::rng::derive_seed;
use crate::spectral::{sym_eigen, SymMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BootstrapKind {
    Efron,
    Wild,
}

impl BootstrapKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Efron => "efron",
            Self::Wild => "wild",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "efron" => Ok(Self::Efron),
            "wild" => Ok(Self::Wild),
            _ => Err(Error::Parse(format!("unknown bootstrap kind `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BootstrapRun {
    pub kind: BootstrapKind,
    pub b: usize,
    pub alpha: f64,
    pub stat_values: Vec<f64>,
    pub quantile: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<MultiplierDist>,
    pub seed: u64,
}

/// Raw observations `X_i` (row-major) and their mean.
fn raw_rows(x: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let raw = x.to_raw();
    let (n, d) = (raw.n(), raw.d());
    let mut mean = vec![0.0; d];
    for row in raw.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    (raw.as_slice().to_vec(), mean)
}

/// Bootstrap draws `W* = n^{-1/2} Σ (X*_i − X̄)`, replicate `b` from
/// `stream(seed, b)`.
pub fn efron_vectors(x: &Dataset, b: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let (n, d) = (x.n(), x.d());
    if n < 2 {
        return Err(Error::Degenerate(format!("efron bootstrap needs n >= 2, got {n}")));
    }
    let (rows, mean) = raw_rows(x);
    let scale = 1.0 / (n as f64).sqrt();
    run_replicated(b, 1, seed, |_, rng| {
        let mut w = vec![0.0; d];
        for _ in 0..n {
            let i = rng.random_range(0..n);
            for (acc, v) in w.iter_mut().zip(&rows[i * d..(i + 1) * d]) {
                *acc += v;
            }
        }
        for (acc, m) in w.iter_mut().zip(&mean) {
            *acc = (*acc - n as f64 * m) * scale;
        }
        w
    })
}

/// Bootstrap draws `W° = n^{-1/2} Σ e_i X_i`.
pub fn wild_vectors(x: &Dataset, b: usize, multiplier: MultiplierDist, seed: u64) -> Result<Vec<Vec<f64>>> {
    let (n, d) = (x.n(), x.d());
    let (rows, _) = raw_rows(x);
    let scale = 1.0 / (n as f64).sqrt();
    run_replicated(b, 1, seed, |_, rng| {
        let mut w = vec![0.0; d];
        for row in rows.chunks_exact(d) {
            let e = multiplier.sample(rng);
            for (acc, v) in w.iter_mut().zip(row) {
                *acc += e * v;
            }
        }
        w.iter_mut().for_each(|v| *v *= scale);
        w
    })
}

fn norms(vectors: Vec<Vec<f64>>) -> Vec<f64> {
    vectors.into_iter().map(|w| w.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
}

/// `|W*|` for `b` Efron replicates.
pub fn efron_stats(x: &Dataset, b: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(norms(efron_vectors(x, b, seed)?))
}

/// `|W°|` for `b` wild replicates.
pub fn wild_stats(x: &Dataset, b: usize, multiplier: MultiplierDist, seed: u64) -> Result<Vec<f64>> {
    Ok(norms(wild_vectors(x, b, multiplier, seed)?))
}

/// Largest `m` with `m/B ≤ α`.
fn exceedance_budget(b: usize, alpha: f64) -> usize {
    let bf = b as f64;
    let mut m = (alpha * bf).floor().max(0.0) as usize;
    while m < b && (m + 1) as f64 / bf <= alpha {
        m += 1;
    }
    while m > 0 && m as f64 / bf > alpha {
        m -= 1;
    }
    m
}

/// `inf{x : #{b : v_b > x}/B ≤ α}`, which is the order statistic
/// `v_(B−m)` with `m` the largest integer such that `m/B ≤ α`.
pub fn bootstrap_quantile(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Data("no bootstrap values".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Data("NaN among bootstrap values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let m = exceedance_budget(sorted.len(), alpha);
    Ok(sorted[sorted.len() - m - 1])
}

/// Bootstrap statistics and their quantile for one dataset.
pub fn bootstrap_run(
    x: &Dataset,
    kind: BootstrapKind,
    multiplier: Option<MultiplierDist>,
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<BootstrapRun> {
    if b == 0 {
        return Err(Error::Domain("B must be positive".into()));
    }
    let stat_values = match kind {
        BootstrapKind::Efron => efron_stats(x, b, seed)?,
        BootstrapKind::Wild => {
            let e = multiplier.ok_or_else(|| Error::Contract("wild bootstrap needs a multiplier".into()))?;
            wild_stats(x, b, e, seed)?
        }
    };
    let quantile = bootstrap_quantile(&stat_values, alpha)?;
    Ok(BootstrapRun {
        kind,
        b,
        alpha,
        stat_values,
        quantile,
        multiplier: if kind == BootstrapKind::Wild { multiplier } else { None },
        seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CoverageReplicate {
    pub index: u64,
    pub w_norm: f64,
    pub quantile: f64,
    pub exceeds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CoverageResult {
    pub coverage: f64,
    pub stderr: f64,
    pub replicates: Vec<CoverageReplicate>,
}

/// Outer replicate `r`: dataset from `derive_seed(seed, 2r)`, inner
/// bootstrap from `derive_seed(seed, 2r + 1)`.
pub fn coverage_replicate(
    spec: &DgpSpec,
    kind: BootstrapKind,
    multiplier: Option<MultiplierDist>,
    b: usize,
    alpha: f64,
    seed: u64,
    r: u64,
) -> Result<CoverageReplicate> {
    let x = sample(spec, derive_seed(seed, 2 * r))?;
    let w_norm = x.sum().iter().map(|v| v * v).sum::<f64>().sqrt();
    let run = bootstrap_run(&x, kind, multiplier, b, alpha, derive_seed(seed, 2 * r + 1))?;
    Ok(CoverageReplicate { index: r, w_norm, quantile: run.quantile, exceeds: w_norm > run.quantile })
}

/// Fraction of `r_outer` replicates with `|W|` above the bootstrap
/// quantile, and its binomial standard error.
#[allow(clippy::too_many_arguments)]
pub fn coverage_experiment(
    spec: &DgpSpec,
    alpha: f64,
    b: usize,
    r_outer: usize,
    kind: BootstrapKind,
    multiplier: Option<MultiplierDist>,
    seed: u64,
    workers: usize,
) -> Result<CoverageResult> {
    if r_outer < 100 {
        return Err(Error::Domain(format!("coverage needs at least 100 outer replicates, got {r_outer}")));
    }
    let replicates =
        run_replicated(r_outer, workers, seed, |r, _| coverage_replicate(spec, kind, multiplier, b, alpha, seed, r))?
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
    let coverage = replicates.iter().filter(|c| c.exceeds).count() as f64 / r_outer as f64;
    Ok(CoverageResult { coverage, stderr: (coverage * (1.0 - coverage) / r_outer as f64).sqrt(), replicates })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OpNormDelta {
    /// `‖Σ̂ − Σ‖_op` (efron) or `‖Σ̄ − Σ‖_op` (wild).
    pub op: f64,
    /// The same difference in Hilbert-Schmidt norm.
    pub hs: f64,
    /// Plug-in `√(n^{-2} Σ |X_i|⁴)`, the moment bound on the mean
    /// Hilbert-Schmidt deviation.
    pub hs_moment_bound: f64,
}

/// Sample-covariance deviation from `sigma` in the scale of `X`.
pub fn op_norm_delta(x: &Dataset, sigma: &SymMatrix, kind: BootstrapKind) -> Result<OpNormDelta> {
    let est = match kind {
        BootstrapKind::Efron => centred_covariance(x)?,
        BootstrapKind::Wild => summand_gram(x),
    };
    let diff = est.sub(sigma)?;
    let op = sym_eigen(&diff, 1e-12)?.op_norm;
    let f = x.summand_factor();
    let sum4: f64 = x.rows().map(|row| row.iter().map(|v| (v * f).powi(2)).sum::<f64>().powi(2)).sum();
    Ok(OpNormDelta { op, hs: diff.hs_norm(), hs_moment_bound: sum4.sqrt() })
}

/// Draws the raw dataset used by [`coverage_replicate`] for replicate `r`.
pub fn coverage_dataset(spec: &DgpSpec, seed: u64, r: u64) -> Result<Dataset> {
    sample(spec, derive_seed(seed, 2 * r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ScaleConvention;

    /// `inf{x : #{v > x}/B ≤ α}` over the candidate set `values ∪ {−∞}`.
    fn brute_quantile(values: &[f64], alpha: f64) -> f64 {
        let b = values.len() as f64;
        let mut best = f64::INFINITY;
        for &x in values {
            let above = values.iter().filter(|&&v| v > x).count() as f64;
            if above / b <= alpha {
                best = best.min(x);
            }
        }
        best
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(bootstrap_quantile(&[1.0, 2.0, 3.0, 4.0], 0.25).unwrap(), 3.0);
        assert_eq!(bootstrap_quantile(&[5.0], 0.5).unwrap(), 5.0);
        for a in [0.01, 0.3, 0.99] {
            assert_eq!(bootstrap_quantile(&[2.0; 7], a).unwrap(), 2.0);
        }
        assert!(bootstrap_quantile(&[], 0.1).is_err());
        assert!(bootstrap_quantile(&[1.0], 1.0).is_err());
    }

    #[test]
    fn quantile_matches_brute_force_on_small_multisets() {
        let alphabet = [0.5, 1.0, 2.0];
        let alphas = [0.05, 0.1, 0.2, 0.25, 1.0 / 3.0, 0.5, 2.0 / 3.0, 0.75, 0.9];
        for size in 1..=6usize {
            // Multisets as nondecreasing index sequences.
            let mut idx = vec![0usize; size];
            loop {
                let values: Vec<f64> = idx.iter().map(|&i| alphabet[i]).collect();
                for &a in &alphas {
                    assert_eq!(bootstrap_quantile(&values, a).unwrap(), brute_quantile(&values, a), "{values:?} {a}");
                }
                let mut k = size;
                while k > 0 && idx[k - 1] == alphabet.len() - 1 {
                    k -= 1;
                }
                if k == 0 {
                    break;
                }
                idx[k - 1] += 1;
                let v = idx[k - 1];
                idx[k..].iter_mut().for_each(|i| *i = v);
            }
        }
    }

    #[test]
    fn degenerate_and_single_row_cases() {
        let same =
            Dataset::new(4, 2, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0], ScaleConvention::XOverSqrtN).unwrap();
        assert!(efron_stats(&same, 20, 1).unwrap().iter().all(|&v| v.abs() < 1e-12));

        let v = [3.0f64, 4.0];
        let one =
            Dataset::new(4, 2, vec![3.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], ScaleConvention::XOverSqrtN).unwrap();
        let stats = wild_stats(&one, 50, MultiplierDist::Rademacher, 2).unwrap();
        let expect = (v[0] * v[0] + v[1] * v[1]).sqrt() / 2.0;
        assert!(stats.iter().all(|&s| (s - expect).abs() < 1e-12));
        for a in [0.05, 0.5, 0.95] {
            assert!((bootstrap_quantile(&stats, a).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn efron_conditional_moments() {
        let x = sample(&DgpSpec::iid(40, 2, crate::dgp::Marginal::ExpStd), 8).unwrap();
        let b = 20_000;
        let draws = efron_vectors(&x, b, 77).unwrap();
        let sigma_hat = centred_covariance(&x).unwrap();
        for j in 0..2 {
            let mean: f64 = draws.iter().map(|w| w[j]).sum::<f64>() / b as f64;
            let sd = (sigma_hat.get(j, j) / b as f64).sqrt();
            assert!(mean.abs() < 4.0 * sd, "mean {mean} sd {sd}");
        }
        for (j, k) in [(0, 0), (0, 1), (1, 1)] {
            let c: f64 = draws.iter().map(|w| w[j] * w[k]).sum::<f64>() / b as f64;
            let target = sigma_hat.get(j, k);
            let scale = (sigma_hat.get(j, j) * sigma_hat.get(k, k)).sqrt();
            assert!((c - target).abs() < 0.05 * scale, "({j},{k}) {c} vs {target}");
        }
    }

    #[test]
    fn wild_conditional_covariance() {
        let x = sample(&DgpSpec::iid(30, 2, crate::dgp::Marginal::Gaussian), 4).unwrap();
        let b = 20_000;
        let draws = wild_vectors(&x, b, MultiplierDist::Mammen, 5).unwrap();
        let bar = summand_gram(&x);
        for (j, k) in [(0, 0), (0, 1), (1, 1)] {
            let c: f64 = draws.iter().map(|w| w[j] * w[k]).sum::<f64>() / b as f64;
            let scale = (bar.get(j, j) * bar.get(k, k)).sqrt();
            assert!((c - bar.get(j, k)).abs() < 0.06 * scale, "({j},{k})");
        }
    }

    #[test]
    fn quantile_nonincreasing_in_alpha() {
        let x = sample(&DgpSpec::iid(25, 3, crate::dgp::Marginal::Gaussian), 6).unwrap();
        let stats = efron_stats(&x, 200, 1).unwrap();
        let mut prev = f64::INFINITY;
        for i in 1..100 {
            let q = bootstrap_quantile(&stats, i as f64 / 100.0).unwrap();
            assert!(q <= prev);
            prev = q;
        }
    }

    #[test]
    fn op_norm_delta_properties() {
        let x = sample(&DgpSpec::iid(50, 4, crate::dgp::Marginal::Gaussian), 2).unwrap();
        for kind in [BootstrapKind::Efron, BootstrapKind::Wild] {
            let est = match kind {
                BootstrapKind::Efron => centred_covariance(&x).unwrap(),
                BootstrapKind::Wild => summand_gram(&x),
            };
            assert_eq!(op_norm_delta(&x, &est, kind).unwrap().op, 0.0);
            let r = op_norm_delta(&x, &SymMatrix::identity(4), kind).unwrap();
            assert!(r.op <= r.hs + 1e-12);
        }
    }

    #[test]
    fn degenerate_coverage_is_zero() {
        let spec = DgpSpec::iid(10, 2, crate::dgp::Marginal::Gaussian);
        // All-zero data never exceeds a zero quantile under the strict rule.
        let zero = Dataset::new(10, 2, vec![0.0; 20], ScaleConvention::RawXi).unwrap();
        let run = bootstrap_run(&zero, BootstrapKind::Efron, None, 50, 0.1, 3).unwrap();
        assert_eq!(run.quantile, 0.0);
        assert!(!(0.0 > run.quantile));
        assert!(coverage_experiment(&spec, 0.1, 10, 99, BootstrapKind::Efron, None, 1, 1).is_err());
    }
}
