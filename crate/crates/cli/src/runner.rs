//! The six experiment kinds and result persistence.

use std::fs;
use std::path::Path;
use std::time::Instant;

use hdgauss_core::bootstrap::coverage_experiment;
use hdgauss_core::bounds::{
    analytic_moments, bound_report, estimate_cov_info, estimate_moments, estimate_whitened_moments,
    subgauss_op_norm_bound,
};
use hdgauss_core::dgp::{sample, RademacherCoupling};
use hdgauss_core::gaussball::anti_concentration_ratio;
use hdgauss_core::mc::{ball_distance, coupled_ball_distance, halfspace_mc};
use hdgauss_core::ratefit::rate_fit;
use hdgauss_core::rng::derive_seed;
use hdgauss_core::spectral::sym_eigen;
use hdgauss_core::{
    BootstrapKind, BoundReport, CovInfo, Dataset, DgpKind, DgpSpec, DistanceEstimate, DistanceFamily, Marginal,
    MomentBasis, RateFit, SymMatrix,
};
use serde_json::{json, Value};

use crate::config::{BoundMode, Estimator, ExperimentConfig, ExperimentKind, GridPoint, McConfig};
use crate::error::{CliError, Result};
use crate::output::{config_hash, fnum, fopt, read_columns, Manifest, Table};
use crate::svg::{log_log_chart, Series};

/// `C_0 = (8√(14π))^{-1}`, the constant of the fourth-moment lower bound.
pub const NAGAEV_C0: f64 = 0.018_848_251_096_628_358;

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PLOT_FILE: &str = "plot.svg";
pub const ERROR_FILE: &str = "error.txt";

/// In-memory results of one experiment.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub table: Table,
    pub summary: Value,
    pub plot: Option<String>,
    /// Additional `(file name, contents)` pairs.
    pub extra: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

/// Runs `cfg` on `threads` workers without touching the output directory.
pub fn execute(cfg: &ExperimentConfig, threads: usize) -> Result<Outcome> {
    let threads = threads.max(1);
    let mut outcome = match cfg.kind {
        ExperimentKind::BoundReport => run_bound_report(cfg)?,
        ExperimentKind::DistanceGrid => run_distance_grid(cfg, threads)?,
        ExperimentKind::RateFit => run_rate_fit(cfg)?,
        ExperimentKind::Coverage => run_coverage(cfg, threads)?,
        ExperimentKind::Counterexample => run_counterexample(cfg, threads)?,
        ExperimentKind::Anticoncentration => run_anticoncentration(cfg)?,
    };
    let mut warnings: Vec<String> =
        cfg.flagged_points().iter().map(|p| format!("grid point n={} d={} has d >= n", p.n, p.d)).collect();
    warnings.append(&mut outcome.warnings);
    outcome.warnings = warnings;
    Ok(outcome)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(path, e))
}

/// Runs `cfg` and writes results, summary, plot and manifest into
/// `out_dir`. On failure the diagnostic goes to `error.txt` there.
pub fn run_to_dir(cfg: &ExperimentConfig, threads: usize, out_dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let stale = out_dir.join(ERROR_FILE);
    if stale.exists() {
        fs::remove_file(&stale).map_err(|e| CliError::io(&stale, e))?;
    }
    let start = Instant::now();
    let result = execute(cfg, threads).and_then(|outcome| {
        let mut files = vec![RESULTS_FILE.to_string(), SUMMARY_FILE.to_string()];
        write(out_dir, RESULTS_FILE, &outcome.table.to_csv())?;
        write(out_dir, SUMMARY_FILE, &serde_json::to_string_pretty(&outcome.summary)?)?;
        if let Some(svg) = &outcome.plot {
            write(out_dir, PLOT_FILE, svg)?;
            files.push(PLOT_FILE.into());
        }
        for (name, contents) in &outcome.extra {
            write(out_dir, name, contents)?;
            files.push(name.clone());
        }
        let manifest = Manifest {
            kind: cfg.kind.name().into(),
            config_hash: config_hash(cfg),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").into(),
            threads: threads.max(1),
            wall_time_seconds: start.elapsed().as_secs_f64(),
            files,
            warnings: outcome.warnings,
        };
        write(out_dir, MANIFEST_FILE, &serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    });
    if let Err(e) = &result {
        write_error(out_dir, e);
    }
    result
}

/// Best-effort diagnostic file.
pub fn write_error(out_dir: &Path, err: &CliError) {
    if fs::create_dir_all(out_dir).is_ok() {
        let _ = fs::write(out_dir.join(ERROR_FILE), format!("error: {err}\n"));
    }
}

fn point_seed(cfg: &ExperimentConfig, i: usize) -> u64 {
    derive_seed(cfg.seed, i as u64)
}

fn is_positive_definite(sigma: &SymMatrix) -> Result<bool> {
    Ok(sym_eigen(sigma, 1e-13)?.min_eigenvalue() > 0.0)
}

/// Bound report with plug-in moments and covariance deviations.
pub fn plug_in_report(data: &Dataset, sigma: &SymMatrix, ma_order: usize) -> Result<BoundReport> {
    let m = estimate_moments(data)?;
    let whitened = if is_positive_definite(sigma)? { Some(estimate_whitened_moments(data, sigma)?) } else { None };
    let c = estimate_cov_info(data, sigma)?;
    Ok(bound_report(&m, whitened.as_ref(), &c, ma_order)?)
}

/// Bound report from closed-form moments with `Σ = Σ_W = I` and `δ̂`
/// replaced by the sub-Gaussian operator-norm bound with constant `l`.
pub fn analytic_report(spec: &DgpSpec, l: f64) -> Result<BoundReport> {
    let m = analytic_moments(spec)?;
    let mut white = m.clone();
    white.basis = MomentBasis::Whitened;
    let sigma = SymMatrix::identity(spec.d);
    let s = sym_eigen(&sigma, 1e-13)?;
    let delta = subgauss_op_norm_bound(l, &s, spec.n)?;
    let c = CovInfo::new(sigma.clone(), sigma, delta, delta)?;
    Ok(bound_report(&m, Some(&white), &c, spec.ma_order)?)
}

const BOUND_HEADER: [&str; 16] = [
    "n",
    "d",
    "mode",
    "delta_a",
    "delta_b",
    "delta0",
    "delta0p",
    "delta1",
    "delta2",
    "rhs_convex",
    "rhs_ball",
    "rhs_ball2",
    "rhs_cor3",
    "rhs_mdep",
    "delta_star",
    "delta_circ",
];

fn run_bound_report(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mode = match cfg.bound.mode {
        BoundMode::PlugIn => "plug-in",
        BoundMode::Analytic => "analytic",
    };
    let mut reports: Vec<(GridPoint, BoundReport)> = Vec::new();
    if let Some(stem) = &cfg.bound.data {
        let data = Dataset::read(stem)?;
        let sigma = match &cfg.bound.sigma {
            Some(s) => s.load()?,
            None => SymMatrix::identity(data.d()),
        };
        let ma_order = data.provenance().map(|p| p.dgp.ma_order).unwrap_or(cfg.dgp.ma_order);
        let p = GridPoint { n: data.n(), d: data.d() };
        reports.push((p, plug_in_report(&data, &sigma, ma_order)?));
    } else {
        for (i, &p) in cfg.grid.iter().enumerate() {
            let spec = cfg.dgp.spec(p)?;
            let report = match cfg.bound.mode {
                BoundMode::Analytic => analytic_report(&spec, cfg.bound.subgauss_l)?,
                BoundMode::PlugIn => {
                    let data = sample(&spec, point_seed(cfg, i))?;
                    let sigma = match &cfg.bound.sigma {
                        Some(s) => s.load()?,
                        None => SymMatrix::identity(p.d),
                    };
                    plug_in_report(&data, &sigma, spec.ma_order)?
                }
            };
            reports.push((p, report));
        }
    }

    let mut table = Table::new(&BOUND_HEADER);
    for (p, r) in &reports {
        table.push(vec![
            p.n.to_string(),
            p.d.to_string(),
            mode.into(),
            fopt(r.delta_a),
            fopt(r.delta_b),
            fnum(r.delta0),
            fnum(r.delta0p),
            fnum(r.delta1),
            fnum(r.delta2),
            fopt(r.rhs_convex),
            fopt(r.rhs_ball),
            fopt(r.rhs_ball2),
            fnum(r.rhs_cor3),
            fopt(r.rhs_mdep),
            fopt(r.delta_star),
            fopt(r.delta_circ),
        ]);
    }
    let json_reports: Vec<Value> =
        reports.iter().map(|(p, r)| json!({ "n": p.n, "d": p.d, "mode": mode, "report": r })).collect();
    let plot = (reports.len() >= 2).then(|| {
        let series = |name: &str, f: &dyn Fn(&BoundReport) -> Option<f64>| Series {
            name: name.into(),
            points: reports.iter().filter_map(|(p, r)| f(r).map(|v| (p.n as f64, v))).collect(),
        };
        log_log_chart(
            "Error-bound functionals",
            "n",
            "bound",
            &[
                series("rhs_ball2", &|r| r.rhs_ball2),
                series("rhs_ball", &|r| r.rhs_ball),
                series("rhs_cor3", &|r| Some(r.rhs_cor3)),
            ],
        )
    });
    Ok(Outcome {
        table,
        summary: json!({ "kind": cfg.kind, "mode": mode, "reports": json_reports }),
        plot,
        extra: vec![("report.json".into(), serde_json::to_string_pretty(&json_reports)?)],
        warnings: Vec::new(),
    })
}

/// One distance estimate for `spec` with the configured estimator.
pub fn distance_estimate(spec: &DgpSpec, mc: &McConfig, threads: usize, seed: u64) -> Result<DistanceEstimate> {
    Ok(match (mc.family, mc.estimator) {
        (DistanceFamily::CenteredBalls, Estimator::Direct) => ball_distance(spec, mc.samples, threads, seed)?,
        (DistanceFamily::CenteredBalls, Estimator::Coupled) => {
            if spec.kind != DgpKind::IidMarginal || spec.marginal != Marginal::Rademacher {
                return Err(CliError::Experiment(
                    "the coupled estimator is only available for iid-marginal rademacher processes".into(),
                ));
            }
            let coupling = RademacherCoupling::new(spec.n, spec.d)?;
            coupled_ball_distance(&coupling, mc.samples, threads, seed)?
        }
        (DistanceFamily::HalfSpace, Estimator::Direct) => {
            let mut e1 = vec![0.0; spec.d];
            e1[0] = 1.0;
            halfspace_mc(spec, &e1, mc.samples, threads, seed)?
        }
        (DistanceFamily::HalfSpace, Estimator::Coupled) => {
            return Err(CliError::Experiment("the coupled estimator only covers centered balls".into()))
        }
    })
}

fn family_name(f: DistanceFamily) -> &'static str {
    match f {
        DistanceFamily::CenteredBalls => "centered-balls",
        DistanceFamily::HalfSpace => "half-space",
    }
}

fn estimator_name(e: Estimator) -> &'static str {
    match e {
        Estimator::Direct => "direct",
        Estimator::Coupled => "coupled",
    }
}

fn fit_json(fit: Option<RateFit>) -> Value {
    match fit {
        Some(f) => json!({
            "slope": f.slope,
            "intercept": f.intercept,
            "r2": f.r2,
            "slopeStderr": f.slope_stderr,
            "points": f.points.len(),
        }),
        None => Value::Null,
    }
}

/// Number of adjacent pairs where the value increases.
pub fn count_inversions(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] > w[0]).count()
}

fn run_distance_grid(cfg: &ExperimentConfig, threads: usize) -> Result<Outcome> {
    let mut table = Table::new(&[
        "n",
        "d",
        "replicate",
        "family",
        "estimator",
        "mc_samples",
        "distance",
        "stderr",
        "gap_at_zero",
        "gap_stderr",
        "rhs_cor3",
        "ratio",
        "seed",
    ]);
    let mut means = Vec::new();
    let mut shapes = Vec::new();
    for (i, &p) in cfg.grid.iter().enumerate() {
        let spec = cfg.dgp.spec(p)?;
        let shape = hdgauss_core::bounds::rhs_cor3(p.n, p.d);
        let mut sum = 0.0;
        for k in 0..cfg.mc.replicates {
            let seed = derive_seed(point_seed(cfg, i), k as u64);
            let est = distance_estimate(&spec, &cfg.mc, threads, seed)?;
            sum += est.value;
            table.push(vec![
                p.n.to_string(),
                p.d.to_string(),
                k.to_string(),
                family_name(cfg.mc.family).into(),
                estimator_name(cfg.mc.estimator).into(),
                est.mc_samples.to_string(),
                fnum(est.value),
                fnum(est.stderr),
                fopt(est.gap_at_zero),
                fopt(est.gap_stderr),
                fnum(shape),
                fnum(est.value / shape),
                seed.to_string(),
            ]);
        }
        means.push(sum / cfg.mc.replicates as f64);
        shapes.push(shape);
    }
    let ratios: Vec<f64> = means.iter().zip(&shapes).map(|(m, s)| m / s).collect();
    let fitted_c = ratios.iter().copied().fold(0.0, f64::max);
    let ns: Vec<f64> = cfg.grid.iter().map(|p| p.n as f64).collect();
    let fit_n = rate_fit(&ns, &means).ok();
    let fit_shape = rate_fit(&shapes, &means).ok();
    let points: Vec<Value> = cfg
        .grid
        .iter()
        .zip(means.iter().zip(&shapes))
        .map(|(p, (m, s))| json!({ "n": p.n, "d": p.d, "meanDistance": m, "rhsCor3": s, "ratio": m / s, "flagged": p.flagged() }))
        .collect();
    let summary = json!({
        "kind": cfg.kind,
        "family": family_name(cfg.mc.family),
        "estimator": estimator_name(cfg.mc.estimator),
        "points": points,
        "fittedC": fitted_c,
        "inversions": count_inversions(&means),
        "fitAgainstN": fit_json(fit_n),
        "fitAgainstRhsCor3": fit_json(fit_shape),
    });
    let plot = log_log_chart(
        "Estimated distance and fitted bound shape",
        "n",
        "distance",
        &[
            Series { name: "distance".into(), points: ns.iter().copied().zip(means.iter().copied()).collect() },
            Series {
                name: "c * rhs_cor3".into(),
                points: ns.iter().copied().zip(shapes.iter().map(|s| fitted_c * s)).collect(),
            },
        ],
    );
    Ok(Outcome { table, summary, plot: Some(plot), extra: Vec::new(), warnings: Vec::new() })
}

fn run_rate_fit(cfg: &ExperimentConfig) -> Result<Outcome> {
    let path = cfg.ratefit.input.as_ref().expect("validated");
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let (header, rows) = read_columns(&text).map_err(|e| CliError::Experiment(format!("{}: {e}", path.display())))?;
    let column = |name: &str| -> Result<Vec<f64>> {
        let j = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Experiment(format!("{}: no column `{name}`", path.display())))?;
        rows.iter()
            .map(|r| {
                r[j].parse::<f64>().map_err(|_| {
                    CliError::Experiment(format!(
                        "{}: column `{name}` has non-numeric value `{}`",
                        path.display(),
                        r[j]
                    ))
                })
            })
            .collect()
    };
    let xs = column(&cfg.ratefit.x)?;
    let ys = column(&cfg.ratefit.y)?;
    let fit = rate_fit(&xs, &ys)?;
    let mut table = Table::new(&["x_column", "y_column", "points", "slope", "intercept", "r2", "slope_stderr"]);
    table.push(vec![
        cfg.ratefit.x.clone(),
        cfg.ratefit.y.clone(),
        fit.points.len().to_string(),
        fnum(fit.slope),
        fnum(fit.intercept),
        fnum(fit.r2),
        fnum(fit.slope_stderr),
    ]);
    let line: Vec<(f64, f64)> = xs.iter().map(|&x| (x, (fit.intercept + fit.slope * x.ln()).exp())).collect();
    let plot = log_log_chart(
        "Power-law fit",
        &cfg.ratefit.x,
        &cfg.ratefit.y,
        &[
            Series { name: "data".into(), points: xs.iter().copied().zip(ys.iter().copied()).collect() },
            Series { name: format!("slope {:.3}", fit.slope), points: line },
        ],
    );
    Ok(Outcome {
        table,
        summary: json!({ "kind": cfg.kind, "fit": fit }),
        plot: Some(plot),
        extra: Vec::new(),
        warnings: Vec::new(),
    })
}

fn run_coverage(cfg: &ExperimentConfig, threads: usize) -> Result<Outcome> {
    let bc = &cfg.bootstrap;
    let multiplier = (bc.kind == BootstrapKind::Wild).then_some(bc.multiplier);
    let mut table = Table::new(&["n", "d", "kind", "multiplier", "replicate", "w_norm", "quantile", "exceeds"]);
    let mut points = Vec::new();
    for (i, &p) in cfg.grid.iter().enumerate() {
        let spec = cfg.dgp.spec(p)?;
        let res = coverage_experiment(&spec, bc.alpha, bc.b, bc.r, bc.kind, multiplier, point_seed(cfg, i), threads)?;
        for rep in &res.replicates {
            table.push(vec![
                p.n.to_string(),
                p.d.to_string(),
                bc.kind.name().into(),
                multiplier.map(|m| m.name().to_string()).unwrap_or_default(),
                rep.index.to_string(),
                fnum(rep.w_norm),
                fnum(rep.quantile),
                rep.exceeds.to_string(),
            ]);
        }
        points.push(json!({
            "n": p.n,
            "d": p.d,
            "coverage": res.coverage,
            "stderr": res.stderr,
            "alpha": bc.alpha,
        }));
    }
    Ok(Outcome {
        table,
        summary: json!({
            "kind": cfg.kind,
            "bootstrap": bc.kind.name(),
            "multiplier": multiplier.map(|m| m.name()),
            "b": bc.b,
            "outerReplicates": bc.r,
            "points": points,
        }),
        plot: None,
        extra: Vec::new(),
        warnings: Vec::new(),
    })
}

fn run_counterexample(cfg: &ExperimentConfig, threads: usize) -> Result<Outcome> {
    let mut table = Table::new(&[
        "n",
        "d",
        "replicate",
        "x_n",
        "p_n",
        "a_n",
        "sigma_n",
        "mc_samples",
        "gap",
        "gap_stderr",
        "z",
        "distance",
        "sqrt_sum4",
        "ratio",
        "c0",
        "seed",
    ]);
    let mut points = Vec::new();
    let mut series = Vec::new();
    for (i, &p) in cfg.grid.iter().enumerate() {
        let spec = DgpSpec::nagaev(p.n, p.d)?.validated()?;
        let np = spec.nagaev_params.expect("validated");
        let sqrt_sum4 = analytic_moments(&spec)?.sum4.sqrt();
        let mut e1 = vec![0.0; p.d];
        e1[0] = 1.0;
        let mut gap_sum = 0.0;
        for k in 0..cfg.mc.replicates {
            let seed = derive_seed(point_seed(cfg, i), k as u64);
            let est = halfspace_mc(&spec, &e1, cfg.mc.samples, threads, seed)?;
            let gap = est.gap_at_zero.expect("half-space estimate");
            let se = est.gap_stderr.expect("half-space estimate");
            gap_sum += gap;
            table.push(vec![
                p.n.to_string(),
                p.d.to_string(),
                k.to_string(),
                fnum(np.x),
                fnum(np.p),
                fnum(np.a),
                fnum(np.sigma),
                est.mc_samples.to_string(),
                fnum(gap),
                fnum(se),
                fnum(gap / se),
                fnum(est.value),
                fnum(sqrt_sum4),
                fnum(gap / sqrt_sum4),
                fnum(NAGAEV_C0),
                seed.to_string(),
            ]);
        }
        let gap = gap_sum / cfg.mc.replicates as f64;
        points.push(json!({ "n": p.n, "d": p.d, "meanGap": gap, "sqrtSum4": sqrt_sum4, "ratio": gap / sqrt_sum4 }));
        series.push((p.n as f64, gap));
    }
    let plot = log_log_chart(
        "Half-space gap at 0 for the two-piece construction",
        "n",
        "gap",
        &[Series { name: "gap".into(), points: series }],
    );
    Ok(Outcome {
        table,
        summary: json!({ "kind": cfg.kind, "c0": NAGAEV_C0, "points": points }),
        plot: Some(plot),
        extra: Vec::new(),
        warnings: Vec::new(),
    })
}

fn run_anticoncentration(cfg: &ExperimentConfig) -> Result<Outcome> {
    let ac = &cfg.anticonc;
    let sigma = ac.sigma.as_ref().expect("validated").load()?;
    let d = sigma.dim();
    let mu = ac.mu.clone().unwrap_or_else(|| vec![0.0; d]);
    if mu.len() != d {
        return Err(CliError::Experiment(format!("mu has length {} but Sigma is {d}x{d}", mu.len())));
    }
    let trace = sigma.trace();
    let mut table = Table::new(&["eps_factor", "eps", "ratio", "argmax", "kappa", "grid_points"]);
    let mut ratios = Vec::new();
    let mut pts = Vec::new();
    for &f in &ac.eps_factors {
        let eps = f * trace / d as f64;
        let res = anti_concentration_ratio(&sigma, &mu, eps, ac.grid_max, ac.grid_step, cfg.mc.tol)?;
        table.push(vec![
            fnum(f),
            fnum(eps),
            fnum(res.ratio),
            fnum(res.argmax),
            fnum(res.kappa),
            res.grid_points.to_string(),
        ]);
        ratios.push(res.ratio);
        pts.push((eps, res.ratio));
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Outcome {
        table,
        summary: json!({
            "kind": cfg.kind,
            "d": d,
            "trace": trace,
            "minRatio": lo,
            "maxRatio": hi,
            "relativeVariation": hi / lo - 1.0,
        }),
        plot: Some(log_log_chart(
            "Anti-concentration ratio",
            "eps",
            "ratio",
            &[Series { name: "ratio".into(), points: pts }],
        )),
        extra: Vec::new(),
        warnings: Vec::new(),
    })
}
