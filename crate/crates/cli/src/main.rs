use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hdgauss_cli::config::SigmaSource;
use hdgauss_cli::runner::write_error;
use hdgauss_cli::{run_to_dir, CliError, ExperimentConfig, ExperimentKind, RawConfig};
use hdgauss_core::gaussball::ball_prob;

const DEFAULT_OUT_DIR: &str = "hdgauss-out";

#[derive(Parser)]
#[command(name = "hdgauss", version, about = "Gaussian approximation error bounds and Monte Carlo checks")]
struct Cli {
    /// Experiment configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides [experiment] seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "HDGAUSS_THREADS")]
    threads: Option<usize>,
    /// Output directory (overrides [output] dir).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Numerical tolerance for CDF inversion (overrides [mc] tol).
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Error-bound functionals for a dataset or a grid of processes.
    Boundreport(ExperimentArgs),
    /// Monte Carlo distances over an (n, d) grid.
    Distgrid(ExperimentArgs),
    /// Power-law fit of two columns of a CSV file.
    Ratefit(ExperimentArgs),
    /// Bootstrap coverage of the centered-ball quantile.
    Coverage(CoverageArgs),
    /// Half-space gap table for the two-piece construction.
    Counterexample(ExperimentArgs),
    /// Anti-concentration ratio of |Z + mu|^2.
    Anticonc(ExperimentArgs),
    /// P(|Z + mu| <= r) for Z ~ N(0, Sigma).
    Ballprob(BallArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// Config override `section.key=value` (repeatable).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Sample sizes, e.g. `200,400` or `2^8..2^14`.
    #[arg(long)]
    n: Option<String>,
    /// Dimension rule: an integer, a list, `n`, `n^gamma` or `nagaev`.
    #[arg(long)]
    d: Option<String>,
}

#[derive(Args)]
struct CoverageArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    /// Bootstrap kind: efron or wild.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Bootstrap draws per outer replicate.
    #[arg(short = 'B', long = "b")]
    b: Option<usize>,
    /// Outer replicates.
    #[arg(short = 'R', long = "r")]
    r: Option<usize>,
    /// Coordinate law of the data.
    #[arg(long)]
    marginal: Option<String>,
    /// Wild-bootstrap multiplier: gaussian, rademacher or mammen.
    #[arg(long)]
    multiplier: Option<String>,
}

#[derive(Args)]
struct BallArgs {
    /// Covariance: identity:<d>, diag:<v1,...> or a CSV file path.
    #[arg(long)]
    sigma: String,
    /// Centre, comma separated (default 0).
    #[arg(long)]
    mu: Option<String>,
    /// Radius.
    #[arg(long)]
    r: f64,
}

fn load_raw(path: Option<&Path>) -> Result<RawConfig, CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            RawConfig::parse(&text)
        }
        None => Ok(RawConfig::default()),
    }
}

fn build_config(
    cli: &Cli,
    kind: ExperimentKind,
    args: &ExperimentArgs,
    extra: &[(&str, &str, String)],
) -> Result<ExperimentConfig, CliError> {
    let mut raw = load_raw(cli.config.as_deref())?;
    if let Some(e) = raw.get("experiment", "kind") {
        if e.value != kind.name() {
            return Err(CliError::Experiment(format!(
                "config declares kind `{}` but the subcommand runs `{}`",
                e.value,
                kind.name()
            )));
        }
    }
    raw.set("experiment", "kind", kind.name())?;
    if let Some(n) = &args.n {
        raw.set("grid", "n", n)?;
    }
    if let Some(d) = &args.d {
        raw.set("grid", "d", d)?;
    }
    for (section, key, value) in extra {
        raw.set(section, key, value)?;
    }
    for s in &args.set {
        raw.set_dotted(s)?;
    }
    if let Some(seed) = cli.seed {
        raw.set("experiment", "seed", &seed.to_string())?;
    }
    if let Some(tol) = cli.tol {
        raw.set("mc", "tol", &tol.to_string())?;
    }
    if let Some(dir) = &cli.out_dir {
        raw.set("output", "dir", &dir.to_string_lossy())?;
    }
    ExperimentConfig::from_raw(&raw)
}

fn threads(cli: &Cli) -> usize {
    cli.threads.filter(|&t| t > 0).unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn ballprob(cli: &Cli, args: &BallArgs) -> Result<(), CliError> {
    let source = if args.sigma.contains(':') {
        SigmaSource::parse(&args.sigma).map_err(CliError::Experiment)?
    } else {
        SigmaSource::File(PathBuf::from(&args.sigma))
    };
    let sigma = source.load()?;
    let mu = match &args.mu {
        Some(s) => s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Experiment(format!("invalid mu entry `{t}`"))))
            .collect::<Result<Vec<_>, _>>()?,
        None => vec![0.0; sigma.dim()],
    };
    let tol = cli.tol.unwrap_or(hdgauss_cli::config::DEFAULT_TOL);
    let v = ball_prob(&sigma, &mu, args.r, tol)?;
    println!("value={:.16e} error_bound={:.3e}", v.value, v.error_bound);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args, extra): (ExperimentKind, &ExperimentArgs, Vec<(&str, &str, String)>) = match &cli.command {
        Command::Ballprob(b) => {
            return match ballprob(&cli, b) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    if let Some(dir) = &cli.out_dir {
                        write_error(dir, &e);
                    }
                    ExitCode::FAILURE
                }
            };
        }
        Command::Boundreport(a) => (ExperimentKind::BoundReport, a, Vec::new()),
        Command::Distgrid(a) => (ExperimentKind::DistanceGrid, a, Vec::new()),
        Command::Ratefit(a) => (ExperimentKind::RateFit, a, Vec::new()),
        Command::Counterexample(a) => (ExperimentKind::Counterexample, a, Vec::new()),
        Command::Anticonc(a) => (ExperimentKind::Anticoncentration, a, Vec::new()),
        Command::Coverage(c) => {
            let mut extra = Vec::new();
            let mut add = |section, key, v: Option<String>| {
                if let Some(v) = v {
                    extra.push((section, key, v));
                }
            };
            add("bootstrap", "kind", c.kind.clone());
            add("bootstrap", "alpha", c.alpha.map(|v| v.to_string()));
            add("bootstrap", "b", c.b.map(|v| v.to_string()));
            add("bootstrap", "r", c.r.map(|v| v.to_string()));
            add("bootstrap", "multiplier", c.multiplier.clone());
            add("dgp", "marginal", c.marginal.clone());
            (ExperimentKind::Coverage, &c.common, extra)
        }
    };
    let cfg = match build_config(&cli, kind, args, &extra) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(dir) = &cli.out_dir {
                write_error(dir, &e);
            }
            return ExitCode::from(2);
        }
    };
    let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    match run_to_dir(&cfg, threads(&cli), &out_dir) {
        Ok(manifest) => {
            for w in &manifest.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{} finished in {:.2}s; results in {}",
                manifest.kind,
                manifest.wall_time_seconds,
                out_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
