//! Line-oriented experiment configuration.
//!
//! ```text
//! # comment
//! [experiment]
//! kind = distance-grid
//! seed = 7
//!
//! [grid]
//! n = 2^8..2^14
//! d = n^0.75
//! ```
//!
//! Keys are `key = value`, one per line, grouped under `[section]` headers.
//! Everything after `#` is a comment. Relative paths are resolved against
//! the working directory.

use std::collections::BTreeMap;
use std::path::PathBuf;

use hdgauss_core::{BootstrapKind, DgpKind, DgpSpec, DistanceFamily, Marginal, MultiplierDist, SymMatrix};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, Location, Result};

/// Sections and the keys each accepts.
pub const SCHEMA: &[(&str, &[&str])] = &[
    ("experiment", &["kind", "seed"]),
    ("grid", &["n", "d", "pairs"]),
    ("dgp", &["kind", "marginal", "multiplier", "ma_order"]),
    ("mc", &["samples", "replicates", "tol", "estimator", "family"]),
    ("bootstrap", &["kind", "alpha", "b", "r", "multiplier"]),
    ("anticonc", &["sigma", "mu", "eps_factors", "grid_step", "grid_max"]),
    ("boundreport", &["mode", "data", "sigma", "subgauss_l"]),
    ("ratefit", &["input", "x", "y"]),
    ("output", &["dir"]),
];

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_SAMPLES: usize = 100_000;
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawEntry {
    pub value: String,
    pub location: Location,
}

/// Syntactically valid `(section, key) → value` map.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawConfig {
    entries: BTreeMap<(String, String), RawEntry>,
}

fn check_key(section: &str, key: &str, location: Location) -> Result<()> {
    let keys = SCHEMA
        .iter()
        .find(|(s, _)| *s == section)
        .map(|(_, k)| *k)
        .ok_or_else(|| CliError::UnknownSection { section: section.into(), location })?;
    if keys.contains(&key) {
        Ok(())
    } else {
        Err(CliError::UnknownKey { key: key.into(), section: section.into(), location })
    }
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = Self::default();
        let mut section: Option<String> = None;
        for (i, line) in text.lines().enumerate() {
            let location = Location::Line(i + 1);
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::Syntax { location, msg: format!("unterminated section header `{line}`") })?
                    .trim();
                if !SCHEMA.iter().any(|(s, _)| *s == name) {
                    return Err(CliError::UnknownSection { section: name.into(), location });
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Syntax { location, msg: format!("expected `key = value`, got `{line}`") })?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section.clone().ok_or_else(|| CliError::Syntax {
                location,
                msg: format!("key `{key}` appears before any [section] header"),
            })?;
            check_key(&sec, key, location)?;
            if value.is_empty() {
                return Err(CliError::Field { field: format!("{sec}.{key}"), location, msg: "empty value".into() });
            }
            let slot = (sec.clone(), key.to_string());
            if raw.entries.contains_key(&slot) {
                return Err(CliError::Duplicate { key: key.into(), section: sec, location });
            }
            raw.entries.insert(slot, RawEntry { value: value.into(), location });
        }
        Ok(raw)
    }

    /// Sets or replaces a value from the command line.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        check_key(section, key, Location::CommandLine)?;
        self.entries.insert(
            (section.into(), key.into()),
            RawEntry { value: value.trim().into(), location: Location::CommandLine },
        );
        Ok(())
    }

    /// Applies a `section.key=value` override.
    pub fn set_dotted(&mut self, spec: &str) -> Result<()> {
        let bad = || CliError::Syntax {
            location: Location::CommandLine,
            msg: format!("expected `section.key=value`, got `{spec}`"),
        };
        let (path, value) = spec.split_once('=').ok_or_else(bad)?;
        let (section, key) = path.trim().split_once('.').ok_or_else(bad)?;
        self.set(section.trim(), key.trim(), value)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&RawEntry> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }
}

/// One accessor per field, producing errors that name the field.
struct Reader<'a> {
    raw: &'a RawConfig,
}

impl<'a> Reader<'a> {
    fn entry(&self, section: &str, key: &str) -> Option<(&'a str, Location, String)> {
        self.raw.get(section, key).map(|e| (e.value.as_str(), e.location, format!("{section}.{key}")))
    }

    fn with<T>(
        &self,
        section: &str,
        key: &str,
        f: impl FnOnce(&str) -> std::result::Result<T, String>,
    ) -> Result<Option<T>> {
        match self.entry(section, key) {
            None => Ok(None),
            Some((v, location, field)) => f(v).map(Some).map_err(|msg| CliError::Field { field, location, msg }),
        }
    }

    fn string(&self, section: &str, key: &str) -> Option<String> {
        self.entry(section, key).map(|(v, _, _)| v.to_string())
    }

    fn usize(&self, section: &str, key: &str) -> Result<Option<usize>> {
        self.with(section, key, parse_count)
    }

    fn f64(&self, section: &str, key: &str) -> Result<Option<f64>> {
        self.with(section, key, parse_real)
    }
}

fn parse_real(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

/// Nonnegative integer, written plainly, as `2^k`, or as an integral float
/// such as `1e4`.
fn parse_count(s: &str) -> std::result::Result<usize, String> {
    let s = s.trim();
    if let Ok(v) = s.parse::<usize>() {
        return Ok(v);
    }
    if let Some((b, e)) = s.split_once('^') {
        let b: usize = b.trim().parse().map_err(|_| format!("`{s}` is not an integer"))?;
        let e: u32 = e.trim().parse().map_err(|_| format!("`{s}` is not an integer"))?;
        return b.checked_pow(e).ok_or_else(|| format!("`{s}` overflows"));
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 9.0e15 => Ok(v as usize),
        _ => Err(format!("`{s}` is not a nonnegative integer")),
    }
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    s.split(',').map(|t| f(t.trim())).collect()
}

/// `n` values: comma-separated counts; an item `2^a..2^b` expands to the
/// powers of two in between.
fn parse_n_list(s: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim) {
        if let Some((lo, hi)) = item.split_once("..") {
            let exp = |t: &str| -> std::result::Result<u32, String> {
                t.trim()
                    .strip_prefix("2^")
                    .and_then(|e| e.parse().ok())
                    .ok_or_else(|| format!("range `{item}` must have the form 2^a..2^b"))
            };
            let (a, b) = (exp(lo)?, exp(hi)?);
            if a > b || b > 62 {
                return Err(format!("invalid range `{item}`"));
            }
            out.extend((a..=b).map(|k| 1usize << k));
        } else {
            out.push(parse_count(item)?);
        }
    }
    Ok(out)
}

/// How `d` follows from `n` on a grid.
#[derive(Clone, Debug, PartialEq)]
pub enum DimRule {
    Fixed(usize),
    List(Vec<usize>),
    EqualN,
    /// `d = ⌊n^γ⌋`.
    Power(f64),
    /// `d = ⌊√n / ln n⌋`.
    Nagaev,
}

/// `⌊v⌋`, except that values within relative 1e-9 of an integer round to
/// it, so that `256^0.75` gives 64 despite round-off.
fn robust_floor(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        v.floor()
    }
}

impl DimRule {
    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s == "n" {
            return Ok(Self::EqualN);
        }
        if s == "nagaev" {
            return Ok(Self::Nagaev);
        }
        if let Some(g) = s.strip_prefix("n^") {
            let g = parse_real(g.trim())?;
            if !(g > 0.0) {
                return Err(format!("exponent in `{s}` must be positive"));
            }
            return Ok(Self::Power(g));
        }
        let list = parse_list(s, parse_count)?;
        Ok(if list.len() == 1 { Self::Fixed(list[0]) } else { Self::List(list) })
    }

    fn apply(&self, n: usize, idx: usize) -> std::result::Result<usize, String> {
        let nf = n as f64;
        let d = match self {
            Self::Fixed(d) => *d,
            Self::List(ds) => ds[idx],
            Self::EqualN => n,
            Self::Power(g) => robust_floor(nf.powf(*g)) as usize,
            Self::Nagaev => {
                if n < 3 {
                    return Err(format!("d = nagaev needs n >= 3, got {n}"));
                }
                robust_floor(nf.sqrt() / nf.ln()) as usize
            }
        };
        if d == 0 {
            return Err(format!("rule gives d = 0 at n = {n}"));
        }
        Ok(d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GridPoint {
    pub n: usize,
    pub d: usize,
}

impl GridPoint {
    /// `d ≥ n`: the regime where ball approximation can fail.
    pub fn flagged(self) -> bool {
        self.d >= self.n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    BoundReport,
    DistanceGrid,
    RateFit,
    Coverage,
    Counterexample,
    Anticoncentration,
}

impl ExperimentKind {
    pub const ALL: [Self; 6] = [
        Self::BoundReport,
        Self::DistanceGrid,
        Self::RateFit,
        Self::Coverage,
        Self::Counterexample,
        Self::Anticoncentration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::BoundReport => "bound-report",
            Self::DistanceGrid => "distance-grid",
            Self::RateFit => "rate-fit",
            Self::Coverage => "coverage",
            Self::Counterexample => "counterexample",
            Self::Anticoncentration => "anticoncentration",
        }
    }

    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown experiment kind `{s}`"))
    }

    fn uses_grid(self) -> bool {
        matches!(self, Self::BoundReport | Self::DistanceGrid | Self::Coverage | Self::Counterexample)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DgpTemplate {
    pub kind: DgpKind,
    pub marginal: Marginal,
    pub multiplier: MultiplierDist,
    pub ma_order: usize,
}

impl DgpTemplate {
    pub fn spec(&self, p: GridPoint) -> hdgauss_core::Result<DgpSpec> {
        let spec = match self.kind {
            DgpKind::IidMarginal => DgpSpec::iid(p.n, p.d, self.marginal),
            DgpKind::Multiplier => DgpSpec::multiplier(p.n, p.d, self.marginal, self.multiplier),
            DgpKind::Nagaev => DgpSpec::nagaev(p.n, p.d)?,
            DgpKind::MaMdep => DgpSpec::ma(p.n, p.d, self.marginal, self.ma_order),
        };
        spec.validated()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// One-sample KS of `|W|²` draws against the `χ²_d` CDF.
    Direct,
    /// Two-sample sup distance of coupled `(|W|², |Z|²)` pairs.
    Coupled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct McConfig {
    pub samples: usize,
    pub replicates: usize,
    pub tol: f64,
    pub estimator: Estimator,
    pub family: DistanceFamily,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BootstrapConfig {
    pub kind: BootstrapKind,
    pub alpha: f64,
    pub b: usize,
    pub r: usize,
    pub multiplier: MultiplierDist,
}

/// A covariance matrix given inline or by file.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaSource {
    /// `identity:d`.
    Identity(usize),
    /// `diag:v1,v2,...`.
    Diagonal(Vec<f64>),
    /// `file:path` (CSV with a `dim=d` header).
    File(PathBuf),
}

impl SigmaSource {
    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        let (tag, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("expected identity:<d>, diag:<v1,v2,...> or file:<path>, got `{s}`"))?;
        match tag.trim() {
            "identity" => match parse_count(rest)? {
                0 => Err("identity dimension must be positive".into()),
                d => Ok(Self::Identity(d)),
            },
            "diag" => Ok(Self::Diagonal(parse_list(rest, parse_real)?)),
            "file" => Ok(Self::File(PathBuf::from(rest.trim()))),
            other => Err(format!("unknown covariance source `{other}`")),
        }
    }

    pub fn load(&self) -> Result<SymMatrix> {
        Ok(match self {
            Self::Identity(d) => SymMatrix::identity(*d),
            Self::Diagonal(v) => SymMatrix::diagonal(v),
            Self::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                SymMatrix::from_csv(&text)?
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AnticoncConfig {
    pub sigma: Option<SigmaSource>,
    pub mu: Option<Vec<f64>>,
    pub eps_factors: Vec<f64>,
    pub grid_step: Option<f64>,
    pub grid_max: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMode {
    /// Moments and `δ̂` estimated from a dataset.
    PlugIn,
    /// Closed-form moments, `Σ = Σ_W = I`, `δ̂` from the sub-Gaussian bound.
    Analytic,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BoundConfig {
    pub mode: BoundMode,
    pub data: Option<PathBuf>,
    pub sigma: Option<SigmaSource>,
    pub subgauss_l: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RateFitConfig {
    pub input: Option<PathBuf>,
    pub x: String,
    pub y: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub grid: Vec<GridPoint>,
    pub dgp: DgpTemplate,
    pub mc: McConfig,
    pub bootstrap: BootstrapConfig,
    pub anticonc: AnticoncConfig,
    pub bound: BoundConfig,
    pub ratefit: RateFitConfig,
    pub out_dir: Option<PathBuf>,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::from_raw(&RawConfig::parse(text)?)
}

fn field_err(r: &Reader<'_>, section: &str, key: &str, msg: impl Into<String>) -> CliError {
    let location = r.raw.get(section, key).map(|e| e.location).unwrap_or(Location::CommandLine);
    CliError::Field { field: format!("{section}.{key}"), location, msg: msg.into() }
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let r = Reader { raw };
        let kind = r
            .with("experiment", "kind", ExperimentKind::parse)?
            .ok_or_else(|| CliError::Missing { field: "experiment.kind".into(), kind: "all".into() })?;
        let seed =
            r.with("experiment", "seed", |s| s.parse::<u64>().map_err(|_| format!("`{s}` is not a u64 seed")))?;

        let dgp = DgpTemplate {
            kind: r
                .with("dgp", "kind", |s| DgpKind::parse(s).map_err(|e| e.to_string()))?
                .unwrap_or(DgpKind::IidMarginal),
            marginal: r
                .with("dgp", "marginal", |s| Marginal::parse(s).map_err(|e| e.to_string()))?
                .unwrap_or(Marginal::Gaussian),
            multiplier: r
                .with("dgp", "multiplier", |s| MultiplierDist::parse(s).map_err(|e| e.to_string()))?
                .unwrap_or(MultiplierDist::Gaussian),
            ma_order: r.usize("dgp", "ma_order")?.unwrap_or(0),
        };

        let grid = Self::grid(&r, kind, dgp.kind)?;

        let mc = McConfig {
            samples: r.usize("mc", "samples")?.unwrap_or(DEFAULT_SAMPLES),
            replicates: r.usize("mc", "replicates")?.unwrap_or(1),
            tol: r.f64("mc", "tol")?.unwrap_or(DEFAULT_TOL),
            estimator: r
                .with("mc", "estimator", |s| match s {
                    "direct" => Ok(Estimator::Direct),
                    "coupled" => Ok(Estimator::Coupled),
                    _ => Err(format!("unknown estimator `{s}` (direct, coupled)")),
                })?
                .unwrap_or(Estimator::Direct),
            family: r
                .with("mc", "family", |s| match s {
                    "centered-balls" => Ok(DistanceFamily::CenteredBalls),
                    "half-space" => Ok(DistanceFamily::HalfSpace),
                    _ => Err(format!("unknown distance family `{s}` (centered-balls, half-space)")),
                })?
                .unwrap_or(if kind == ExperimentKind::Counterexample {
                    DistanceFamily::HalfSpace
                } else {
                    DistanceFamily::CenteredBalls
                }),
        };
        if mc.samples < 2 {
            return Err(field_err(&r, "mc", "samples", "need at least 2 Monte Carlo samples"));
        }
        if mc.replicates == 0 {
            return Err(field_err(&r, "mc", "replicates", "need at least one replicate"));
        }
        if !(mc.tol >= 1e-9 && mc.tol < 1.0) {
            return Err(field_err(&r, "mc", "tol", "tolerance must lie in [1e-9, 1)"));
        }

        let bootstrap = BootstrapConfig {
            kind: r
                .with("bootstrap", "kind", |s| BootstrapKind::parse(s).map_err(|e| e.to_string()))?
                .unwrap_or(BootstrapKind::Efron),
            alpha: r.f64("bootstrap", "alpha")?.unwrap_or(0.1),
            b: r.usize("bootstrap", "b")?.unwrap_or(500),
            r: r.usize("bootstrap", "r")?.unwrap_or(2000),
            multiplier: r
                .with("bootstrap", "multiplier", |s| MultiplierDist::parse(s).map_err(|e| e.to_string()))?
                .unwrap_or(MultiplierDist::Gaussian),
        };
        if !(bootstrap.alpha > 0.0 && bootstrap.alpha < 1.0) {
            return Err(field_err(&r, "bootstrap", "alpha", "alpha must lie in (0, 1)"));
        }
        if bootstrap.b == 0 {
            return Err(field_err(&r, "bootstrap", "b", "need at least one bootstrap draw"));
        }
        if kind == ExperimentKind::Coverage && bootstrap.r < 100 {
            return Err(field_err(&r, "bootstrap", "r", "coverage needs at least 100 outer replicates"));
        }

        let anticonc = AnticoncConfig {
            sigma: r.with("anticonc", "sigma", SigmaSource::parse)?,
            mu: r.with("anticonc", "mu", |s| parse_list(s, parse_real))?,
            eps_factors: r
                .with("anticonc", "eps_factors", |s| parse_list(s, parse_real))?
                .unwrap_or(vec![0.05, 0.1, 0.2]),
            grid_step: r.f64("anticonc", "grid_step")?,
            grid_max: r.f64("anticonc", "grid_max")?,
        };
        if anticonc.eps_factors.is_empty() || anticonc.eps_factors.iter().any(|e| !(*e > 0.0)) {
            return Err(field_err(&r, "anticonc", "eps_factors", "factors must be positive"));
        }
        if kind == ExperimentKind::Anticoncentration {
            let sigma = anticonc
                .sigma
                .as_ref()
                .ok_or_else(|| CliError::Missing { field: "anticonc.sigma".into(), kind: kind.name().into() })?;
            if let (Some(mu), SigmaSource::Identity(d)) = (&anticonc.mu, sigma) {
                if mu.len() != *d {
                    return Err(field_err(&r, "anticonc", "mu", format!("length {} does not match d = {d}", mu.len())));
                }
            }
            if let (Some(mu), SigmaSource::Diagonal(v)) = (&anticonc.mu, sigma) {
                if mu.len() != v.len() {
                    return Err(field_err(
                        &r,
                        "anticonc",
                        "mu",
                        format!("length {} does not match d = {}", mu.len(), v.len()),
                    ));
                }
            }
        }

        let bound = BoundConfig {
            mode: r
                .with("boundreport", "mode", |s| match s {
                    "plug-in" => Ok(BoundMode::PlugIn),
                    "analytic" => Ok(BoundMode::Analytic),
                    _ => Err(format!("unknown mode `{s}` (plug-in, analytic)")),
                })?
                .unwrap_or(BoundMode::PlugIn),
            data: r.string("boundreport", "data").map(PathBuf::from),
            sigma: r.with("boundreport", "sigma", SigmaSource::parse)?,
            subgauss_l: r.f64("boundreport", "subgauss_l")?.unwrap_or(1.0),
        };
        if !(bound.subgauss_l >= 1.0) {
            return Err(field_err(&r, "boundreport", "subgauss_l", "L must be at least 1"));
        }
        if bound.mode == BoundMode::Analytic && bound.data.is_some() {
            return Err(field_err(&r, "boundreport", "data", "a dataset is only used in plug-in mode"));
        }

        let ratefit = RateFitConfig {
            input: r.string("ratefit", "input").map(PathBuf::from),
            x: r.string("ratefit", "x").unwrap_or_else(|| "n".into()),
            y: r.string("ratefit", "y").unwrap_or_else(|| "distance".into()),
        };
        if kind == ExperimentKind::RateFit && ratefit.input.is_none() {
            return Err(CliError::Missing { field: "ratefit.input".into(), kind: kind.name().into() });
        }

        Ok(Self {
            kind,
            seed: seed.unwrap_or(DEFAULT_SEED),
            grid,
            dgp,
            mc,
            bootstrap,
            anticonc,
            bound,
            ratefit,
            out_dir: r.string("output", "dir").map(PathBuf::from),
        })
    }

    fn grid(r: &Reader<'_>, kind: ExperimentKind, dgp: DgpKind) -> Result<Vec<GridPoint>> {
        let pairs = r.with("grid", "pairs", |s| {
            parse_list(s, |item| {
                let (n, d) = item.split_once(':').ok_or_else(|| format!("pair `{item}` must be n:d"))?;
                Ok(GridPoint { n: parse_count(n)?, d: parse_count(d)? })
            })
        })?;
        let ns = r.usize_list_n()?;
        let grid = match (pairs, ns) {
            (Some(_), Some(_)) => {
                return Err(field_err(r, "grid", "pairs", "give either `pairs` or `n`/`d`, not both"))
            }
            (Some(p), None) => {
                if r.entry("grid", "d").is_some() {
                    return Err(field_err(r, "grid", "d", "`d` cannot be combined with `pairs`"));
                }
                p
            }
            (None, Some(ns)) => {
                let default_rule = if kind == ExperimentKind::Counterexample || dgp == DgpKind::Nagaev {
                    Some(DimRule::Nagaev)
                } else {
                    None
                };
                let rule = match r.with("grid", "d", DimRule::parse)? {
                    Some(rule) => rule,
                    None => default_rule
                        .ok_or_else(|| CliError::Missing { field: "grid.d".into(), kind: kind.name().into() })?,
                };
                if let DimRule::List(ds) = &rule {
                    if ds.len() != ns.len() {
                        return Err(field_err(
                            r,
                            "grid",
                            "d",
                            format!("{} d values for {} n values", ds.len(), ns.len()),
                        ));
                    }
                }
                ns.iter()
                    .enumerate()
                    .map(|(i, &n)| rule.apply(n, i).map(|d| GridPoint { n, d }))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|msg| field_err(r, "grid", "d", msg))?
            }
            (None, None) => Vec::new(),
        };
        if grid.iter().any(|p| p.n == 0 || p.d == 0) {
            return Err(field_err(
                r,
                "grid",
                if r.entry("grid", "pairs").is_some() { "pairs" } else { "n" },
                "n and d must be positive",
            ));
        }
        if kind.uses_grid() && grid.is_empty() {
            let data_given = kind == ExperimentKind::BoundReport && r.entry("boundreport", "data").is_some();
            if !data_given {
                return Err(CliError::Missing { field: "grid.n".into(), kind: kind.name().into() });
            }
        }
        Ok(grid)
    }

    /// Grid points with `d ≥ n`.
    pub fn flagged_points(&self) -> Vec<GridPoint> {
        self.grid.iter().copied().filter(|p| p.flagged()).collect()
    }

    /// The fields that determine the results of this kind of experiment.
    /// Output location, thread count and unused sections are excluded.
    pub fn semantic_value(&self) -> Value {
        let mut v = json!({
            "kind": self.kind,
            "seed": self.seed,
        });
        let obj = v.as_object_mut().expect("object literal");
        let mut put = |k: &str, val: Value| {
            obj.insert(k.into(), val);
        };
        match self.kind {
            ExperimentKind::BoundReport => {
                put("grid", json!(self.grid));
                put("bound", json!(self.bound));
                if self.bound.data.is_none() {
                    put("dgp", json!(self.dgp));
                }
            }
            ExperimentKind::DistanceGrid | ExperimentKind::Counterexample => {
                put("grid", json!(self.grid));
                put("dgp", json!(self.dgp));
                put(
                    "mc",
                    json!({
                        "samples": self.mc.samples,
                        "replicates": self.mc.replicates,
                        "estimator": self.mc.estimator,
                        "family": self.mc.family,
                    }),
                );
            }
            ExperimentKind::Coverage => {
                put("grid", json!(self.grid));
                put("dgp", json!(self.dgp));
                put("bootstrap", json!(self.bootstrap));
            }
            ExperimentKind::Anticoncentration => {
                put("anticonc", json!(self.anticonc));
                put("tol", json!(self.mc.tol));
            }
            ExperimentKind::RateFit => {
                put("ratefit", json!(self.ratefit));
            }
        }
        v
    }
}

impl Reader<'_> {
    fn usize_list_n(&self) -> Result<Option<Vec<usize>>> {
        self.with("grid", "n", |s| {
            let v = parse_n_list(s)?;
            if v.is_empty() {
                Err("empty list".into())
            } else {
                Ok(v)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_bound_report() {
        let cfg = parse_config("[experiment]\nkind = bound-report\n[grid]\nn = 100\nd = 5\n").unwrap();
        assert_eq!(cfg.kind, ExperimentKind::BoundReport);
        assert_eq!(cfg.grid, vec![GridPoint { n: 100, d: 5 }]);
        assert_eq!(cfg.seed, DEFAULT_SEED);
        assert_eq!(cfg.bound.mode, BoundMode::PlugIn);
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let err = parse_config("[experiment]\nkind = coverage\n\n[grid]\nfoo = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("`foo`"), "{msg}");
        assert!(msg.contains("line 5"), "{msg}");
        assert!(matches!(err, CliError::UnknownKey { location: Location::Line(5), .. }));
    }

    #[test]
    fn power_rule_expands_with_floor() {
        let cfg =
            parse_config("[experiment]\nkind = distance-grid\n[grid]\nn = 256, 1000, 2^12\nd = n^0.75\n").unwrap();
        // 1000^0.75 = 177.827...
        let ds: Vec<usize> = cfg.grid.iter().map(|p| p.d).collect();
        assert_eq!(ds, vec![64, 177, 512]);
    }

    #[test]
    fn power_range_and_rules() {
        let cfg = parse_config("[experiment]\nkind = distance-grid\n[grid]\nn = 2^8..2^10\nd = n\n").unwrap();
        assert_eq!(cfg.grid.iter().map(|p| (p.n, p.d)).collect::<Vec<_>>(), vec![(256, 256), (512, 512), (1024, 1024)]);
        assert_eq!(cfg.flagged_points().len(), 3);
        let cfg = parse_config("[experiment]\nkind = counterexample\n[grid]\nn = 1e4\n").unwrap();
        // √10⁴ / ln 10⁴ = 10.857...
        assert_eq!(cfg.grid, vec![GridPoint { n: 10_000, d: 10 }]);
        let cfg = parse_config("[experiment]\nkind = coverage\n[grid]\npairs = 500:20, 40:40\n").unwrap();
        assert_eq!(cfg.grid[1], GridPoint { n: 40, d: 40 });
        assert!(cfg.grid[1].flagged() && !cfg.grid[0].flagged());
    }

    #[test]
    fn syntax_and_semantic_errors() {
        let cases = [
            ("kind = coverage\n", "line 1"),
            ("[experiment]\nkind coverage\n", "line 2"),
            ("[experiment]\nkind = nope\n", "experiment.kind"),
            ("[nope]\n", "[nope]"),
            ("[experiment]\nkind = coverage\nkind = coverage\n", "duplicate"),
            ("[experiment]\nkind = coverage\n[grid]\nn = 10\nd = 1,2\n", "grid.d"),
            ("[experiment]\nkind = coverage\n[grid]\nn = 10\n", "grid.d"),
            ("[experiment]\nkind = anticoncentration\n", "anticonc.sigma"),
            ("[experiment]\nkind = coverage\n[grid]\nn = 10\nd = 2\n[bootstrap]\nalpha = 1.5\n", "bootstrap.alpha"),
            ("[experiment]\nkind = distance-grid\n[grid]\nn = 10\nd = 2\n[mc]\nsamples = many\n", "mc.samples"),
            ("[experiment]\nkind = rate-fit\n", "ratefit.input"),
        ];
        for (text, needle) in cases {
            let msg = parse_config(text).unwrap_err().to_string();
            assert!(msg.contains(needle), "{text:?} gave {msg}");
        }
    }

    #[test]
    fn overrides_replace_values() {
        let mut raw = RawConfig::parse("[experiment]\nkind = coverage\nseed = 3\n[grid]\nn = 10\nd = 2\n").unwrap();
        raw.set_dotted("experiment.seed=9").unwrap();
        raw.set("grid", "d", "3").unwrap();
        let cfg = ExperimentConfig::from_raw(&raw).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.grid[0].d, 3);
        assert!(matches!(
            raw.set_dotted("grid.foo=1"),
            Err(CliError::UnknownKey { location: Location::CommandLine, .. })
        ));
        assert!(raw.set_dotted("nodot").is_err());
    }

    #[test]
    fn sigma_sources() {
        assert_eq!(SigmaSource::parse("identity:3").unwrap(), SigmaSource::Identity(3));
        assert_eq!(SigmaSource::parse("diag:1, 2.5").unwrap(), SigmaSource::Diagonal(vec![1.0, 2.5]));
        assert!(SigmaSource::parse("identity:0").is_err());
        assert!(SigmaSource::parse("eye:3").is_err());
        assert_eq!(SigmaSource::Identity(2).load().unwrap(), SymMatrix::identity(2));
    }

    #[test]
    fn robust_floor_margin() {
        assert_eq!(robust_floor(63.999_999_999_99), 64.0);
        assert_eq!(robust_floor(63.9999), 63.0);
        assert_eq!(robust_floor(177.83), 177.0);
    }
}
