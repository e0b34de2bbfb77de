//! Numerical toolkit for Gaussian approximation of sums of independent
//! (or `m`-dependent) random vectors on balls and convex sets: spectral
//! functionals of covariance matrices, error-bound functionals, exact
//! Gaussian ball probabilities, data-generating processes, Monte Carlo
//! distance estimation and bootstrap coverage.

pub mod bootstrap;
pub mod bounds;
pub mod dataset;
pub mod dgp;
pub mod error;
pub mod gaussball;
pub mod mc;
pub mod ratefit;
pub mod rng;
pub mod special;
pub mod spectral;

pub use bootstrap::{BootstrapKind, BootstrapRun, CoverageResult, OpNormDelta};
pub use bounds::{Ball2Deltas, BoundReport, CovInfo, MomentBasis, MomentSummary};
pub use dataset::{Dataset, Provenance, ScaleConvention};
pub use dgp::{DgpKind, DgpSpec, Marginal, MultiplierDist, NagaevParams, WSampler};
pub use error::{Error, Result};
pub use gaussball::{CdfValue, NormSqLaw, WeightedChiSquare};
pub use mc::{DistanceEstimate, DistanceFamily};
pub use ratefit::RateFit;
pub use spectral::{SpectralSummary, SymMatrix};
