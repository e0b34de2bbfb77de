//! Symmetric-matrix spectral computations: eigendecomposition by cyclic
//! Jacobi rotations, the tail norms `Λ_k`, the anti-concentration scale
//! `κ = (Λ_1 Λ_2)^{-1/2}`, inverse square roots and whitening.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Hard cap on Jacobi sweeps.
pub const MAX_SWEEPS: usize = 100;

/// Eigenvalues within this multiple of `Λ_1` are treated as exact zeros.
pub const ZERO_EIGEN_REL: f64 = 1e-12;

/// A dense real symmetric matrix stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl SymMatrix {
    /// Builds a matrix from row-major entries, symmetrizing by averaging
    /// mirrored entries.
    pub fn new(dim: usize, mut entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Contract("matrix dimension must be at least 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::Contract(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("matrix entries must be finite".into()));
        }
        for j in 0..dim {
            for k in (j + 1)..dim {
                let avg = 0.5 * (entries[j * dim + k] + entries[k * dim + j]);
                entries[j * dim + k] = avg;
                entries[k * dim + j] = avg;
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Contract("matrix rows must form a square array".into()));
        }
        Self::new(dim, rows.concat())
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut entries = vec![0.0; dim * dim];
        for (j, &v) in diag.iter().enumerate() {
            entries[j * dim + j] = v;
        }
        Self { dim, entries }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: vec![0.0; dim * dim] }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.entries[j * self.dim + k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|j| self.get(j, j)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|j| self.get(j, j)).sum()
    }

    pub fn hs_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { dim: self.dim, entries: self.entries.iter().map(|v| c * v).collect() }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self { dim: self.dim, entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a - b).collect() })
    }

    /// True when the matrix is `c·I` for some `c`; returns `c`.
    pub fn as_scalar_identity(&self) -> Option<f64> {
        let c = self.get(0, 0);
        for j in 0..self.dim {
            for k in 0..self.dim {
                let expected = if j == k { c } else { 0.0 };
                if self.get(j, k) != expected {
                    return None;
                }
            }
        }
        Some(c)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim);
        self.entries.chunks_exact(self.dim).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    /// `U·M·Uᵀ` for a row-major `dim×dim` matrix `U`.
    pub fn conjugate(&self, u: &[f64]) -> Self {
        let d = self.dim;
        assert_eq!(u.len(), d * d);
        let mut um = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let uik = u[i * d + k];
                if uik == 0.0 {
                    continue;
                }
                for j in 0..d {
                    um[i * d + j] += uik * self.entries[k * d + j];
                }
            }
        }
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = (0..d).map(|k| um[i * d + k] * u[j * d + k]).sum();
            }
        }
        Self::new(d, out).expect("conjugation preserves shape")
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::Contract(format!("dimension mismatch: {} vs {}", self.dim, other.dim)));
        }
        Ok(())
    }

    /// Row-major CSV with a leading `dim=d` header line.
    pub fn to_csv(&self) -> String {
        let mut out = format!("dim={}\n", self.dim);
        for row in self.entries.chunks_exact(self.dim) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty matrix CSV".into()))?;
        let dim: usize = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("expected header `dim=<d>`, found `{header}`")))?;
        let mut entries = Vec::with_capacity(dim * dim);
        for (row, line) in lines.enumerate() {
            let values: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("matrix row {}: {e}", row + 1)))?;
            if values.len() != dim {
                return Err(Error::Parse(format!(
                    "matrix row {} has {} entries, expected {dim}",
                    row + 1,
                    values.len()
                )));
            }
            entries.extend(values);
        }
        Self::new(dim, entries)
    }
}

/// Eigen-summary of a symmetric matrix. Eigenvalues are sorted in
/// nonincreasing order and `basis` holds the matching orthonormal
/// eigenvectors as columns (row-major storage).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub eigenvalues: Vec<f64>,
    pub basis: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub kappa: Option<f64>,
    pub trace: f64,
    pub op_norm: f64,
    pub hs_norm: f64,
}

impl SpectralSummary {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Smallest eigenvalue `λ_d`.
    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("nonempty spectrum")
    }

    /// Column `j` of the eigenbasis.
    pub fn eigenvector(&self, j: usize) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|i| self.basis[i * d + j]).collect()
    }

    /// `basis · diag(f(λ)) · basisᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let d = self.dim();
        let mapped: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let mut acc = 0.0;
                for (k, &m) in mapped.iter().enumerate() {
                    acc += self.basis[i * d + k] * m * self.basis[j * d + k];
                }
                out[i * d + j] = acc;
                out[j * d + i] = acc;
            }
        }
        SymMatrix { dim: d, entries: out }
    }
}

/// Eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps stop once the off-diagonal Hilbert-Schmidt mass drops below
/// `tol·(1+‖m‖_HS)/2`, or when a full sweep performs no rotation.
pub fn sym_eigen(m: &SymMatrix, tol: f64) -> Result<SpectralSummary> {
    if !(tol >= 1e-14) {
        return Err(Error::Domain(format!("eigensolver tolerance {tol:e} below 1e-14")));
    }
    let d = m.dim;
    let hs = m.hs_norm();
    let threshold = 0.5 * tol * (1.0 + hs);
    let mut a = m.entries.clone();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }

    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                s += 2.0 * a[p * d + q] * a[p * d + q];
            }
        }
        s.sqrt()
    };

    let mut converged = off_norm(&a) <= threshold;
    let mut sweep = 0;
    while !converged {
        if sweep == MAX_SWEEPS {
            return Err(Error::NonConvergence { dim: d, sweeps: MAX_SWEEPS });
        }
        sweep += 1;
        let mut rotated = false;
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                // Negligible relative to both diagonal entries: drop it.
                if sweep > 4 && app.abs() + 1e3 * apq.abs() == app.abs() && aqq.abs() + 1e3 * apq.abs() == aqq.abs() {
                    a[p * d + q] = 0.0;
                    a[q * d + p] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                a[p * d + q] = 0.0;
                a[q * d + p] = 0.0;
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
        converged = !rotated || off_norm(&a) <= threshold;
    }

    // Stable sort keeps the original index order on ties.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[j * d + j].total_cmp(&a[i * d + i]));
    let mut eigenvalues: Vec<f64> = order.iter().map(|&i| a[i * d + i]).collect();
    let mut basis = vec![0.0; d * d];
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..d {
            basis[row * d + new_col] = v[row * d + old_col];
        }
    }

    let lambda1_raw = eigenvalues.iter().map(|l| l * l).sum::<f64>().sqrt();
    for l in eigenvalues.iter_mut() {
        if l.abs() <= ZERO_EIGEN_REL * lambda1_raw {
            *l = 0.0;
        }
    }
    Ok(summarize(eigenvalues, basis, hs))
}

fn summarize(eigenvalues: Vec<f64>, basis: Vec<f64>, hs_norm: f64) -> SpectralSummary {
    let lambda1 = tail_norm(&eigenvalues, 1);
    let lambda2 = tail_norm(&eigenvalues, 2);
    let kappa = (lambda2 > 0.0).then(|| (lambda1 * lambda2).powf(-0.5));
    SpectralSummary {
        trace: eigenvalues.iter().sum(),
        op_norm: eigenvalues.iter().fold(0.0_f64, |acc, l| acc.max(l.abs())),
        eigenvalues,
        basis,
        lambda1,
        lambda2,
        kappa,
        hs_norm,
    }
}

fn tail_norm(eigenvalues: &[f64], k: usize) -> f64 {
    eigenvalues.iter().skip(k - 1).map(|l| l * l).sum::<f64>().sqrt()
}

/// `Λ_k = sqrt(Σ_{j≥k} λ_j²)` for `k ∈ {1, 2}` (1-based, descending order).
pub fn lambda_k(s: &SpectralSummary, k: usize) -> Result<f64> {
    match k {
        1 => Ok(s.lambda1),
        2 if s.dim() >= 2 => Ok(s.lambda2),
        2 => Err(Error::UndefinedRank { k, dim: s.dim() }),
        _ => Err(Error::Domain(format!("Lambda_k is only defined for k in {{1, 2}}, got {k}"))),
    }
}

/// `κ = (Λ_1 Λ_2)^{-1/2}`; requires `Λ_2 > 0`.
pub fn kappa(s: &SpectralSummary) -> Result<f64> {
    s.kappa.ok_or_else(|| {
        Error::RankDeficient(format!("Lambda_2 = 0 for a {}x{} matrix, kappa is undefined", s.dim(), s.dim()))
    })
}

/// `(m + ridge·I)^{-1/2}` through the eigendecomposition.
pub fn inv_sqrt(m: &SymMatrix, ridge: f64) -> Result<SymMatrix> {
    if !(ridge >= 0.0) {
        return Err(Error::Domain(format!("ridge must be nonnegative, got {ridge}")));
    }
    let s = sym_eigen(m, 1e-14)?;
    inv_sqrt_from(&s, ridge)
}

pub fn inv_sqrt_from(s: &SpectralSummary, ridge: f64) -> Result<SymMatrix> {
    if let Some(&bad) = s.eigenvalues.iter().find(|&&l| l + ridge <= 0.0) {
        return Err(Error::Singular { eigenvalue: bad + ridge });
    }
    Ok(s.reconstruct_with(|l| 1.0 / (l + ridge).sqrt()))
}

/// Multiplies every row by `target^{-1/2}`, where `target` is the exact
/// covariance of the row sum.
pub fn whiten(data: &Dataset, target: &SymMatrix) -> Result<Dataset> {
    if target.dim() != data.d() {
        return Err(Error::Contract(format!(
            "whitening target is {0}x{0} but data has d = {1}",
            target.dim(),
            data.d()
        )));
    }
    let w = inv_sqrt(target, 0.0)?;
    let d = data.d();
    let mut rows = vec![0.0; data.n() * d];
    for (out, row) in rows.chunks_exact_mut(d).zip(data.rows()) {
        for (j, o) in out.iter_mut().enumerate() {
            // w is symmetric, so row·w == w·row.
            *o = (0..d).map(|k| row[k] * w.get(k, j)).sum();
        }
    }
    Ok(data.with_rows(rows))
}
