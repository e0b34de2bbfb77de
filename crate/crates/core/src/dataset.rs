//! In-memory `n×d` datasets of summand vectors and their on-disk form:
//! little-endian `f64` row-major binary plus a JSON sidecar.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dgp::DgpSpec;
use crate::error::{Error, Result};

/// How rows relate to the summands `ξ_i` of `W = Σ ξ_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleConvention {
    /// Rows are the summands `ξ_i` themselves.
    RawXi,
    /// Rows are raw observations `X_i`; the summands are `X_i/√n`.
    XOverSqrtN,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dgp: DgpSpec,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    values: Vec<f64>,
    scale: ScaleConvention,
    provenance: Option<Provenance>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format: String,
    n: usize,
    d: usize,
    scale: ScaleConvention,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    dgp: Option<DgpSpec>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    seed: Option<u64>,
}

const FORMAT_TAG: &str = "f64-le-row-major";

impl Dataset {
    pub fn new(n: usize, d: usize, values: Vec<f64>, scale: ScaleConvention) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Data(format!("dataset must be nonempty, got {n}x{d}")));
        }
        if values.len() != n * d {
            return Err(Error::Data(format!("expected {} values for a {n}x{d} dataset, got {}", n * d, values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        Ok(Self { n, d, values, scale, provenance: None })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    /// Same shape, scale and provenance with replaced row values.
    pub(crate) fn with_rows(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.n * self.d);
        Self { values, ..self.clone() }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn scale(&self) -> ScaleConvention {
        self.scale
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    /// Factor turning a stored row into the summand `ξ_i`.
    pub fn summand_factor(&self) -> f64 {
        match self.scale {
            ScaleConvention::RawXi => 1.0,
            ScaleConvention::XOverSqrtN => 1.0 / (self.n as f64).sqrt(),
        }
    }

    /// Factor turning a stored row into the raw observation `X_i = √n ξ_i`.
    pub fn raw_factor(&self) -> f64 {
        match self.scale {
            ScaleConvention::RawXi => (self.n as f64).sqrt(),
            ScaleConvention::XOverSqrtN => 1.0,
        }
    }

    /// The rows as summands `ξ_i`, tagged `raw-xi`.
    pub fn to_summands(&self) -> Dataset {
        let f = self.summand_factor();
        Self { values: self.values.iter().map(|v| v * f).collect(), scale: ScaleConvention::RawXi, ..self.clone() }
    }

    /// The rows as raw observations `X_i`, tagged `x-over-sqrt-n`.
    pub fn to_raw(&self) -> Dataset {
        let f = self.raw_factor();
        Self { values: self.values.iter().map(|v| v * f).collect(), scale: ScaleConvention::XOverSqrtN, ..self.clone() }
    }

    /// `W = Σ_i ξ_i`.
    pub fn sum(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.d];
        for row in self.rows() {
            for (acc, v) in w.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let f = self.summand_factor();
        w.iter_mut().for_each(|v| *v *= f);
        w
    }

    /// Writes `<stem>.bin` and `<stem>.json`.
    pub fn write(&self, stem: &Path) -> Result<()> {
        let (bin, json) = paths(stem);
        let mut out = BufWriter::new(fs::File::create(&bin)?);
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        let sidecar = Sidecar {
            format: FORMAT_TAG.into(),
            n: self.n,
            d: self.d,
            scale: self.scale,
            dgp: self.provenance.as_ref().map(|p| p.dgp.clone()),
            seed: self.provenance.as_ref().map(|p| p.seed),
        };
        fs::write(json, serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn read(stem: &Path) -> Result<Self> {
        let (bin, json) = paths(stem);
        let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(json)?)?;
        if sidecar.format != FORMAT_TAG {
            return Err(Error::Parse(format!("unknown dataset format `{}`", sidecar.format)));
        }
        let mut bytes = Vec::new();
        fs::File::open(&bin)?.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * sidecar.n * sidecar.d {
            return Err(Error::Parse(format!(
                "{} holds {} bytes, expected {}",
                bin.display(),
                bytes.len(),
                8 * sidecar.n * sidecar.d
            )));
        }
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        let mut ds = Self::new(sidecar.n, sidecar.d, values, sidecar.scale)?;
        if let (Some(dgp), Some(seed)) = (sidecar.dgp, sidecar.seed) {
            ds.provenance = Some(Provenance { dgp, seed });
        }
        Ok(ds)
    }
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_conversions() {
        let raw = Dataset::new(4, 1, vec![2.0, -2.0, 4.0, 0.0], ScaleConvention::XOverSqrtN).unwrap();
        let xi = raw.to_summands();
        assert_eq!(xi.as_slice(), &[1.0, -1.0, 2.0, 0.0]);
        assert_eq!(xi.to_raw().as_slice(), raw.as_slice());
        assert_eq!(raw.sum(), vec![2.0]);
        assert_eq!(xi.sum(), vec![2.0]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Dataset::new(0, 2, vec![], ScaleConvention::RawXi).is_err());
        assert!(Dataset::new(2, 2, vec![1.0; 3], ScaleConvention::RawXi).is_err());
        assert!(Dataset::new(1, 1, vec![f64::NAN], ScaleConvention::RawXi).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("sample");
        let ds = Dataset::new(2, 3, vec![0.1, -2.5, 3.0, 1e-300, 7.0, -0.0], ScaleConvention::RawXi).unwrap();
        ds.write(&stem).unwrap();
        let back = Dataset::read(&stem).unwrap();
        assert_eq!(back, ds);
        assert_eq!(std::fs::metadata(stem.with_extension("bin")).unwrap().len(), 48);
    }
}
