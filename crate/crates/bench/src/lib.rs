//! Benchmark fixtures shared by the criterion targets.

use hdgauss_core::SymMatrix;

/// Deterministic dense SPD matrix `A Aᵀ/d + I` with entries of `A` drawn
/// from a fixed linear congruential sequence.
pub fn spd_fixture(d: usize) -> SymMatrix {
    let mut state: u64 = 0x2545_F491_4F6C_DD1D;
    let mut next = || {
        state = state.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1_442_695_040_888_963_407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let a: Vec<f64> = (0..d * d).map(|_| next()).collect();
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let dot: f64 = (0..d).map(|k| a[i * d + k] * a[j * d + k]).sum();
            m[i * d + j] = dot / d as f64 + if i == j { 1.0 } else { 0.0 };
        }
    }
    SymMatrix::new(d, m).expect("finite fixture")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_symmetric_positive_definite() {
        let m = spd_fixture(6);
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
        let s = hdgauss_core::spectral::sym_eigen(&m, 1e-12).unwrap();
        assert!(s.min_eigenvalue() >= 1.0 - 1e-9);
    }
}
