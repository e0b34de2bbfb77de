use hdgauss_core::bootstrap::bootstrap_quantile;
use hdgauss_core::bounds::{
    delta_ball, delta_convex, delta_functionals_ball2, estimate_cov_info, estimate_moments, estimate_whitened_moments,
    psi, rhs_ball2, summand_gram, Ball2Deltas,
};
use hdgauss_core::dataset::{Dataset, ScaleConvention};
use hdgauss_core::spectral::{kappa, lambda_k, sym_eigen, SymMatrix};
use proptest::prelude::*;

/// Orthogonal matrix from Gram-Schmidt on a random square matrix.
fn orthogonal(d: usize, raw: &[f64]) -> Vec<f64> {
    let mut q = raw[..d * d].to_vec();
    for j in 0..d {
        for k in 0..j {
            let dot: f64 = (0..d).map(|i| q[i * d + j] * q[i * d + k]).sum();
            for i in 0..d {
                q[i * d + j] -= dot * q[i * d + k];
            }
        }
        let norm: f64 = (0..d).map(|i| q[i * d + j].powi(2)).sum::<f64>().sqrt();
        for i in 0..d {
            q[i * d + j] /= norm;
        }
    }
    q
}

fn rotate_rows(data: &Dataset, u: &[f64]) -> Dataset {
    let d = data.d();
    let mut out = Vec::with_capacity(data.n() * d);
    for row in data.rows() {
        for i in 0..d {
            out.push((0..d).map(|k| u[i * d + k] * row[k]).sum());
        }
    }
    Dataset::new(data.n(), d, out, data.scale()).unwrap()
}

fn spd(d: usize, raw: &[f64]) -> SymMatrix {
    // A Aᵀ + 0.5 I.
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            m[i * d + j] =
                (0..d).map(|k| raw[i * d + k] * raw[j * d + k]).sum::<f64>() + if i == j { 0.5 } else { 0.0 };
        }
    }
    SymMatrix::new(d, m).unwrap()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

fn instance() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..6, 3usize..12).prop_flat_map(|(d, n)| {
        (
            Just(d),
            Just(n),
            prop::collection::vec(-2.0f64..2.0, n * d),
            prop::collection::vec(-1.0f64..1.0, d * d),
            prop::collection::vec(-1.0f64..1.0, d * d),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn rhs_ball2_is_scale_invariant((d, n, rows, a, _) in instance(), c in 0.05f64..20.0) {
        let data = Dataset::new(n, d, rows, ScaleConvention::RawXi).unwrap();
        let sigma = spd(d, &a);
        let eval = |data: &Dataset, sigma: &SymMatrix| {
            let m = estimate_moments(data).unwrap();
            let cov = estimate_cov_info(data, sigma).unwrap();
            let s = sym_eigen(sigma, 1e-13).unwrap();
            let sw = sym_eigen(&cov.sigma_w, 1e-13).unwrap();
            let dl = delta_functionals_ball2(&m, &cov, &sw, &s).unwrap();
            let k = kappa(&s).unwrap();
            (k, dl)
        };
        let (k, dl) = eval(&data, &sigma);
        let scaled = Dataset::new(n, d, data.as_slice().iter().map(|v| c * v).collect(), ScaleConvention::RawXi).unwrap();
        let (kc, dlc) = eval(&scaled, &sigma.scale(c * c));
        // κ(c²Σ) = c^{-2} κ(Σ) and the δ's scale as (c⁴, c², c⁶, c⁴).
        prop_assert!(rel_close(kc, k / (c * c), 1e-12));
        prop_assert!(rel_close(dlc.delta1, dl.delta1 * c.powi(6), 1e-10));
        prop_assert!(rel_close(dlc.delta2, dl.delta2 * c.powi(4), 1e-10));
        prop_assert!(rel_close(dlc.delta0, dl.delta0 * c.powi(4), 1e-9) || dl.delta0 < 1e-300);
        prop_assert!(rel_close(dlc.delta0p, dl.delta0p * c.powi(2), 1e-9) || dl.delta0p < 1e-300);
        // With the exactly scaled inputs every term is unchanged.
        let exact = Ball2Deltas {
            delta0: dl.delta0 * c.powi(4),
            delta0p: dl.delta0p * c.powi(2),
            delta1: dl.delta1 * c.powi(6),
            delta2: dl.delta2 * c.powi(4),
        };
        prop_assert!(rel_close(rhs_ball2(k / (c * c), &exact), rhs_ball2(k, &dl), 1e-12));
    }

    #[test]
    fn ball_functionals_are_rotation_invariant((d, n, rows, a, q) in instance()) {
        let data = Dataset::new(n, d, rows, ScaleConvention::RawXi).unwrap();
        let sigma = spd(d, &a);
        let u = orthogonal(d, &q);
        let rotated = rotate_rows(&data, &u);
        let rsigma = sigma.conjugate(&u);
        let eval = |data: &Dataset, sigma: &SymMatrix| {
            let m = estimate_moments(data).unwrap();
            let cov = estimate_cov_info(data, sigma).unwrap();
            let s = sym_eigen(sigma, 1e-13).unwrap();
            let sw = sym_eigen(&cov.sigma_w, 1e-13).unwrap();
            (delta_ball(&m, &cov, &s).unwrap(), delta_functionals_ball2(&m, &cov, &sw, &s).unwrap())
        };
        let (b1, f1) = eval(&data, &sigma);
        let (b2, f2) = eval(&rotated, &rsigma);
        prop_assert!(rel_close(b1, b2, 1e-10));
        prop_assert!(rel_close(f1.delta0, f2.delta0, 1e-10));
        prop_assert!(rel_close(f1.delta1, f2.delta1, 1e-10));
        prop_assert!(rel_close(f1.delta2, f2.delta2, 1e-10));
    }

    #[test]
    fn spectral_functionals_are_rotation_invariant((d, _n, _rows, a, q) in instance()) {
        let m = spd(d, &a);
        let u = orthogonal(d, &q);
        let s1 = sym_eigen(&m, 1e-13).unwrap();
        let s2 = sym_eigen(&m.conjugate(&u), 1e-13).unwrap();
        let tol = 1e-10 * m.hs_norm();
        for k in [1, 2] {
            prop_assert!((lambda_k(&s1, k).unwrap() - lambda_k(&s2, k).unwrap()).abs() <= tol);
        }
        prop_assert!(rel_close(kappa(&s1).unwrap(), kappa(&s2).unwrap(), 1e-10));
        prop_assert!((s1.op_norm - s2.op_norm).abs() <= tol);
        prop_assert!((s1.trace - s2.trace).abs() <= tol);
    }

    #[test]
    fn plug_in_moments_respect_cauchy_schwarz((d, n, rows, _, _) in instance()) {
        let data = Dataset::new(n, d, rows, ScaleConvention::XOverSqrtN).unwrap();
        let m = estimate_moments(&data).unwrap();
        prop_assert!(m.sum3 <= (m.sum2 * m.sum4).sqrt());
    }

    #[test]
    fn leave_one_out_delta_convex((d, n, rows, _, _) in instance(), drop in 0usize..1000) {
        let data = Dataset::new(n, d, rows, ScaleConvention::RawXi).unwrap();
        // Σ = plug-in Var(W), so the full sum has zero whitening gap.
        let sigma = summand_gram(&data);
        prop_assume!(sym_eigen(&sigma, 1e-13).unwrap().min_eigenvalue() > 1e-6);
        let full = {
            let w = estimate_whitened_moments(&data, &sigma).unwrap();
            delta_convex(&w, &estimate_cov_info(&data, &sigma).unwrap()).unwrap()
        };
        let i = drop % n;
        let kept: Vec<f64> = data.rows().enumerate().filter(|(k, _)| *k != i).flat_map(|(_, r)| r.to_vec()).collect();
        let loo = Dataset::new(n - 1, d, kept, ScaleConvention::RawXi).unwrap();
        let w = estimate_whitened_moments(&loo, &sigma).unwrap();
        let part = delta_convex(&w, &estimate_cov_info(&loo, &sigma).unwrap()).unwrap();
        prop_assert!(part <= 2f64.sqrt() * full * (1.0 + 1e-10), "{part} vs {full}");
    }

    #[test]
    fn quantile_nonincreasing_in_alpha(values in prop::collection::vec(0.0f64..10.0, 1..40), a in 0.01f64..0.98, da in 0.0f64..0.5) {
        let b = (a + da).min(0.99);
        prop_assert!(bootstrap_quantile(&values, b).unwrap() <= bootstrap_quantile(&values, a).unwrap());
    }
}

#[test]
fn psi_monotone_and_scaling_inequality_on_grid() {
    let xs: Vec<f64> = (0..1000).map(|i| 10f64.powf(-6.0 + 10.0 * i as f64 / 999.0)).collect();
    for w in xs.windows(2) {
        assert!(psi(w[1]).unwrap() > psi(w[0]).unwrap());
    }
    for (k, &x) in xs.iter().enumerate() {
        let c = 1.0 + 50.0 * ((k * 7919) % 1000) as f64 / 1000.0;
        let lhs = psi(c * x).unwrap();
        let rhs = (c + psi(c).unwrap()) * psi(x).unwrap();
        assert!(lhs <= rhs * (1.0 + 1e-12), "c={c} x={x}: {lhs} > {rhs}");
    }
}
