use nalgebra::DMatrix;
use proptest::prelude::*;
use robust4ws_core::analysis::{
    damping_surface, freq_response, h2_norm, hinf_norm, lyap_solve, sigma_max_complex, spectral_abscissa, sym_eigen,
};
use robust4ws_core::VehicleParams;

fn stable_matrix(v: &[f64], n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_row_slice(n, n, v);
    let shift = spectral_abscissa(&m) + 0.5;
    m - DMatrix::identity(n, n) * shift
}

/// Energy of the impulse response, integrated with RK4 on x' = A x.
fn impulse_energy(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    let h = 1e-3;
    let mut total = 0.0;
    for j in 0..b.ncols() {
        let mut x = b.column(j).into_owned();
        let mut t = 0.0;
        let mut prev = (c * &x).norm_squared();
        while t < 60.0 {
            let k1 = a * &x;
            let k2 = a * (&x + &k1 * (h / 2.0));
            let k3 = a * (&x + &k2 * (h / 2.0));
            let k4 = a * (&x + &k3 * h);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            let cur = (c * &x).norm_squared();
            total += 0.5 * h * (prev + cur);
            prev = cur;
            t += h;
        }
    }
    total
}

#[test]
fn h2_norm_matches_impulse_energy() {
    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, -3.0, -0.5]);
    let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.5]);
    let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 1.0]);
    let h2 = h2_norm(&a, &b, &c, &DMatrix::zeros(2, 1)).unwrap();
    let energy = impulse_energy(&a, &b, &c);
    assert!((h2 * h2 - energy).abs() < 1e-6 * energy, "{} vs {energy}", h2 * h2);
}

#[test]
fn damping_is_unity_on_real_poles_and_varies_over_the_grid() {
    let p = VehicleParams::nigel();
    let mu: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let v: Vec<f64> = (1..=20).map(|i| i as f64 * 0.25).collect();
    let s = damping_surface(&p, &mu, &v).unwrap();
    let zetas: Vec<f64> = s.zeta.iter().flatten().map(|z| *z.as_ref().unwrap()).collect();
    assert!(zetas.iter().all(|z| *z > 0.0 && *z <= 1.0));
    assert!(zetas.iter().any(|z| *z == 1.0));
    assert!(zetas.iter().any(|z| *z < 0.99));
    // the nominal speed sits in the over-damped region
    let s = damping_surface(&p, &[0.4], &[p.v]).unwrap();
    assert_eq!(*s.zeta[0][0].as_ref().unwrap(), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn jacobi_matches_reference_eigensolver(v in prop::collection::vec(-5.0f64..5.0, 25)) {
        let m = DMatrix::from_row_slice(5, 5, &v);
        let s = (&m + m.transpose()) * 0.5;
        let (vals, vecs) = sym_eigen(&s).unwrap();
        let mut reference: Vec<f64> = s.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        reference.sort_by(f64::total_cmp);
        for (a, b) in vals.iter().zip(&reference) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
        let resid = &s * &vecs - &vecs * DMatrix::from_diagonal(&vals);
        prop_assert!(resid.norm() < 1e-9 * (1.0 + s.norm()));
    }

    #[test]
    fn lyapunov_residual_vanishes(v in prop::collection::vec(-3.0f64..3.0, 9), q in prop::collection::vec(-1.0f64..1.0, 9)) {
        let a = stable_matrix(&v, 3);
        let qm = DMatrix::from_row_slice(3, 3, &q);
        let qs = &qm * qm.transpose() + DMatrix::identity(3, 3);
        let x = lyap_solve(&a, &qs).unwrap();
        let r = &a * &x + &x * a.transpose() + &qs;
        prop_assert!(r.norm() < 1e-9 * (1.0 + qs.norm()));
    }

    #[test]
    fn hinf_norm_bounds_a_frequency_sweep(v in prop::collection::vec(-3.0f64..3.0, 9), bc in prop::collection::vec(-1.0f64..1.0, 12)) {
        let a = stable_matrix(&v, 3);
        let b = DMatrix::from_row_slice(3, 2, &bc[..6]);
        let c = DMatrix::from_row_slice(2, 3, &bc[6..]);
        let d = DMatrix::zeros(2, 2);
        let norm = hinf_norm(&a, &b, &c, &d, 1e-9).unwrap();
        let mut sweep = sigma_max_complex(&freq_response(&a, &b, &c, &d, 0.0).unwrap());
        for i in 0..4000 {
            let w = 10f64.powf(-3.0 + 6.0 * i as f64 / 3999.0);
            sweep = sweep.max(sigma_max_complex(&freq_response(&a, &b, &c, &d, w).unwrap()));
        }
        prop_assert!(sweep <= norm * (1.0 + 1e-6));
        prop_assert!(norm <= sweep * 1.01, "norm {} sweep {}", norm, sweep);
    }
}
