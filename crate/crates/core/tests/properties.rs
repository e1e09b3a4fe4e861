use covert_core::finite_blocklength::{gaussian_cdf, inv_gaussian_cdf, lemma1_bound};
use covert_core::fock_oracle::{thermal_entropy_adaptive, TruncationConfig};
use covert_core::scalar_capacity::{ea_capacity, g_entropy, holevo_capacity, photon_budget};
use covert_core::symplectic_gaussian::{
    ea_variance_closed, omega, output_and_reference_cms, qre_variance_gaussian, symplectic_eigenvalues_numeric, symplectic_spectrum,
};
use covert_core::{BoundInputs, ChannelParams};
use nalgebra::{Matrix4, Vector4};
use proptest::prelude::*;

fn channel() -> impl Strategy<Value = ChannelParams> {
    (0.01f64..0.99, -2.0f64..1.5).prop_map(|(eta, lnb)| ChannelParams::new(eta, 10f64.powf(lnb)).unwrap())
}

fn signal() -> impl Strategy<Value = f64> {
    (-5.0f64..0.5).prop_map(|l| 10f64.powf(l))
}

proptest! {
    #[test]
    fn symplectic_invariants(c in channel(), s in signal()) {
        let (rho, sigma) = output_and_reference_cms(&c, s).unwrap();
        let om = omega();
        for cm in [&rho, &sigma] {
            let sp = symplectic_spectrum(cm).unwrap();
            let sm = sp.s_matrix;
            prop_assert!((sm * om * sm.transpose() - om).amax() < 1e-10);
            let d = Matrix4::from_diagonal(&Vector4::new(sp.lambdas[0], sp.lambdas[1], sp.lambdas[0], sp.lambdas[1]));
            let scale = cm.sigma().amax().max(1.0);
            prop_assert!((sm * d * sm.transpose() - cm.sigma()).amax() < 1e-10 * scale);
            prop_assert!(sp.lambdas[1] >= 0.5 - 1e-12);
            let num = symplectic_eigenvalues_numeric(cm.sigma()).unwrap();
            let mut closed = sp.lambdas;
            closed.sort_by(|a, b| b.total_cmp(a));
            prop_assert!((num[0] - closed[0]).abs() < 1e-8 * scale && (num[1] - closed[1]).abs() < 1e-8 * scale);
        }
    }

    #[test]
    fn closed_variance_matches_general(c in channel(), s in signal()) {
        let (rho, sigma) = output_and_reference_cms(&c, s).unwrap();
        let general = qre_variance_gaussian(&rho, &sigma).unwrap();
        let closed = ea_variance_closed(&c, s).unwrap();
        prop_assert!((general / closed - 1.0).abs() < 1e-8, "{} vs {}", general, closed);
    }

    #[test]
    fn capacities_ordered_and_increasing(c in channel(), s in signal()) {
        let h = holevo_capacity(&c, s).unwrap();
        let e = ea_capacity(&c, s).unwrap();
        prop_assert!(h > 0.0 && e > h);
        prop_assert!(holevo_capacity(&c, 2.0 * s).unwrap() > h);
        prop_assert!(ea_capacity(&c, 2.0 * s).unwrap() > e);
    }

    #[test]
    fn budget_square_root_law(c in channel(), n in 1u64..1_000_000_000) {
        let a = photon_budget(&c, 1.0, n).unwrap().nbar_s;
        let b = photon_budget(&c, 1.0, 4 * n).unwrap().nbar_s;
        prop_assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lemma1_linear_in_d(d1 in -2.0f64..2.0, d2 in -2.0f64..2.0, v in 0.01f64..5.0, q in 0.0f64..50.0, eps in 0.01f64..0.99, n in 1u64..100_000) {
        let m = |d: f64| lemma1_bound(&BoundInputs::new(d, v, q, eps, n).unwrap()).unwrap().m_lower;
        let lhs = m(d1) + m(d2) - m(0.0);
        let rhs = m(d1 + d2);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs() + (n as f64) * (d1.abs() + d2.abs())));
    }

    #[test]
    fn inverse_cdf_round_trip(p in 1e-12f64..(1.0 - 1e-12)) {
        let x = inv_gaussian_cdf(p).unwrap();
        prop_assert!((gaussian_cdf(x) - p).abs() < 1e-10);
        prop_assert!((x + inv_gaussian_cdf(1.0 - p).unwrap()).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn thermal_entropy_matches_g(nbar in 0.01f64..3.0) {
        let s = thermal_entropy_adaptive(nbar, &TruncationConfig::default()).unwrap();
        prop_assert!((s.value - g_entropy(nbar).unwrap()).abs() < 1e-8);
    }
}
