//! Property tests for invariants that should hold on any valid input, not
//! just the hand-picked cases in the unit suites.

use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use sqz::fock::{fock_moments, kerr_density_matrix_auto, kerr_variances, CoherentSpec, KerrCoupling};
use sqz::modes::{coherency_from_quadratures, covariance, principal_modes, QuadratureSamples};
use sqz::sigproc::{nrm_filter, DelayTrace};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The closed-form quadrature variances and the truncated Fock route
    /// describe the same state, so they must agree wherever the truncation
    /// captures the photon distribution.
    #[test]
    fn closed_form_and_fock_trace_variances_agree(
        alpha in 0.2f64..1.6,
        chi_bar in -0.06f64..0.06,
    ) {
        let spec = CoherentSpec::real(alpha).unwrap();
        let chi = KerrCoupling::new(chi_bar).unwrap();
        let closed = kerr_variances(&spec, chi).unwrap();
        let traced = fock_moments(&kerr_density_matrix_auto(&spec, chi).unwrap())
            .quadrature_stats();
        prop_assert!((closed.var_x - traced.var_x).abs() <= 1e-8);
        prop_assert!((closed.var_p - traced.var_p).abs() <= 1e-8);
        prop_assert!((closed.mean_x - traced.mean_x).abs() <= 1e-8);
        prop_assert!((closed.mean_p - traced.mean_p).abs() <= 1e-8);
    }

    /// The low-pass filter is a spectral projection: applying it twice is the
    /// same as once, and it commutes with linear combinations.
    #[test]
    fn low_pass_filter_is_an_idempotent_linear_projection(
        first in prop::collection::vec(-3.0f64..3.0, 64),
        second in prop::collection::vec(-3.0f64..3.0, 64),
        weight in -2.0f64..2.0,
    ) {
        let period = 2.6952;
        let omega0 = 2.0 * std::f64::consts::PI / period;
        let tau: Vec<f64> = (0..first.len()).map(|k| k as f64 * period / 8.0).collect();
        let y = DelayTrace { tau_grid: tau.clone(), values: first };
        let z = DelayTrace { tau_grid: tau.clone(), values: second };
        let fy = nrm_filter(&y, omega0, 1.2).unwrap();
        let fz = nrm_filter(&z, omega0, 1.2).unwrap();
        let ffy = nrm_filter(&fy, omega0, 1.2).unwrap();
        for (a, b) in ffy.values.iter().zip(&fy.values) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        let combined = DelayTrace {
            tau_grid: tau,
            values: y.values.iter().zip(&z.values).map(|(a, b)| a + weight * b).collect(),
        };
        let fc = nrm_filter(&combined, omega0, 1.2).unwrap();
        for ((c, a), b) in fc.values.iter().zip(&fy.values).zip(&fz.values) {
            prop_assert!((c - (a + weight * b)).abs() <= 1e-10);
        }
    }

    /// A symmetric-ordered coherency matrix built from raw second moments is
    /// a Gram matrix: Hermitian, positive semidefinite, and its principal
    /// occupations sum to its trace.
    #[test]
    fn symmetric_coherency_is_positive_with_descending_occupations(
        seed in 0u64..1u64 << 32,
        n_modes in 2usize..5,
        n_shots in 8usize..40,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x = Array2::from_shape_fn((n_modes, n_shots), |_| normal.sample(&mut rng) + 0.3);
        let p = Array2::from_shape_fn((n_modes, n_shots), |_| normal.sample(&mut rng) - 0.1);
        let samples = QuadratureSamples {
            mode_labels: (0..n_modes).map(|i| i as f64).collect(),
            x,
            p,
        };
        let raw = covariance(&samples, false).unwrap();
        let gamma = coherency_from_quadratures(&raw, false).unwrap();
        prop_assert!(gamma.hermiticity_defect() <= 1e-10);
        let decomposition = principal_modes(&gamma).unwrap();
        for pair in decomposition.eigenvalues.windows(2) {
            prop_assert!(pair[0] >= pair[1] - 1e-12);
        }
        let scale = decomposition.eigenvalues[0].abs().max(1.0);
        prop_assert!(*decomposition.eigenvalues.last().unwrap() >= -1e-10 * scale);
        let total: f64 = decomposition.eigenvalues.iter().sum();
        prop_assert!((total - gamma.trace()).abs() <= 1e-9 * scale);
    }
}
