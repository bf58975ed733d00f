//! Property tests of the structural invariants.

use std::f64::consts::PI;

use proptest::prelude::*;

use nlslab::dispersion::{omega, omega_prime, qhat};
use nlslab::harness::artifacts::{table_bytes, CarrierPhaseRow};
use nlslab::harness::ExperimentConfig;
use nlslab::nls::split_step;
use nlslab::normal_form::{alpha, random_real_spectrum, NormalForm, Theta, SIGNS};
use nlslab::poisson::solve_phi;
use nlslab::spectral_core::convolve;
use nlslab::{Field, PeriodicGrid, Spectrum, C64};

fn grid() -> PeriodicGrid {
    PeriodicGrid::new(40.0 * PI, 256).unwrap()
}

fn max_diff(a: &Spectrum, b: &Spectrum) -> f64 {
    a.coef().iter().zip(b.coef()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fourier_round_trip(seed in any::<u64>()) {
        let s = random_real_spectrum(grid(), seed, 100, |_| true);
        let back = s.to_field().spectrum().clone();
        prop_assert!(max_diff(&s, &back) < 1e-14);
        prop_assert!(s.to_field().imag_residue() < 1e-14);
    }

    #[test]
    fn parseval(seed in any::<u64>()) {
        let s = random_real_spectrum(grid(), seed, 100, |_| true);
        let f = s.to_field();
        prop_assert!((f.l2_norm() - s.l2_norm()).abs() <= 1e-12 * s.l2_norm().max(1e-300));
    }

    #[test]
    fn dispersion_symmetry_and_speed_bounds(k in -50.0f64..50.0) {
        prop_assert!((omega(-k) + omega(k)).abs() < 1e-14);
        prop_assert!((omega_prime(-k) - omega_prime(k)).abs() < 1e-14);
        prop_assert!(omega_prime(k) > 0.0);
        let q = qhat(k);
        prop_assert!((1.0..=2f64.sqrt() + 1e-15).contains(&q));
    }

    #[test]
    fn projections_partition_and_weight_inverts(eps in 0.01f64..0.2, delta in 0.02f64..0.3, seed in any::<u64>()) {
        let nf = NormalForm::new(1.0, eps, delta.min(0.45)).unwrap();
        let s = random_real_spectrum(grid(), seed, 120, |_| true);
        let sum = nf.p0(&s).add(&nf.p1(&s)).unwrap();
        prop_assert!(max_diff(&sum, &s) == 0.0);
        let back = nf.theta_inv_mul(&nf.theta_mul(&s));
        prop_assert!(max_diff(&back, &s) < 1e-13);
    }

    #[test]
    fn weight_is_continuous_and_bounded(eps in 0.01f64..1.0, delta in 0.01f64..1.0, k in -3.0f64..3.0) {
        let t = Theta::new(eps, delta).unwrap();
        prop_assert!(t.hat(k) >= eps - 1e-15 && t.hat(k) <= 1.0);
        prop_assert!((t.hat(k) - t.hat(-k)).abs() == 0.0);
        let h = 1e-9;
        prop_assert!((t.hat(k + h) - t.hat(k)).abs() <= (1.0 - eps) / delta * h + 1e-15);
        prop_assert!((t.hat0(k) - (t.hat(k) - eps)).abs() < 1e-15);
    }

    #[test]
    fn carrier_times_low_error_has_no_low_part(seed in any::<u64>()) {
        let nf = NormalForm::new(1.0, 0.05, 0.1).unwrap();
        let d = nf.delta();
        let phi = random_real_spectrum(grid(), seed, 40, |k| (k.abs() - 1.0).abs() < d);
        let r0 = random_real_spectrum(grid(), seed ^ 0x5a5a, 40, |k| k.abs() <= d);
        let prod = convolve(&phi, &r0).unwrap();
        prop_assert!(nf.p0(&prod).l2_norm() <= 1e-13 * prod.l2_norm().max(1e-300));
    }

    #[test]
    fn alpha_is_real_and_even(n in 1u8..=5, j in 0usize..4, k in -5.0f64..5.0, m in -5.0f64..5.0) {
        let (j1, j2) = (SIGNS[j / 2], SIGNS[j % 2]);
        let l = k - m;
        let a = alpha(n, j1, j2, k, l, m).unwrap();
        let b = alpha(n, j1, j2, -k, -l, -m).unwrap();
        prop_assert!(a.is_finite());
        prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
    }

    #[test]
    fn b11_is_even(n in 1u8..=5, j in 0usize..4, k in 0.2f64..6.0, m in 0.2f64..6.0, flip in any::<bool>()) {
        let nf = NormalForm::new(1.0, 0.05, 0.1).unwrap();
        let (j1, j2) = (SIGNS[j / 2], SIGNS[j % 2]);
        let m = if flip { -m } else { m };
        let l = k - m;
        let den = NormalForm::denominator(j1, j2, k, l, m);
        prop_assume!(den.abs() > 1e-3);
        let a = nf.b11(n, j1, j2, k, l, m).unwrap();
        let b = nf.b11(n, j1, j2, -k, -l, -m).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn split_step_conserves_l2(seed in any::<u64>(), dt in 1e-4f64..1e-2) {
        let g = PeriodicGrid::new(40.0, 128).unwrap();
        let s = random_real_spectrum(g, seed, 20, |_| true);
        let b = s.to_field().map(|c| c * C64::new(0.6, 0.8));
        let out = split_step(&b, 0.3, 1.1, dt, 200).unwrap();
        prop_assert!((out.l2_norm() - b.l2_norm()).abs() <= 1e-12 * b.l2_norm());
    }

    #[test]
    fn poisson_residual_meets_tolerance(a in 0.0f64..0.5, b in -0.3f64..0.3) {
        let g = PeriodicGrid::new(2.0 * PI, 64).unwrap();
        let n = Field::from_fn(g, |x| 1.0 + a * x.cos() + b * (2.0 * x).sin());
        prop_assume!(n.re().iter().all(|&v| v > 0.2));
        let s = solve_phi(&n, 1e-12, 40).unwrap();
        prop_assert!(s.residual <= 1e-12);
        let mean: f64 = s.phi.re().iter().zip(n.re()).map(|(p, v)| p.exp() - v).sum::<f64>() * g.dx();
        prop_assert!(mean.abs() < 1e-10);
    }

    #[test]
    fn config_round_trip(k0 in 0.5f64..2.0, e1 in 0.05f64..0.2, seed in any::<u64>(), cutoff in any::<bool>()) {
        let cfg = ExperimentConfig { k0, epsilons: vec![e1, e1 / 2.0], seed, cutoff, t0: 0.1, ..Default::default() };
        prop_assume!(cfg.validate().is_ok());
        prop_assert_eq!(ExperimentConfig::parse(&cfg.emit()).unwrap(), cfg);
    }

    #[test]
    fn tables_are_deterministic(xs in proptest::collection::vec((0.0f64..1.0, -1e3f64..1e3), 0..20)) {
        let rows: Vec<CarrierPhaseRow> = xs.iter().map(|&(eps, norm)| CarrierPhaseRow { eps, norm }).collect();
        prop_assert_eq!(table_bytes("carrier_phase", &rows).unwrap(), table_bytes("carrier_phase", &rows).unwrap());
        let text = String::from_utf8(table_bytes("carrier_phase", &rows).unwrap()).unwrap();
        let parsed: Vec<f64> = text.lines().skip(2).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        prop_assert_eq!(parsed, xs.iter().map(|x| x.1).collect::<Vec<_>>());
    }
}
