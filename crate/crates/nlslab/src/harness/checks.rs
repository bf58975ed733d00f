//! Quick self-checks of the numerical infrastructure and of the normal-form
//! algebra. Each check returns a serialisable report carrying the measured
//! quantities and a `passed` flag evaluated against the pinned tolerances.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dispersion::{omega, omega_double_prime, omega_prime};
use crate::error::Result;
use crate::euler_poisson::{default_dt, EulerPoisson, PlasmaState, SolverOptions};
use crate::harness::artifacts::{convergence_rows, table_bytes};
use crate::harness::config::ExperimentConfig;
use crate::harness::experiments::{run_convergence, run_convergence_serial, run_dispersion_validation};
use crate::harness::loglog_slope;
use crate::nls;
use crate::normal_form::{
    g_identity_defects, identity_part1, identity_part2, identity_part3, random_real_spectrum, KernelBounds,
    NormalForm, Transform,
};
use crate::poisson::{m_remainder, phi_expansion, solve_phi, DEFAULT_MAX_ITER};
use crate::spectral_core::{Field, PeriodicGrid, C64};

/// Relative tolerance on the measured frequency of mode `k = 1`.
pub const FREQUENCY_TOL: f64 = 1e-6;
/// Tolerance on `ω′`, `ω″` against central differences.
pub const DERIVATIVE_TOL: f64 = 1e-7;
/// Smallest accepted estimated Newton convergence order.
pub const NEWTON_ORDER_MIN: f64 = 1.8;
/// Largest accepted `r_{i+1}/r_i²` of the Newton residuals.
pub const NEWTON_CONTRACTION_MAX: f64 = 10.0;
/// Smallest accepted amplitude slope of the order-2 expansion error.
pub const EXPANSION_SLOPE_MIN: f64 = 2.9;
/// Accepted band for the remainder ratio on halving the amplitude.
pub const REMAINDER_RATIO: (f64, f64) = (7.0, 9.0);
/// Tolerance of the algebraic identities on random fields.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Tolerance of the symbol-level `Ĝ` identities.
pub const G_IDENTITY_TOL: f64 = 1e-12;
/// Relative `L²` drift of the split-step scheme over [`INFRA_STEPS`] steps.
pub const L2_DRIFT_TOL: f64 = 1e-10;
/// Soliton shape error at `dT = 10⁻³` over `T = 1`.
pub const SOLITON_TOL: f64 = 1e-6;
/// Mass drift of the plasma simulator over [`INFRA_STEPS`] steps.
pub const MASS_DRIFT_TOL: f64 = 1e-10;
/// Step count of the conservation checks.
pub const INFRA_STEPS: usize = 10_000;

/// Dispersion relation and its derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionCheck {
    pub measured: f64,
    pub exact: f64,
    pub rel_error: f64,
    /// `max |ω′ − FD(ω)|` over `k ∈ [−10, 10]`.
    pub prime_error: f64,
    /// `max |ω″ − FD(ω′)|` over `k ∈ [−10, 10]`.
    pub second_error: f64,
    pub passed: bool,
}

fn central(f: fn(f64) -> f64, k: f64, h: f64) -> f64 {
    (f(k + h) - f(k - h)) / (2.0 * h)
}

/// Measured frequency of mode `k = 1` at amplitude 10⁻⁸ against `√(3/2)`,
/// and the derivative formulas against central differences.
pub fn dispersion_check() -> Result<DispersionCheck> {
    let s = run_dispersion_validation(&[1.0])?.remove(0);
    let exact = 1.5f64.sqrt();
    let rel_error = (s.measured - exact).abs() / exact;
    let ks: Vec<f64> = (0..=400).map(|i| -10.0 + 0.05 * i as f64).collect();
    let prime_error = ks.iter().map(|&k| (omega_prime(k) - central(omega, k, 1e-5)).abs()).fold(0.0, f64::max);
    let second_error =
        ks.iter().map(|&k| (omega_double_prime(k) - central(omega_prime, k, 1e-5)).abs()).fold(0.0, f64::max);
    Ok(DispersionCheck {
        measured: s.measured,
        exact,
        rel_error,
        prime_error,
        second_error,
        passed: rel_error <= FREQUENCY_TOL && prime_error <= DERIVATIVE_TOL && second_error <= DERIVATIVE_TOL,
    })
}

/// Newton convergence and small-amplitude expansion of the Poisson solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonCheck {
    pub residual_history: Vec<f64>,
    /// Order estimates `ln r_{i+1} / ln r_i` (residuals below 1).
    pub orders: Vec<f64>,
    /// Contraction constants `r_{i+1}/r_i²`.
    pub contraction: Vec<f64>,
    pub amplitudes: Vec<f64>,
    /// `‖solve_phi − order-2 expansion‖_{L²}` per amplitude.
    pub expansion_errors: Vec<f64>,
    pub expansion_slope: f64,
    /// `‖𝓜(aρ)‖/‖𝓜(aρ/2)‖` at `a = 0.1`.
    pub remainder_ratio: f64,
    pub passed: bool,
}

fn poisson_grid() -> Result<PeriodicGrid> {
    PeriodicGrid::new(2.0 * PI, 64)
}

/// Newton on `n = 1 + 0.1 cos x`; expansion error over amplitudes
/// `{0.2, 0.1, 0.05}`; remainder ratio on halving `0.1 → 0.05`.
pub fn poisson_check() -> Result<PoissonCheck> {
    let g = poisson_grid()?;
    let n = Field::from_fn(g, |x| 1.0 + 0.1 * x.cos());
    let sol = solve_phi(&n, 1e-13, DEFAULT_MAX_ITER)?;
    let r = &sol.residual_history;
    let orders: Vec<f64> = r.windows(2).filter(|w| w[0] < 1.0).map(|w| w[1].ln() / w[0].ln()).collect();
    let contraction: Vec<f64> = r.windows(2).map(|w| w[1] / (w[0] * w[0])).collect();
    let amplitudes = vec![0.2, 0.1, 0.05];
    let expansion_errors = amplitudes
        .iter()
        .map(|&a| {
            let rho = Field::from_fn(g, |x| a * x.cos());
            let exact = solve_phi(&rho.map(|c| c + 1.0), 1e-13, DEFAULT_MAX_ITER)?.phi;
            Ok(exact.sub(&phi_expansion(&rho, 2)?)?.l2_norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    let expansion_slope = loglog_slope(&amplitudes, &expansion_errors)?;
    let m = |a: f64| m_remainder(&Field::from_fn(g, |x| a * x.cos())).map(|f| f.l2_norm());
    let remainder_ratio = m(0.1)? / m(0.05)?;
    let quadratic = orders.len() >= 2
        && orders.iter().all(|&p| p >= NEWTON_ORDER_MIN)
        && contraction.iter().all(|&c| c <= NEWTON_CONTRACTION_MAX);
    Ok(PoissonCheck {
        residual_history: sol.residual_history,
        passed: quadratic
            && expansion_slope >= EXPANSION_SLOPE_MIN
            && (REMAINDER_RATIO.0..=REMAINDER_RATIO.1).contains(&remainder_ratio),
        orders,
        contraction,
        amplitudes,
        expansion_errors,
        expansion_slope,
        remainder_ratio,
    })
}

/// Worst defects of the normal-form relations on random band-limited fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalFormCheck {
    pub k0: f64,
    pub eps: f64,
    pub delta: f64,
    /// Worst relative cancellation defect for `B01`, `B10`, `B11`.
    pub cancellation: [f64; 3],
    /// Worst adjoint defect of the stated commutator kernels, `n = 1, 2`.
    pub adjoint_printed_low: f64,
    /// Worst adjoint defect of the stated commutator kernels, `n = 3, 4`.
    pub adjoint_printed_high: f64,
    /// Worst adjoint defect of the exact commutator kernels.
    pub adjoint_exact: f64,
    /// Defects of the three integration-by-parts identities.
    pub identities: [f64; 3],
    /// Defects of the two `Ĝ` symbol identities.
    pub g_identities: [f64; 2],
    pub bounds: KernelBounds,
}

impl NormalFormCheck {
    pub fn cancellation_ok(&self) -> bool {
        self.cancellation.iter().all(|&d| d <= IDENTITY_TOL)
    }

    /// Adjoint identities with the stated kernels, plus the other identities.
    pub fn identities_printed_ok(&self) -> bool {
        self.adjoint_printed_low.max(self.adjoint_printed_high) <= IDENTITY_TOL && self.identities_core_ok()
    }

    /// Adjoint identities with the exact kernels, plus the other identities.
    pub fn identities_exact_ok(&self) -> bool {
        self.adjoint_exact <= IDENTITY_TOL && self.identities_core_ok()
    }

    fn identities_core_ok(&self) -> bool {
        self.identities.iter().all(|&d| d <= IDENTITY_TOL) && self.g_identities.iter().all(|&d| d <= G_IDENTITY_TOL)
    }

    /// Bounds (a), (b), (d) and the diagonal plus stated off-diagonal limits (c).
    pub fn bounds_printed_ok(&self) -> bool {
        let b = &self.bounds;
        b.b01_bounded() && b.b10_finite_near_k0() && b.d_bounded_away() && b.diagonal_asymptotics_ok() && b.offdiagonal_asymptotics_printed_ok()
    }

    /// As [`Self::bounds_printed_ok`] with the corrected off-diagonal limits.
    pub fn bounds_corrected_ok(&self) -> bool {
        let b = &self.bounds;
        b.b01_bounded() && b.b10_finite_near_k0() && b.d_bounded_away() && b.diagonal_asymptotics_ok() && b.offdiagonal_asymptotics_corrected_ok()
    }
}

/// Run every normal-form relation at `(k₀, ε, δ)` on fields drawn from `seed`
/// over a cell of length `40π/k₀` with 256 points.
pub fn normal_form_check(k0: f64, eps: f64, delta: f64, seed: u64) -> Result<NormalFormCheck> {
    let nf = NormalForm::new(k0, eps, delta)?;
    let grid = PeriodicGrid::new(40.0 * PI / k0.abs(), 256)?;
    let d = nf.delta();
    let rnd = |s: u64, jmax: i64, keep: &dyn Fn(f64) -> bool| random_real_spectrum(grid, seed.wrapping_mul(16).wrapping_add(s), jmax, keep);
    let carrier = |k: f64| (k.abs() - k0.abs()).abs() < d;
    let high = |k: f64| k.abs() > d;
    let low = |k: f64| k.abs() <= d;
    let phi = rnd(0, 40, &carrier);
    let hi = rnd(1, 60, &high);
    let lo = rnd(2, 60, &low);
    let worst = |t: Transform, f| -> Result<f64> {
        Ok(nf.cancellation_suite(t, &phi, f)?.iter().map(|r| r.defect).fold(0.0, f64::max))
    };
    let cancellation = [worst(Transform::B01, &hi)?, worst(Transform::B10, &lo)?, worst(Transform::B11, &hi)?];

    let h = rnd(3, 32, &carrier);
    let f = rnd(4, 32, &high);
    let g = rnd(5, 32, &high);
    let rows = nf.verify_adjoint_identities(&h, &f, &g)?;
    let fold = |pick: &dyn Fn(&&crate::normal_form::AdjointRow) -> bool, val: &dyn Fn(&crate::normal_form::AdjointRow) -> f64| {
        rows.iter().filter(pick).map(val).fold(0.0, f64::max)
    };
    let adjoint_printed_low = fold(&|r| r.n <= 2, &|r| r.defect_printed);
    let adjoint_printed_high = fold(&|r| r.n >= 3, &|r| r.defect_printed);
    let adjoint_exact = fold(&|_| true, &|r| r.defect_exact);

    let field = |s: u64| rnd(6 + s, 30, &|_| true).to_field().real_projection();
    let (a1, a2, f1, f2) = (field(0), field(1), field(2), field(3));
    let identities = [
        identity_part1(&a1, &f1)?.defect,
        identity_part2([&a1, &a2], [&f1, &f2])?.defect,
        identity_part3([&a1, &a2], [&f1, &f2])?.defect,
    ];
    let ks: Vec<f64> = (1..2000).map(|i| 0.05 * k0.abs() * i as f64 * if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let (g4, g5) = g_identity_defects(&nf, &ks)?;
    Ok(NormalFormCheck {
        k0,
        eps,
        delta: d,
        cancellation,
        adjoint_printed_low,
        adjoint_printed_high,
        adjoint_exact,
        identities,
        g_identities: [g4, g5],
        bounds: nf.kernel_bounds()?,
    })
}

/// Conservation and reproducibility of the time steppers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfraCheck {
    /// Relative `L²` drift of the split-step scheme over [`INFRA_STEPS`] steps.
    pub l2_drift: f64,
    /// `max_X ||B(1)| − a·sech(bX)|` at `dT = 10⁻³`.
    pub soliton_shape_error: f64,
    /// `max_X |B(1) − soliton(1)|`, including the phase.
    pub soliton_phase_error: f64,
    /// `|M(t) − M(0)|` of the plasma simulator over [`INFRA_STEPS`] steps.
    pub mass_drift: f64,
    pub passed: bool,
}

/// Split-step `L²` drift and soliton shape at `k₀`, and simulator mass drift.
pub fn infra_check(k0: f64) -> Result<InfraCheck> {
    let c = nls::coefficients(k0)?;
    let eg = PeriodicGrid::new(40.0, 256)?;
    let b0 = Field::from_fn_complex(eg, |x| C64::from_polar(1.0 / (x - 20.0).cosh(), 0.5 * x));
    let b1 = nls::split_step(&b0, c.nu1, c.nu2, 1e-3, INFRA_STEPS)?;
    let l2_drift = (b1.l2_norm() - b0.l2_norm()).abs() / b0.l2_norm();

    let amp = 1.0;
    let width = (2.0 * c.nu1 / (c.nu2 * amp * amp)).sqrt();
    let sg = PeriodicGrid::new(60.0 * width, 512)?;
    let s0 = nls::soliton(sg, c.nu1, c.nu2, amp, 0.0)?;
    let s_end = nls::soliton(sg, c.nu1, c.nu2, amp, 1.0)?;
    let num = nls::split_step(&s0, c.nu1, c.nu2, 1e-3, 1000)?;
    let pairs = || num.samples().iter().zip(s_end.samples());
    let soliton_shape_error = pairs().map(|(a, b)| (a.norm() - b.norm()).abs()).fold(0.0, f64::max);
    let soliton_phase_error = pairs().map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);

    let pg = PeriodicGrid::new(16.0 * PI, 128)?;
    let rho = Field::from_fn(pg, |x| 0.01 + 0.02 * (0.5 * x).cos() + 0.01 * (1.5 * x).sin());
    let v = Field::from_fn(pg, |x| 0.01 * (0.5 * x).cos());
    let init = PlasmaState::from_primitive(0.0, &rho, &v)?;
    let dt = default_dt(&pg, 0.5);
    let solver = EulerPoisson::new(pg, SolverOptions::default());
    let end = solver.simulate(&init, dt * INFRA_STEPS as f64, dt, &[])?.final_state;
    let mass_drift = (end.mass() - init.mass()).abs();
    Ok(InfraCheck {
        l2_drift,
        soliton_shape_error,
        soliton_phase_error,
        mass_drift,
        passed: l2_drift <= L2_DRIFT_TOL
            && soliton_shape_error.max(soliton_phase_error) <= SOLITON_TOL
            && mass_drift <= MASS_DRIFT_TOL,
    })
}

/// Short convergence sweep used for the serial/concurrent comparison.
pub fn determinism_config() -> ExperimentConfig {
    ExperimentConfig { epsilons: vec![0.2, 0.15], t0: 0.02, ..Default::default() }
}

/// Whether the concurrent and serial sweeps of `cfg` serialise to identical
/// bytes. Returns the two byte strings' lengths and the verdict.
pub fn determinism_check(cfg: &ExperimentConfig) -> Result<(usize, usize, bool)> {
    let bytes = |study| -> Result<Vec<u8>> {
        let (rows, series) = convergence_rows(&study);
        let mut b = table_bytes("convergence", &rows)?;
        b.extend(table_bytes("convergence_series", &series)?);
        Ok(b)
    };
    let par = bytes(run_convergence(cfg)?)?;
    let seq = bytes(run_convergence_serial(cfg)?)?;
    Ok((par.len(), seq.len(), par == seq))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_check_passes() {
        let p = poisson_check().unwrap();
        assert!(p.passed, "{p:?}");
    }

    #[test]
    fn dispersion_derivatives_pass() {
        let d = dispersion_check().unwrap();
        assert!(d.passed, "{d:?}");
    }
}
