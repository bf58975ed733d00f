//! Energy diagnostics: equivalence of the normal-form energy with the plain
//! Sobolev energy on random errors, and the modified energy along a real run.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::ansatz::Ansatz;
use crate::error::{Error, Result};
use crate::euler_poisson::{EulerPoisson, Observer, PlasmaState, SolverOptions};
use crate::harness::config::{ExperimentConfig, SAMPLES};
use crate::harness::experiments::{envelope_samples, make_ansatz};
use crate::normal_form::{random_real_spectrum, EnergyInput, HSign, NormalForm};
use crate::spectral_core::{Field, PeriodicGrid, Spectrum};

/// Exponent of the error scaling `U = εΨ + ε^β ϑR`.
pub const BETA: f64 = 2.5;

/// Derivative levels summed in the energy.
pub const ENERGY_LEVELS: u32 = 2;

/// Highest wavenumber (in units of `k₀`) of the random error fields.
pub const ERROR_BANDWIDTH: f64 = 3.0;

/// Energy terms at one sample time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub t: f64,
    /// `𝓔_s`.
    pub energy: f64,
    /// `𝓔̃_s` with `φ₁ + φ₂ − 2q̂φ₂`.
    pub modified_minus: f64,
    /// `𝓔̃_s` with `φ₁ + φ₂ + 2q̂φ₂`.
    pub modified_plus: f64,
    /// `½Σ_ℓ(‖∂^ℓ𝓡⁰‖² + ‖∂^ℓR¹‖²)`.
    pub base: f64,
    /// `𝓔_s / base`.
    pub ratio: f64,
}

/// Modified energy along one simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyStudy {
    pub eps: f64,
    pub samples: Vec<EnergySample>,
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// `max_t 𝓔̃_s(t)/𝓔̃_s(0)` for the `−` variant.
    pub growth_minus: f64,
    /// `min_t 𝓔̃_s(t)/𝓔̃_s(0)` for the `−` variant.
    pub decay_minus: f64,
    pub growth_plus: f64,
    pub decay_plus: f64,
}

impl EnergyStudy {
    /// `𝓔̃_s` (`−` variant) stays within a factor `f` of its initial value.
    pub fn bounded_within(&self, f: f64) -> bool {
        self.growth_minus <= f && self.decay_minus >= 1.0 / f
    }
}

/// The packet profile `φ_c = 2 sech(ε(x − L/2)) cos(k₀x)`, restricted to its
/// carrier bands.
pub fn sech_carrier(nf: &NormalForm, grid: PeriodicGrid) -> Spectrum {
    let (eps, k0, c) = (nf.eps(), nf.k0, grid.length() / 2.0);
    let f = Field::from_fn(grid, |x| 2.0 * (k0 * x).cos() / (eps * (x - c)).cosh());
    nf.carrier_part(f.spectrum())
}

/// Random real error pair `(𝓡⁰, R¹)` from `seed`.
pub fn random_errors(nf: &NormalForm, grid: PeriodicGrid, seed: u64) -> ([Spectrum; 2], [Spectrum; 2]) {
    let d = nf.delta();
    let jmax = (ERROR_BANDWIDTH * nf.k0.abs() / grid.dk()).floor() as i64;
    let gen = |s: u64, low: bool| {
        random_real_spectrum(grid, seed.wrapping_mul(4).wrapping_add(s), jmax, |k| (k.abs() <= d) == low)
    };
    ([gen(0, true), gen(1, true)], [gen(2, false), gen(3, false)])
}

/// Grid for the equivalence check: `L ≈ 12/ε`, resolving `|k| ≤ 4k₀`.
pub fn equivalence_grid(k0: f64, eps: f64) -> Result<PeriodicGrid> {
    let unit = 2.0 * PI / k0.abs();
    let l = ((12.0 / eps) / unit).ceil() * unit;
    let n = ((l * 4.0 * k0.abs() / PI).ceil() as usize).next_power_of_two();
    PeriodicGrid::new(l, n)
}

/// `𝓔_s/base` for `count` random error pairs around a sech packet.
pub fn equivalence_ratios(k0: f64, eps: f64, delta: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    let nf = NormalForm::new(k0, eps, delta)?;
    let grid = equivalence_grid(k0, eps)?;
    let phi_c = sech_carrier(&nf, grid);
    let zero = Spectrum::zeros(grid);
    (0..count as u64)
        .map(|i| {
            let (r0, r1) = random_errors(&nf, grid, seed.wrapping_add(i));
            let input = EnergyInput { phi_c: phi_c.clone(), phi_p: [zero.clone(), zero.clone()], r0, r1 };
            Ok(nf.energy(&input, ENERGY_LEVELS, HSign::Minus)?.ratio)
        })
        .collect()
}

/// Split `U − εΨ` into the energy inputs for the ansatz `a` at envelope `env`.
pub fn energy_input(nf: &NormalForm, a: &Ansatz, env: &Field, st: &PlasmaState) -> Result<EnergyInput> {
    let eps = nf.eps();
    let full = a.build_from(env, st.t)?;
    let lead = a.build_leading(env, st.t)?;
    let phi_c = lead.u1.scale_re(1.0 / eps);
    let phi_p = [
        full.u1.sub(&lead.u1)?.scale_re(1.0 / (eps * eps)),
        full.um1.sub(&lead.um1)?.scale_re(1.0 / (eps * eps)),
    ];
    let scale = eps.powf(-BETA);
    let r = [
        nf.theta_inv_mul(&st.u1().sub(&full.u1)?).scale_re(scale),
        nf.theta_inv_mul(&st.um1().sub(&full.um1)?).scale_re(scale),
    ];
    let r0 = [nf.p0(&r[0]), nf.p0(&r[1])];
    let r1 = [nf.p1(&r[0]), nf.p1(&r[1])];
    let r0t = nf.transform_low(&phi_c, [&r0[0], &r0[1]], [&r1[0], &r1[1]])?;
    Ok(EnergyInput { phi_c, phi_p, r0: r0t, r1 })
}

/// Evolve `εΨ(0) + ε^β ϑR_init` (with `R_init` a seeded random error of unit
/// base energy) to `T₀/ε²`, evaluating the energies at the error samples.
pub fn run_energy_diagnostic(cfg: &ExperimentConfig, eps: f64) -> Result<EnergyStudy> {
    let a = make_ansatz(cfg, eps)?;
    let grid = *a.grid();
    let nf = NormalForm::new(cfg.k0, eps, cfg.delta())?;
    let horizon = cfg.horizon(eps);
    let steps = cfg.steps(eps)?;
    let envs = if steps == 0 { vec![a.envelope0().clone()] } else { envelope_samples(&a, horizon)? };

    let (r0, r1) = random_errors(&nf, grid, cfg.seed);
    let zero = Spectrum::zeros(grid);
    let unit = EnergyInput { phi_c: zero.clone(), phi_p: [zero.clone(), zero], r0, r1 };
    let norm = nf.energy(&unit, ENERGY_LEVELS, HSign::Minus)?.base.sqrt();
    let pert = |i: usize| nf.theta_mul(&unit.r0[i].add(&unit.r1[i]).expect("same grid")).scale_re(eps.powf(BETA) / norm);
    let base = a.build(0.0)?;
    let init = PlasmaState::from_diagonal(0.0, base.u1.add(&pert(0))?, base.um1.add(&pert(1))?)?;

    let probe = |st: &PlasmaState| -> Vec<f64> {
        let idx = if horizon == 0.0 { 0 } else { (st.t / horizon * SAMPLES as f64).round() as usize };
        let env = &envs[idx.min(envs.len() - 1)];
        match energy_input(&nf, &a, env, st).and_then(|inp| nf.energy(&inp, ENERGY_LEVELS, HSign::Minus)) {
            Ok(r) => vec![r.energy, r.modified, r.modified_alt, r.base, r.ratio],
            Err(_) => vec![f64::NAN; 5],
        }
    };
    let solver = EulerPoisson::new(grid, SolverOptions::default());
    let every = (steps / SAMPLES).max(1);
    let obs = [Observer::new(every, probe)];
    let dt = if steps == 0 { 1.0 } else { horizon / steps as f64 };
    let traj = solver.simulate(&init, horizon, dt, &obs)?;
    let mut samples = Vec::new();
    for r in &traj.records[0] {
        if !r.values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("energy sample at t = {}", r.t)));
        }
        let v = &r.values;
        samples.push(EnergySample { t: r.t, energy: v[0], modified_minus: v[1], modified_plus: v[2], base: v[3], ratio: v[4] });
    }
    Ok(summarize(eps, samples))
}

/// Reduce a sample series to its extremes.
pub fn summarize(eps: f64, samples: Vec<EnergySample>) -> EnergyStudy {
    let first = samples.first().copied();
    let fold = |f: &dyn Fn(&EnergySample) -> f64, init: f64, pick: fn(f64, f64) -> f64| samples.iter().map(f).fold(init, pick);
    let (m0, p0) = first.map(|s| (s.modified_minus, s.modified_plus)).unwrap_or((1.0, 1.0));
    EnergyStudy {
        eps,
        ratio_min: fold(&|s| s.ratio, f64::INFINITY, f64::min),
        ratio_max: fold(&|s| s.ratio, f64::NEG_INFINITY, f64::max),
        growth_minus: fold(&|s| s.modified_minus / m0, f64::NEG_INFINITY, f64::max),
        decay_minus: fold(&|s| s.modified_minus / m0, f64::INFINITY, f64::min),
        growth_plus: fold(&|s| s.modified_plus / p0, f64::NEG_INFINITY, f64::max),
        decay_plus: fold(&|s| s.modified_plus / p0, f64::INFINITY, f64::min),
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equivalence_on_random_errors() {
        let ratios = equivalence_ratios(1.0, 0.05, 0.1, 3, 7).unwrap();
        assert!(ratios.iter().all(|r| (0.5..=2.0).contains(r)), "{ratios:?}");
    }

    #[test]
    fn zero_horizon_has_unit_growth() {
        let cfg = ExperimentConfig { t0: 0.0, epsilons: vec![0.1], ..Default::default() };
        let st = run_energy_diagnostic(&cfg, 0.1).unwrap();
        assert_eq!(st.samples.len(), 1);
        assert_eq!(st.growth_minus, 1.0);
        assert!((0.5..=2.0).contains(&st.ratio_min));
    }
}
