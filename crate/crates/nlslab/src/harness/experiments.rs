//! Headline experiments.

use serde::{Deserialize, Serialize};

use crate::ansatz::{self, Ansatz, AnsatzConfig};
use crate::dispersion::omega;
use crate::error::{Error, Result};
use crate::euler_poisson::{tail_mass, EulerPoisson, Observer, PlasmaState, SolverOptions};
use crate::harness::config::{ExperimentConfig, SAMPLES};
use crate::harness::loglog_slope;
use crate::nls;
use crate::par;
use crate::spectral_core::{make_grid, spectrum_sobolev_norm, Field, Spectrum, C64};

/// Envelope grid size used by every experiment.
pub const ENVELOPE_N: usize = 256;

/// Peak of the sech envelope evolved by the convergence study. At peak 1 the
/// `ε ≥ 0.05` packets steepen through the near-resonant second harmonic long
/// before `T₀/ε²`; peak 1/4 keeps the sweep in the asymptotic regime.
pub const ENVELOPE_AMPLITUDE: f64 = 0.25;

/// Peak of the sech envelope used by the (instantaneous) residual study.
pub const RESIDUAL_AMPLITUDE: f64 = 1.0;

/// Approximation error of one run of [`run_convergence`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub eps: f64,
    /// `sup_t ‖(ρ,v) − εΨ_NLS‖_{H^s}`.
    pub sup_error: f64,
    pub t_sup: f64,
    /// `sup_t ‖(ρ,v) − εΨ_NLS‖_{L²}`.
    pub sup_error_l2: f64,
    /// `sup_t ‖εΨ_NLS‖_{H^s}`.
    pub magnitude: f64,
    /// Largest tail-mass fraction seen.
    pub tail_mass: f64,
    /// `(t, H^s error)` samples.
    pub series: Vec<(f64, f64)>,
}

/// All runs of a sweep and the fitted slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub records: Vec<ConvergenceRecord>,
    /// Least-squares slope of `ln sup_error` against `ln ε` (needs ≥ 2 runs).
    pub slope: Option<f64>,
}

/// Ansatz of the configured depth/cutoff built on a sech envelope.
pub fn make_ansatz(cfg: &ExperimentConfig, eps: f64) -> Result<Ansatz> {
    make_ansatz_with(cfg, eps, ENVELOPE_AMPLITUDE)
}

/// As [`make_ansatz`] with an explicit envelope peak `amp`.
pub fn make_ansatz_with(cfg: &ExperimentConfig, eps: f64, amp: f64) -> Result<Ansatz> {
    let grid = cfg.grid(eps)?;
    let eg = nls::envelope_grid(eps, &grid, ENVELOPE_N)?;
    let mut acfg = AnsatzConfig::new(eps, cfg.k0, cfg.depth)?;
    acfg.delta = cfg.delta();
    acfg.cutoff = cfg.cutoff;
    Ansatz::new(acfg, grid, nls::sech_envelope(eg, amp))
}

fn state_norm(st: &PlasmaState, s: f64) -> Result<f64> {
    Ok(spectrum_sobolev_norm(&st.rho_hat(), s)?.hypot(spectrum_sobolev_norm(&st.v_hat(), s)?))
}

fn diff_norm(a: &PlasmaState, b: &PlasmaState, s: f64) -> Result<f64> {
    let r = a.rho_hat().sub(&b.rho_hat())?;
    let v = a.v_hat().sub(&b.v_hat())?;
    Ok(spectrum_sobolev_norm(&r, s)?.hypot(spectrum_sobolev_norm(&v, s)?))
}

/// Envelope at the `SAMPLES + 1` equispaced times of `[0, horizon]`.
pub fn envelope_samples(a: &Ansatz, horizon: f64) -> Result<Vec<Field>> {
    let c = &a.config().coeffs;
    let e2 = a.config().eps * a.config().eps;
    let mut out = vec![a.envelope0().clone()];
    for i in 0..SAMPLES {
        let next = nls::evolve(&out[i], c.nu1, c.nu2, e2 * horizon / SAMPLES as f64, ansatz::ENVELOPE_DT)?;
        out.push(next);
    }
    Ok(out)
}

/// One convergence run at a single `ε`.
pub fn run_convergence_single(cfg: &ExperimentConfig, eps: f64) -> Result<ConvergenceRecord> {
    run_convergence_with(cfg, eps, ENVELOPE_AMPLITUDE)
}

/// One convergence run with an explicit envelope peak `amp`.
pub fn run_convergence_with(cfg: &ExperimentConfig, eps: f64, amp: f64) -> Result<ConvergenceRecord> {
    let a = make_ansatz_with(cfg, eps, amp)?;
    let horizon = cfg.horizon(eps);
    let steps = cfg.steps(eps)?;
    let init = a.build(0.0)?.state()?;
    let envs = if steps == 0 { vec![a.envelope0().clone()] } else { envelope_samples(&a, horizon)? };
    let solver = EulerPoisson::new(*a.grid(), SolverOptions::default());
    let s = cfg.s;
    let probe = |st: &PlasmaState| -> Vec<f64> {
        let idx = if horizon == 0.0 { 0 } else { (st.t / horizon * SAMPLES as f64).round() as usize };
        let lead = a
            .build_leading(&envs[idx.min(envs.len() - 1)], st.t)
            .and_then(|ap| ap.state())
            .expect("leading ansatz on a validated grid");
        vec![
            diff_norm(st, &lead, s).unwrap_or(f64::NAN),
            diff_norm(st, &lead, 0.0).unwrap_or(f64::NAN),
            state_norm(&lead, s).unwrap_or(f64::NAN),
            tail_mass(&st.rho()),
        ]
    };
    let every = (steps / SAMPLES).max(1);
    let obs = [Observer::new(every, probe)];
    let dt = if steps == 0 { 1.0 } else { horizon / steps as f64 };
    let traj = solver.simulate(&init, horizon, dt, &obs)?;
    let recs = &traj.records[0];
    let mut best = (f64::NEG_INFINITY, 0.0);
    let (mut l2, mut mag, mut tail) = (0.0f64, 0.0f64, 0.0f64);
    let mut series = Vec::with_capacity(recs.len());
    for r in recs {
        if !r.values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("error sample at t = {}", r.t)));
        }
        if r.values[0] > best.0 {
            best = (r.values[0], r.t);
        }
        l2 = l2.max(r.values[1]);
        mag = mag.max(r.values[2]);
        tail = tail.max(r.values[3]);
        series.push((r.t, r.values[0]));
    }
    Ok(ConvergenceRecord {
        eps,
        sup_error: best.0,
        t_sup: best.1,
        sup_error_l2: l2,
        magnitude: mag,
        tail_mass: tail,
        series,
    })
}

/// Convergence sweep over `cfg.epsilons`, runs executed concurrently when the
/// `parallel` feature is on (capped by `NLSLAB_THREADS`).
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceStudy> {
    cfg.validate()?;
    let runs = par::with_thread_cap(par::env_thread_cap(), || {
        par::par_map(&cfg.epsilons, |&e| run_convergence_single(cfg, e))
    });
    finish_convergence(runs)
}

/// Same sweep, strictly sequential.
pub fn run_convergence_serial(cfg: &ExperimentConfig) -> Result<ConvergenceStudy> {
    cfg.validate()?;
    finish_convergence(par::seq_map(&cfg.epsilons, |&e| run_convergence_single(cfg, e)))
}

fn finish_convergence(runs: Vec<Result<ConvergenceRecord>>) -> Result<ConvergenceStudy> {
    let records = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let slope = if records.len() >= 2 && records.iter().all(|r| r.sup_error > 0.0) {
        let e: Vec<f64> = records.iter().map(|r| r.eps).collect();
        let y: Vec<f64> = records.iter().map(|r| r.sup_error).collect();
        Some(loglog_slope(&e, &y)?)
    } else {
        None
    };
    Ok(ConvergenceStudy { records, slope })
}

/// Residual norms for one `ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub eps: f64,
    /// 0 = leading, 1 = extended.
    pub depth: u8,
    /// `"total"`, `"E0"`, `"E1"`, `"E2"`, `"E3"`, `"E1_U1"`, `"E1_U1_nu2_perturbed"`,
    /// `"E1_U1_no_cubic"`.
    pub band: String,
    pub norm: f64,
}

/// Outcome of [`run_residual_study`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualStudy {
    pub rows: Vec<ResidualRow>,
    pub slope_leading: f64,
    pub slope_extended: f64,
    /// `E¹`-band residual of `U₁` with `ν₂` perturbed by 20%, divided by the
    /// one with the computed `ν₂`, at the smallest `ε`.
    pub nu2_discrimination: f64,
    /// Same ratio with the direct cubic terms dropped from `ν₂`.
    pub no_cubic_discrimination: f64,
}

/// Residual study over `cfg.epsilons`.
pub fn run_residual_study(cfg: &ExperimentConfig) -> Result<ResidualStudy> {
    cfg.validate()?;
    let k0 = cfg.k0;
    let s = cfg.s;
    let per_eps = par::par_map(&cfg.epsilons, |&eps| -> Result<Vec<ResidualRow>> {
        let grid = cfg.grid(eps)?;
        let solver = EulerPoisson::new(grid, SolverOptions::default());
        let eg = nls::envelope_grid(eps, &grid, ENVELOPE_N)?;
        let env = nls::sech_envelope(eg, RESIDUAL_AMPLITUDE);
        let mut rows = Vec::new();
        let base = |depth: u8| -> Result<AnsatzConfig> {
            let mut c = AnsatzConfig::new(eps, k0, depth)?;
            c.delta = cfg.delta();
            c.cutoff = cfg.cutoff;
            Ok(c)
        };
        let mut push = |depth: u8, band: &str, norm: f64| {
            rows.push(ResidualRow { eps, depth, band: band.to_string(), norm })
        };
        for depth in [0u8, 1] {
            let r = ansatz::residual(&Ansatz::new(base(depth)?, grid, env.clone())?, 0.0, &solver)?;
            push(depth, "total", r.hs_norm(s)?);
            for p in 0..4u32 {
                push(depth, &format!("E{p}"), r.band_norm(s, p, k0)?);
            }
            push(depth, "E1_U1", r.component_band_norm(1, s, 1, k0)?);
        }
        let c = base(1)?;
        let nu2 = c.coeffs.nu2;
        let r = ansatz::residual(&Ansatz::new(c.with_nu2(1.2 * nu2), grid, env.clone())?, 0.0, &solver)?;
        push(1, "E1_U1_nu2_perturbed", r.component_band_norm(1, s, 1, k0)?);
        let c = AnsatzConfig { coeffs: nls::coefficients_with(k0, false)?, ..base(1)? };
        let r = ansatz::residual(&Ansatz::new(c.clone(), grid, env.clone())?, 0.0, &solver)?;
        push(1, "E1_U1_no_cubic", r.component_band_norm(1, s, 1, k0)?);
        let nu2 = c.coeffs.nu2;
        let r = ansatz::residual(&Ansatz::new(c.with_nu2(1.2 * nu2), grid, env)?, 0.0, &solver)?;
        push(1, "E1_U1_no_cubic_perturbed", r.component_band_norm(1, s, 1, k0)?);
        Ok(rows)
    });
    let rows: Vec<ResidualRow> = per_eps.into_iter().collect::<Result<Vec<_>>>()?.concat();
    let pick = |eps: f64, depth: u8, band: &str| {
        rows.iter()
            .find(|r| r.eps == eps && r.depth == depth && r.band == band)
            .map(|r| r.norm)
            .unwrap_or(f64::NAN)
    };
    let eps = &cfg.epsilons;
    let lead: Vec<f64> = eps.iter().map(|&e| pick(e, 0, "total")).collect();
    let ext: Vec<f64> = eps.iter().map(|&e| pick(e, 1, "total")).collect();
    let small = *eps.last().expect("nonempty");
    Ok(ResidualStudy {
        slope_leading: loglog_slope(eps, &lead)?,
        slope_extended: loglog_slope(eps, &ext)?,
        nu2_discrimination: pick(small, 1, "E1_U1_nu2_perturbed") / pick(small, 1, "E1_U1"),
        no_cubic_discrimination: pick(small, 1, "E1_U1_no_cubic_perturbed") / pick(small, 1, "E1_U1_no_cubic"),
        rows,
    })
}

/// Measured linear frequency at one wavenumber.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionSample {
    pub k: f64,
    pub measured: f64,
    pub exact: f64,
    pub rel_error: f64,
}

/// Measure `ω(k)` for `k ∈ {1,2,3}` from the time series of the `ρ̂(k)`
/// coefficient of a full nonlinear run at amplitude 10⁻⁸ seeded on the `U₁`
/// eigenvector.
pub fn run_dispersion_validation(ks: &[f64]) -> Result<Vec<DispersionSample>> {
    let grid = make_grid(2.0 * std::f64::consts::PI, 64)?;
    let solver = EulerPoisson::new(grid, SolverOptions::default());
    par::par_map(ks, |&k| -> Result<DispersionSample> {
        let mode = (k / grid.dk()).round() as i64;
        let amp = 1e-8;
        let u1 = Spectrum::delta(grid, mode, C64::new(amp, 0.0))?
            .add(&Spectrum::delta(grid, -mode, C64::new(amp, 0.0))?)?;
        let init = PlasmaState::from_diagonal(0.0, u1, Spectrum::zeros(grid))?;
        let dt = 0.01;
        let obs = [Observer::new(1, move |st: &PlasmaState| {
            let c = st.rho_hat().at_mode(mode);
            vec![c.re, c.im]
        })];
        let t_end = 10.0;
        let tr = solver.simulate(&init, t_end, dt, &obs)?;
        // unwrap the phase of ρ̂(k)(t) and fit its slope by least squares
        let mut phase = Vec::new();
        let mut prev = 0.0;
        let mut offset = 0.0;
        for (i, r) in tr.records[0].iter().enumerate() {
            let p = r.values[1].atan2(r.values[0]);
            if i > 0 {
                let d = p - prev;
                if d > std::f64::consts::PI {
                    offset -= 2.0 * std::f64::consts::PI;
                } else if d < -std::f64::consts::PI {
                    offset += 2.0 * std::f64::consts::PI;
                }
            }
            prev = p;
            phase.push((r.t, p + offset));
        }
        let n = phase.len() as f64;
        let mt = phase.iter().map(|p| p.0).sum::<f64>() / n;
        let mp = phase.iter().map(|p| p.1).sum::<f64>() / n;
        let num: f64 = phase.iter().map(|p| (p.0 - mt) * (p.1 - mp)).sum();
        let den: f64 = phase.iter().map(|p| (p.0 - mt).powi(2)).sum();
        let measured = num / den;
        let exact = omega(mode as f64 * grid.dk());
        Ok(DispersionSample { k: mode as f64 * grid.dk(), measured, exact, rel_error: (measured - exact).abs() / exact })
    })
    .into_iter()
    .collect()
}
