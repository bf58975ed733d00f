//! Modulated wave-packet approximations and their residuals.
//!
//! The envelope `B(X,T)` lives on its own periodic grid of length `L_X = εL`,
//! so envelope mode `K_j = 2πj/L_X` corresponds exactly to the physical
//! wavenumber offset `εK_j = j·dk`. Building the approximation is then an exact
//! spectral shift of the envelope coefficients by `m₀ = k₀/dk` modes, with the
//! transport phase `e^{iK_jεc_g t}` and carrier phase `e^{ipω₀t}`.
//!
//! With `a = B̄` (see [`crate::nls`] for the frame):
//!
//! ```text
//! U₁  = ε(aE + c.c.) + ε²(Ã₂₁E² + c.c.) + ε²Ã₀₁
//! U₋₁ =                ε²(Ã₂₂E² + c.c.) + ε²Ã₀₂
//! ```
//!
//! where `Ã₂ⱼ = ratio2j·a²` and `Ã₀ⱼ = ratio0j·|a|²`; depth 0 keeps only the
//! first term.

use crate::dispersion::omega;
use crate::error::{Error, Result};
use crate::euler_poisson::{EulerPoisson, PlasmaState};
use crate::harness::loglog_slope;
use crate::nls::{self, NlsCoefficients};
use crate::spectral_core::{
    convolve, spectrum_sobolev_norm, Field, PeriodicGrid, Spectrum, C64,
};

/// Default slow-time step for envelope evolution.
pub const ENVELOPE_DT: f64 = 1e-3;

/// Approximation parameters.
#[derive(Clone, Debug)]
pub struct AnsatzConfig {
    pub eps: f64,
    pub k0: f64,
    /// 0: leading term only; 1: add mean-flow and second-harmonic corrections.
    pub depth: u8,
    /// Half-width of the retained Fourier bands.
    pub delta: f64,
    pub cutoff: bool,
    /// NLS coefficients used both for the corrections and for the envelope flow.
    pub coeffs: NlsCoefficients,
}

impl AnsatzConfig {
    /// Config with the computed coefficients and `δ = k₀/10`.
    pub fn new(eps: f64, k0: f64, depth: u8) -> Result<Self> {
        let cfg = Self { eps, k0, depth, delta: k0.abs() / 10.0, cutoff: false, coeffs: nls::coefficients(k0)? };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 0.2) {
            return Err(Error::InvalidArgument(format!("eps must lie in (0, 0.2], got {}", self.eps)));
        }
        if !(self.delta > 0.0 && self.delta < self.k0.abs() / 8.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, k0/8), got {}", self.delta)));
        }
        if self.depth > 1 {
            return Err(Error::InvalidArgument(format!("correction depth {} not supported", self.depth)));
        }
        if (self.coeffs.k0 - self.k0).abs() > 1e-14 {
            return Err(Error::InvalidArgument("coefficients computed for a different k0".into()));
        }
        Ok(())
    }

    /// Same config with `ν₂` replaced (used to probe the `ν₂` assembly).
    pub fn with_nu2(mut self, nu2: f64) -> Self {
        self.coeffs.nu2 = nu2;
        self
    }

    /// Same config with cutoff flag and depth changed.
    pub fn with(mut self, depth: u8, cutoff: bool) -> Self {
        self.depth = depth;
        self.cutoff = cutoff;
        self
    }
}

/// Assembled approximation in diagonal variables.
#[derive(Clone, Debug)]
pub struct Approximation {
    pub t: f64,
    pub u1: Spectrum,
    pub um1: Spectrum,
    /// Harmonics `p` whose bands `|k − pk₀| ≲ δ` were populated.
    pub bands: Vec<i32>,
    /// `L²` mass removed by the Fourier cutoff (0 when not applied).
    pub discarded: f64,
}

impl Approximation {
    pub fn grid(&self) -> &PeriodicGrid {
        self.u1.grid()
    }

    pub fn state(&self) -> Result<PlasmaState> {
        PlasmaState::from_diagonal(self.t, self.u1.clone(), self.um1.clone())
    }

    pub fn rho(&self) -> Field {
        self.state().expect("same grid").rho()
    }

    pub fn v(&self) -> Field {
        self.state().expect("same grid").v()
    }

    /// `‖(ρ, v)‖_{H^s} = (‖ρ‖² + ‖v‖²)^{1/2}`.
    pub fn hs_norm(&self, s: f64) -> Result<f64> {
        let st = self.state()?;
        let a = spectrum_sobolev_norm(&st.rho_hat(), s)?;
        let b = spectrum_sobolev_norm(&st.v_hat(), s)?;
        Ok(a.hypot(b))
    }
}

/// Builder binding a config, a physical grid and an initial envelope `B(X,0)`.
#[derive(Clone, Debug)]
pub struct Ansatz {
    cfg: AnsatzConfig,
    grid: PeriodicGrid,
    env0: Field,
    m0: i64,
}

fn hermitian_part(s: &Spectrum) -> Spectrum {
    let g = *s.grid();
    Spectrum::from_fn(g, |_| C64::new(0.0, 0.0)).map(|k, _| {
        let j = (k / g.dk()).round() as i64;
        0.5 * (s.at_mode(j) + s.at_mode(-j).conj())
    })
}

impl Ansatz {
    pub fn new(cfg: AnsatzConfig, grid: PeriodicGrid, env0: Field) -> Result<Self> {
        cfg.validate()?;
        let eg = *env0.grid();
        if ((eg.length() - cfg.eps * grid.length()) / eg.length()).abs() > 1e-12 {
            return Err(Error::Interpolation(format!(
                "envelope cell {} must equal eps*L = {}",
                eg.length(),
                cfg.eps * grid.length()
            )));
        }
        let m0f = cfg.k0 / grid.dk();
        let m0 = m0f.round() as i64;
        if (m0f - m0 as f64).abs() > 1e-9 {
            return Err(Error::Interpolation(format!("k0 = {} is not a lattice wavenumber", cfg.k0)));
        }
        let reach = 2 * m0.abs() + (eg.n() / 2) as i64;
        if reach >= (grid.n() / 2) as i64 {
            return Err(Error::Interpolation(format!(
                "physical grid (N = {}) too coarse for carrier mode {m0} with {} envelope modes",
                grid.n(),
                eg.n()
            )));
        }
        Ok(Self { cfg, grid, env0, m0 })
    }

    pub fn config(&self) -> &AnsatzConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn envelope0(&self) -> &Field {
        &self.env0
    }

    /// `B` at physical time `t` (slow time `ε²t`) under the configured NLS flow.
    pub fn envelope_at(&self, t: f64) -> Result<Field> {
        let c = &self.cfg.coeffs;
        nls::evolve(&self.env0, c.nu1, c.nu2, self.cfg.eps * self.cfg.eps * t, ENVELOPE_DT)
    }

    /// Add `factor·env` shifted to harmonic `p` (plus complex conjugate) into `out`.
    fn place(&self, out: &mut [C64], p: i64, env: &Spectrum, factor: f64, t: f64) {
        let eg = env.grid();
        let c = &self.cfg.coeffs;
        let eps = self.cfg.eps;
        for i in 0..eg.n() {
            if eg.is_nyquist(i) {
                continue;
            }
            let mode = p * self.m0 + eg.mode(i);
            let phase = (p as f64) * c.omega0 * t + eg.k(i) * eps * c.cg * t;
            let val = factor * env.coef()[i] * C64::from_polar(1.0, phase);
            let (w, wc) = if p == 0 { (0.5 * val, 0.5 * val.conj()) } else { (val, val.conj()) };
            out[self.grid.index_of_mode(mode).expect("checked reach")] += w;
            out[self.grid.index_of_mode(-mode).expect("checked reach")] += wc;
        }
    }

    /// Positive-carrier band `ψ̂₁`: the `+k₀` part of the leading term of `U₁`.
    pub fn psi_plus(&self, b: &Field, t: f64) -> Spectrum {
        let a = b.map(|z| z.conj());
        let mut out = vec![C64::new(0.0, 0.0); self.grid.n()];
        let eg = a.grid();
        let c = &self.cfg.coeffs;
        for i in 0..eg.n() {
            if eg.is_nyquist(i) {
                continue;
            }
            let mode = self.m0 + eg.mode(i);
            let phase = c.omega0 * t + eg.k(i) * self.cfg.eps * c.cg * t;
            out[self.grid.index_of_mode(mode).unwrap()] += a.spectrum().coef()[i] * C64::from_polar(1.0, phase);
        }
        Spectrum::new(self.grid, out).expect("grid-sized")
    }

    /// Carrier field `φ_c = ψ₁ + ψ₋₁` (leading term of `U₁`) at time `t`.
    pub fn carrier(&self, b: &Field, t: f64) -> Spectrum {
        let p = self.psi_plus(b, t);
        Spectrum::from_fn(self.grid, |_| C64::new(0.0, 0.0)).map(|k, _| {
            let j = (k / self.grid.dk()).round() as i64;
            p.at_mode(j) + p.at_mode(-j).conj()
        })
    }

    /// `εΨ_NLS` from envelope `b` at time `t` (no cutoff).
    pub fn build_leading(&self, b: &Field, t: f64) -> Result<Approximation> {
        self.build_depth(b, t, 0)
    }

    /// Depth-1 approximation from envelope `b` at time `t` (no cutoff).
    pub fn build_extended(&self, b: &Field, t: f64) -> Result<Approximation> {
        self.build_depth(b, t, 1)
    }

    fn build_depth(&self, b: &Field, t: f64, depth: u8) -> Result<Approximation> {
        b.grid().check_same(self.env0.grid())?;
        let n = self.grid.n();
        let eps = self.cfg.eps;
        let c = &self.cfg.coeffs;
        let a = b.map(|z| z.conj());
        let a_hat = a.spectrum().clone();
        let mut u1 = vec![C64::new(0.0, 0.0); n];
        let mut um1 = vec![C64::new(0.0, 0.0); n];
        self.place(&mut u1, 1, &a_hat, 1.0, t);
        let mut bands = vec![-1, 1];
        if depth >= 1 {
            let a2 = convolve(&a_hat, &a_hat)?;
            let abs2 = hermitian_part(&convolve(&a_hat, &a.map(|z| z.conj()).spectrum().clone())?);
            self.place(&mut u1, 2, &a2, eps * c.ratio21, t);
            self.place(&mut um1, 2, &a2, eps * c.ratio22, t);
            self.place(&mut u1, 0, &abs2, eps * c.ratio01, t);
            self.place(&mut um1, 0, &abs2, eps * c.ratio02, t);
            bands.extend([-2, 0, 2]);
        }
        bands.sort();
        Ok(Approximation {
            t,
            u1: Spectrum::new(self.grid, u1)?,
            um1: Spectrum::new(self.grid, um1)?,
            bands,
            discarded: 0.0,
        })
    }

    /// Approximation per the configured depth and cutoff, from the envelope `b`.
    pub fn build_from(&self, b: &Field, t: f64) -> Result<Approximation> {
        let appr = self.build_depth(b, t, self.cfg.depth)?;
        Ok(if self.cfg.cutoff { fourier_cutoff(&appr, &self.cfg) } else { appr })
    }

    /// Approximation at time `t` with the envelope advanced by the NLS flow.
    pub fn build(&self, t: f64) -> Result<Approximation> {
        self.build_from(&self.envelope_at(t)?, t)
    }
}

/// Free-function form of [`Ansatz::build_leading`].
pub fn build_leading(b: &Field, t: f64, cfg: &AnsatzConfig, grid: PeriodicGrid) -> Result<Approximation> {
    Ansatz::new(cfg.clone(), grid, b.clone())?.build_leading(b, t)
}

/// Free-function form of [`Ansatz::build_extended`].
pub fn build_extended(b: &Field, t: f64, cfg: &AnsatzConfig, grid: PeriodicGrid) -> Result<Approximation> {
    Ansatz::new(cfg.clone(), grid, b.clone())?.build_extended(b, t)
}

/// Whether `k` lies in an allowed band `|k − pk₀| ≤ δ` for one of `bands`.
pub fn in_bands(k: f64, k0: f64, delta: f64, bands: &[i32]) -> bool {
    bands.iter().any(|&p| (k - p as f64 * k0).abs() <= delta)
}

/// Hard truncation of both components to the populated bands.
pub fn fourier_cutoff(appr: &Approximation, cfg: &AnsatzConfig) -> Approximation {
    let keep = |k: f64| in_bands(k, cfg.k0, cfg.delta, &appr.bands);
    let u1 = appr.u1.mask(keep);
    let um1 = appr.um1.mask(keep);
    let r1 = appr.u1.sub(&u1).expect("same grid");
    let r2 = appr.um1.sub(&um1).expect("same grid");
    let discarded = r1.l2_norm().hypot(r2.l2_norm());
    Approximation { t: appr.t, u1, um1, bands: appr.bands.clone(), discarded: appr.discarded + discarded }
}

/// `Res_{U_j} = −∂ₜU_j + jiωU_j + N_j(U)` of an approximation.
#[derive(Clone, Debug)]
pub struct Residual {
    pub t: f64,
    pub res1: Spectrum,
    pub resm1: Spectrum,
    /// `‖D_h U − D_{2h} U‖_{L²}` of the two difference quotients (Richardson pair).
    pub fd_discrepancy: f64,
}

impl Residual {
    /// `(‖Res₁‖² + ‖Res₋₁‖²)^{1/2}` in `H^s`.
    pub fn hs_norm(&self, s: f64) -> Result<f64> {
        Ok(spectrum_sobolev_norm(&self.res1, s)?.hypot(spectrum_sobolev_norm(&self.resm1, s)?))
    }

    /// `H^s` norm restricted to the harmonic band `||k| − p k₀| ≤ k₀/2`.
    pub fn band_norm(&self, s: f64, p: u32, k0: f64) -> Result<f64> {
        Ok(self.component_band_norm(1, s, p, k0)?.hypot(self.component_band_norm(-1, s, p, k0)?))
    }

    /// Band norm of the single component `Res_{U_j}`.
    pub fn component_band_norm(&self, j: i32, s: f64, p: u32, k0: f64) -> Result<f64> {
        let c = p as f64 * k0.abs();
        let w = k0.abs() / 2.0;
        let keep = |k: f64| (k.abs() - c).abs() <= w;
        let r = if j == 1 { &self.res1 } else { &self.resm1 };
        spectrum_sobolev_norm(&r.mask(keep), s)
    }
}

/// Differencing step `h = 10⁻³·2π/ω₀`.
pub fn residual_step(k0: f64) -> f64 {
    1e-3 * 2.0 * std::f64::consts::PI / omega(k0).abs()
}

/// Residual of the configured approximation at time `t`. `∂ₜU` is a
/// fourth-order central difference of the assembled ansatz with the envelope
/// advanced by the NLS flow; the right-hand side is the simulator's.
pub fn residual(ansatz: &Ansatz, t: f64, solver: &EulerPoisson) -> Result<Residual> {
    let h = residual_step(ansatz.cfg.k0);
    let b = ansatz.envelope_at(t)?;
    let c = &ansatz.cfg.coeffs;
    let e2 = ansatz.cfg.eps * ansatz.cfg.eps;
    let build = |dt: f64| -> Result<Approximation> {
        let bb = if dt == 0.0 { b.clone() } else { nls::split_step(&b, c.nu1, c.nu2, e2 * dt, 1)? };
        ansatz.build_from(&bb, t + dt)
    };
    let offsets = [-4.0, -2.0, -1.0, 1.0, 2.0, 4.0];
    let mut samples = Vec::with_capacity(offsets.len());
    for &o in &offsets {
        samples.push(build(o * h)?);
    }
    let center = build(0.0)?;
    let d = |sel: fn(&Approximation) -> &Spectrum, i_m2: usize, i_m1: usize, i_p1: usize, i_p2: usize, hh: f64| {
        let (m2, m1, p1, p2) = (sel(&samples[i_m2]), sel(&samples[i_m1]), sel(&samples[i_p1]), sel(&samples[i_p2]));
        let coef = (0..m2.coef().len())
            .map(|i| (-p2.coef()[i] + 8.0 * p1.coef()[i] - 8.0 * m1.coef()[i] + m2.coef()[i]) / (12.0 * hh))
            .collect();
        Spectrum::new(*m2.grid(), coef).expect("grid-sized")
    };
    let s1: fn(&Approximation) -> &Spectrum = |a| &a.u1;
    let s2: fn(&Approximation) -> &Spectrum = |a| &a.um1;
    let dt1 = d(s1, 1, 2, 3, 4, h);
    let dt2 = d(s2, 1, 2, 3, 4, h);
    let dt1w = d(s1, 0, 1, 4, 5, 2.0 * h);
    let dt2w = d(s2, 0, 1, 4, 5, 2.0 * h);
    let fd_discrepancy = dt1.sub(&dt1w)?.l2_norm().hypot(dt2.sub(&dt2w)?.l2_norm());
    let (r1, r2) = solver.rhs_diag(&center.state()?)?;
    Ok(Residual { t, res1: r1.sub(&dt1)?, resm1: r2.sub(&dt2)?, fd_discrepancy })
}

/// Outcome of [`carrier_phase_check`].
#[derive(Clone, Debug)]
pub struct CarrierPhaseReport {
    pub eps: Vec<f64>,
    /// `Σ_k |∂ₜψ̂₁ − iωψ̂₁|(1+k²)^{s/2} dk` per ε.
    pub norms: Vec<f64>,
    pub slope: f64,
    pub passed: bool,
}

/// `∂ₜψ̂₁ − iω(k)ψ̂₁` at time `t` (fourth-order difference in time). With
/// `frozen = true` the envelope is held fixed.
pub fn carrier_phase_defect(ansatz: &Ansatz, t: f64, frozen: bool) -> Result<Spectrum> {
    let h = residual_step(ansatz.cfg.k0);
    let c = &ansatz.cfg.coeffs;
    let e2 = ansatz.cfg.eps * ansatz.cfg.eps;
    let b = ansatz.envelope_at(t)?;
    let at = |dt: f64| -> Result<Spectrum> {
        let bb = if frozen { b.clone() } else { nls::split_step(&b, c.nu1, c.nu2, e2 * dt, 1)? };
        Ok(ansatz.psi_plus(&bb, t + dt))
    };
    let (m2, m1, p1, p2) = (at(-2.0 * h)?, at(-h)?, at(h)?, at(2.0 * h)?);
    let psi = ansatz.psi_plus(&b, t);
    let g = *psi.grid();
    let coef = (0..g.n())
        .map(|i| {
            let dt = (-p2.coef()[i] + 8.0 * p1.coef()[i] - 8.0 * m1.coef()[i] + m2.coef()[i]) / (12.0 * h);
            dt - C64::new(0.0, omega(g.k(i))) * psi.coef()[i]
        })
        .collect();
    Spectrum::new(g, coef)
}

/// Weighted-`L¹` carrier phase defect at each `ε` and its log-log slope
/// (asserted `≥ 1.8`). `make(ε)` supplies the ansatz for each `ε`.
pub fn carrier_phase_check(
    eps: &[f64],
    s: f64,
    make: impl Fn(f64) -> Result<Ansatz>,
) -> Result<CarrierPhaseReport> {
    let mut norms = Vec::with_capacity(eps.len());
    for &e in eps {
        let a = make(e)?;
        norms.push(carrier_phase_defect(&a, 0.0, false)?.l1_weighted(s));
    }
    let slope = loglog_slope(eps, &norms)?;
    Ok(CarrierPhaseReport { eps: eps.to_vec(), norms, slope, passed: slope >= 1.8 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::qhat;
    use crate::spectral_core::make_grid;
    use std::f64::consts::PI;

    fn setup(eps: f64, depth: u8) -> Ansatz {
        let l = 20.0 * 2.0 * PI;
        let g = make_grid(l, 512).unwrap();
        let eg = nls::envelope_grid(eps, &g, 64).unwrap();
        let cfg = AnsatzConfig::new(eps, 1.0, depth).unwrap();
        Ansatz::new(cfg, g, nls::sech_envelope(eg, 1.0)).unwrap()
    }

    #[test]
    fn zero_envelope_gives_zero_fields() {
        let a = setup(0.1, 1);
        let z = Field::zeros(*a.envelope0().grid());
        let ap = a.build_extended(&z, 0.3).unwrap();
        assert_eq!(ap.u1.l2_norm() + ap.um1.l2_norm(), 0.0);
    }

    #[test]
    fn constant_envelope_gives_cosine() {
        let a = setup(0.1, 0);
        let one = Field::from_fn(*a.envelope0().grid(), |_| 1.0);
        let ap = a.build_leading(&one, 0.0).unwrap();
        let (rho, v) = (ap.rho(), ap.v());
        let q0 = qhat(1.0);
        for i in 0..a.grid().n() {
            let x = a.grid().x(i);
            assert!((rho.samples()[i].re - 0.2 * x.cos()).abs() < 1e-12);
            assert!((v.samples()[i].re + 0.2 * q0 * x.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn fields_are_real_and_cutoff_idempotent() {
        let a = setup(0.1, 1);
        let ap = a.build(0.0).unwrap();
        assert!(ap.u1.to_field().imag_residue() < 1e-12);
        assert!(ap.um1.to_field().imag_residue() < 1e-12);
        let c1 = fourier_cutoff(&ap, a.config());
        let c2 = fourier_cutoff(&c1, a.config());
        assert_eq!(c1.u1, c2.u1);
        assert_eq!(c2.discarded, c1.discarded);
    }

    #[test]
    fn rejects_mismatched_envelope_cell() {
        let g = make_grid(40.0 * PI, 512).unwrap();
        let eg = make_grid(3.0, 64).unwrap();
        let cfg = AnsatzConfig::new(0.1, 1.0, 0).unwrap();
        assert!(matches!(Ansatz::new(cfg, g, Field::zeros(eg)), Err(Error::Interpolation(_))));
    }
}
