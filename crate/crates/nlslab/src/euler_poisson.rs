//! Time integration of the ion Euler–Poisson system
//!
//! ```text
//! ∂ₜρ = −∂ₓv − ∂ₓ(ρv)
//! ∂ₜv = −∂ₓρ − ∂ₓφ − ∂ₓ(v²/2) + ∂ₓ(ρ²/2) − ∂ₓ[ln(1+ρ) − ρ + ρ²/2]
//! ∂ₓ²φ = e^φ − (1+ρ)
//! ```
//!
//! in the diagonal variables `U_{±1} = ½(ρ ∓ q⁻¹v)`, `q = q̂(|∂ₓ|)`, in which the
//! linear part is `∂ₜU_j = j·iω(|∂ₓ|)U_j`. Steps use integrating-factor RK4:
//! the linear phase is applied exactly and only the nonlinearity is
//! approximated.

use crate::dispersion::{omega, qhat};
use crate::error::{Error, Result};
use crate::poisson::solve_phi;
use crate::spectral_core::{
    from_padded_samples, to_padded_samples, Field, PeriodicGrid, Spectrum, C64,
};

/// Full state: time and the two diagonal spectra. Primitive variables are
/// reconstructed on demand.
#[derive(Clone, Debug)]
pub struct PlasmaState {
    pub t: f64,
    u1: Spectrum,
    um1: Spectrum,
}

fn zero_nyquist(mut s: Vec<C64>, grid: &PeriodicGrid) -> Vec<C64> {
    s[grid.n() / 2] = C64::new(0.0, 0.0);
    s
}

impl PlasmaState {
    /// State from primitive fields. Requires `1 + ρ > 0`.
    pub fn from_primitive(t: f64, rho: &Field, v: &Field) -> Result<Self> {
        let min = rho.samples().iter().map(|c| 1.0 + c.re).fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(Error::NonPositiveDensity { min });
        }
        let (u1, um1) = diagonalize(rho, v)?;
        Self::from_diagonal(t, u1.spectrum().clone(), um1.spectrum().clone())
    }

    /// State from diagonal spectra (the Nyquist coefficient is discarded).
    pub fn from_diagonal(t: f64, u1: Spectrum, um1: Spectrum) -> Result<Self> {
        u1.grid().check_same(um1.grid())?;
        let g = *u1.grid();
        Ok(Self {
            t,
            u1: Spectrum::new(g, zero_nyquist(u1.into_coef(), &g))?,
            um1: Spectrum::new(g, zero_nyquist(um1.into_coef(), &g))?,
        })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.u1.grid()
    }

    pub fn u1(&self) -> &Spectrum {
        &self.u1
    }

    pub fn um1(&self) -> &Spectrum {
        &self.um1
    }

    /// `ρ̂ = Û₁ + Û₋₁`.
    pub fn rho_hat(&self) -> Spectrum {
        self.u1.add(&self.um1).expect("same grid")
    }

    /// `v̂ = −q̂(Û₁ − Û₋₁)`.
    pub fn v_hat(&self) -> Spectrum {
        self.u1.zip(&self.um1, |a, b| a - b).expect("same grid").map(|k, c| -qhat(k) * c)
    }

    pub fn rho(&self) -> Field {
        self.rho_hat().to_field().real_projection()
    }

    pub fn v(&self) -> Field {
        self.v_hat().to_field().real_projection()
    }

    /// `∫ρ dx`.
    pub fn mass(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.rho_hat().at_mode(0).re
    }

    /// `max(‖ρ‖_∞, ‖v‖_∞)`.
    pub fn max_abs(&self) -> f64 {
        self.rho().max_abs().max(self.v().max_abs())
    }
}

/// `U_{±1} = ½(ρ ∓ q⁻¹v)`.
pub fn diagonalize(rho: &Field, v: &Field) -> Result<(Field, Field)> {
    rho.grid().check_same(v.grid())?;
    let r = rho.spectrum();
    let w = v.spectrum().map(|k, c| c / qhat(k));
    let u1 = r.zip(&w, |a, b| 0.5 * (a - b))?;
    let um1 = r.zip(&w, |a, b| 0.5 * (a + b))?;
    Ok((u1.to_field().real_projection(), um1.to_field().real_projection()))
}

/// Inverse of [`diagonalize`]: `ρ = U₁ + U₋₁`, `v = −q(U₁ − U₋₁)`.
pub fn undiagonalize(u1: &Field, um1: &Field) -> Result<(Field, Field)> {
    let s = PlasmaState::from_diagonal(0.0, u1.spectrum().clone(), um1.spectrum().clone())?;
    Ok((s.rho(), s.v()))
}

/// Solver options.
#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Drop every nonlinear term (pure linear phase rotation).
    pub linear_only: bool,
    /// Residual tolerance of the Poisson solve at each RK stage.
    pub poisson_tol: f64,
    pub poisson_max_iter: usize,
    /// Upper bound on `|dt|·k_max·(‖ρ‖_∞ + ‖v‖_∞)`.
    pub cfl_limit: f64,
    /// [`simulate`] aborts once `max(‖ρ‖_∞, ‖v‖_∞)` exceeds this value.
    pub linf_ceiling: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            linear_only: false,
            poisson_tol: 1e-11,
            poisson_max_iter: 40,
            cfl_limit: 2.8,
            linf_ceiling: 0.9,
        }
    }
}

/// Precomputed symbols for one grid.
#[derive(Clone, Debug)]
pub struct EulerPoisson {
    grid: PeriodicGrid,
    opts: SolverOptions,
    omega: Vec<f64>,
    q: Vec<f64>,
    ik: Vec<C64>,
    bessel: Vec<f64>,
}

/// `(ρ̂, v̂)` or `(Û₁, Û₋₁)` tendency pair.
pub type Tendency = (Spectrum, Spectrum);

/// Callback sampled along a run.
pub struct Observer<'a> {
    /// Sample every `every` steps (plus the final step).
    pub every: usize,
    pub probe: Box<dyn Fn(&PlasmaState) -> Vec<f64> + Send + Sync + 'a>,
}

impl<'a> Observer<'a> {
    pub fn new(every: usize, probe: impl Fn(&PlasmaState) -> Vec<f64> + Send + Sync + 'a) -> Self {
        Self { every: every.max(1), probe: Box::new(probe) }
    }
}

/// One observer sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub step: usize,
    pub t: f64,
    pub values: Vec<f64>,
}

/// Result of [`EulerPoisson::simulate`].
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub final_state: PlasmaState,
    pub steps: usize,
    /// `records[i]` holds the samples of observer `i`.
    pub records: Vec<Vec<Record>>,
}

impl EulerPoisson {
    pub fn new(grid: PeriodicGrid, opts: SolverOptions) -> Self {
        let n = grid.n();
        let ks = grid.wavenumbers();
        let ik = (0..n)
            .map(|i| if grid.is_nyquist(i) { C64::new(0.0, 0.0) } else { C64::new(0.0, ks[i]) })
            .collect();
        Self {
            grid,
            opts,
            omega: ks.iter().map(|&k| omega(k)).collect(),
            q: ks.iter().map(|&k| qhat(k)).collect(),
            ik,
            bessel: ks.iter().map(|&k| 1.0 / (1.0 + k * k)).collect(),
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    /// Nonlinear tendencies `(N_ρ, N_v)` in Fourier space.
    fn nonlinear_primitive(&self, rho: &[C64], v: &[C64]) -> Result<(Vec<C64>, Vec<C64>)> {
        let g = self.grid;
        let rho_s = Spectrum::new(g, rho.to_vec())?;
        let v_s = Spectrum::new(g, v.to_vec())?;
        let rp = to_padded_samples(&rho_s);
        let vp = to_padded_samples(&v_s);
        let mut min = f64::INFINITY;
        let mut flux = Vec::with_capacity(rp.len());
        let mut pot = Vec::with_capacity(rp.len());
        for (r, w) in rp.iter().zip(&vp) {
            let (r, w) = (r.re, w.re);
            min = min.min(1.0 + r);
            flux.push(C64::new(r * w, 0.0));
            pot.push(C64::new(0.5 * w * w + r.ln_1p() - r, 0.0));
        }
        if !(min > 0.0) {
            return Err(Error::NonPositiveDensity { min });
        }
        let flux_hat = from_padded_samples(g, &flux);
        let pot_hat = from_padded_samples(g, &pot);
        let n_field = rho_s.to_field().map(|c| C64::new(1.0 + c.re, 0.0));
        let phi = solve_phi(&n_field, self.opts.poisson_tol, self.opts.poisson_max_iter)?.phi;
        let phi_hat = phi.spectrum().coef();
        let n = g.n();
        let mut nr = Vec::with_capacity(n);
        let mut nv = Vec::with_capacity(n);
        for i in 0..n {
            nr.push(-self.ik[i] * flux_hat.coef()[i]);
            let phi_nl = phi_hat[i] - self.bessel[i] * rho[i];
            nv.push(-self.ik[i] * (phi_nl + pot_hat.coef()[i]));
        }
        Ok((nr, nv))
    }

    /// Nonlinear diagonal tendencies `N_{U_j} = ½(N_ρ − j q⁻¹N_v)`.
    fn nonlinear_diag(&self, u1: &[C64], um1: &[C64]) -> Result<(Vec<C64>, Vec<C64>)> {
        let n = self.grid.n();
        if self.opts.linear_only {
            return Ok((vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n]));
        }
        let rho: Vec<C64> = u1.iter().zip(um1).map(|(a, b)| a + b).collect();
        let v: Vec<C64> = (0..n).map(|i| -self.q[i] * (u1[i] - um1[i])).collect();
        let (nr, nv) = self.nonlinear_primitive(&rho, &v)?;
        let a = (0..n).map(|i| 0.5 * (nr[i] - nv[i] / self.q[i])).collect();
        let b = (0..n).map(|i| 0.5 * (nr[i] + nv[i] / self.q[i])).collect();
        Ok((a, b))
    }

    /// Full primitive tendency `(∂ₜρ̂, ∂ₜv̂)`.
    pub fn rhs(&self, state: &PlasmaState) -> Result<Tendency> {
        self.grid.check_same(state.grid())?;
        let rho = state.rho_hat();
        let v = state.v_hat();
        let (mut nr, mut nv) = if self.opts.linear_only {
            let z = vec![C64::new(0.0, 0.0); self.grid.n()];
            (z.clone(), z)
        } else {
            self.nonlinear_primitive(rho.coef(), v.coef())?
        };
        for i in 0..self.grid.n() {
            nr[i] -= self.ik[i] * v.coef()[i];
            nv[i] -= self.ik[i] * (1.0 + self.bessel[i]) * rho.coef()[i];
        }
        Ok((Spectrum::new(self.grid, nr)?, Spectrum::new(self.grid, nv)?))
    }

    /// Full diagonal tendency `(∂ₜÛ₁, ∂ₜÛ₋₁) = (iωÛ₁ + N₁, −iωÛ₋₁ + N₋₁)`.
    pub fn rhs_diag(&self, state: &PlasmaState) -> Result<Tendency> {
        self.grid.check_same(state.grid())?;
        let (mut a, mut b) = self.nonlinear_diag(state.u1.coef(), state.um1.coef())?;
        for i in 0..self.grid.n() {
            let iw = C64::new(0.0, self.omega[i]);
            a[i] += iw * state.u1.coef()[i];
            b[i] -= iw * state.um1.coef()[i];
        }
        Ok((Spectrum::new(self.grid, a)?, Spectrum::new(self.grid, b)?))
    }

    /// Nonlinear part of [`Self::rhs_diag`] alone.
    pub fn nonlinear(&self, state: &PlasmaState) -> Result<Tendency> {
        let (a, b) = self.nonlinear_diag(state.u1.coef(), state.um1.coef())?;
        Ok((Spectrum::new(self.grid, a)?, Spectrum::new(self.grid, b)?))
    }

    /// Largest admissible `|dt|` for the given state.
    pub fn max_dt(&self, state: &PlasmaState) -> f64 {
        let amp = state.rho().max_abs() + state.v().max_abs();
        if amp == 0.0 {
            f64::INFINITY
        } else {
            self.opts.cfl_limit / (self.grid.k_max() * amp)
        }
    }

    /// One IFRK4 step with `dt > 0`.
    pub fn step(&self, state: &PlasmaState, dt: f64) -> Result<PlasmaState> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive and finite, got {dt}")));
        }
        self.step_signed(state, dt)
    }

    /// One IFRK4 step; negative `dt` integrates backwards.
    pub fn step_signed(&self, state: &PlasmaState, dt: f64) -> Result<PlasmaState> {
        self.grid.check_same(state.grid())?;
        if !dt.is_finite() || dt == 0.0 {
            return Err(Error::InvalidArgument(format!("dt must be finite and nonzero, got {dt}")));
        }
        if !self.opts.linear_only {
            let bound = self.max_dt(state);
            if dt.abs() > bound {
                return Err(Error::InvalidArgument(format!(
                    "dt = {dt} exceeds the stability bound {bound:.4e}"
                )));
            }
        }
        let n = self.grid.n();
        let half: Vec<[C64; 2]> = self
            .omega
            .iter()
            .map(|&w| {
                let e = C64::from_polar(1.0, w * dt / 2.0);
                [e, e.conj()]
            })
            .collect();
        let u = [state.u1.coef(), state.um1.coef()];
        let lin = |c: usize, i: usize, v: C64, full: bool| {
            let e = half[i][c];
            if full {
                v * e * e
            } else {
                v * e
            }
        };
        let eval = |x: &[Vec<C64>; 2]| self.nonlinear_diag(&x[0], &x[1]).map(|(a, b)| [a, b]);
        let k1 = eval(&[u[0].to_vec(), u[1].to_vec()])?;
        let mk = |f: &dyn Fn(usize, usize) -> C64| -> [Vec<C64>; 2] {
            [(0..n).map(|i| f(0, i)).collect(), (0..n).map(|i| f(1, i)).collect()]
        };
        let x2 = mk(&|c, i| lin(c, i, u[c][i] + 0.5 * dt * k1[c][i], false));
        let k2 = eval(&x2)?;
        let x3 = mk(&|c, i| lin(c, i, u[c][i], false) + 0.5 * dt * k2[c][i]);
        let k3 = eval(&x3)?;
        let x4 = mk(&|c, i| lin(c, i, u[c][i], true) + dt * lin(c, i, k3[c][i], false));
        let k4 = eval(&x4)?;
        let out = mk(&|c, i| {
            lin(c, i, u[c][i], true)
                + dt / 6.0
                    * (lin(c, i, k1[c][i], true)
                        + 2.0 * lin(c, i, k2[c][i] + k3[c][i], false)
                        + k4[c][i])
        });
        let [a, b] = out;
        if a.iter().chain(&b).any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::NonFinite(format!("state at t = {}", state.t + dt)));
        }
        PlasmaState::from_diagonal(state.t + dt, Spectrum::new(self.grid, a)?, Spectrum::new(self.grid, b)?)
    }

    /// Advance to `t₀ + T` with fixed `dt` (the last step is shortened to land
    /// on `T`). Observer `i` is sampled at steps `0, every, 2·every, …` and at
    /// the final step, i.e. `⌈T/(every·dt)⌉ + 1` times.
    pub fn simulate(
        &self,
        init: &PlasmaState,
        t_end: f64,
        dt: f64,
        observers: &[Observer<'_>],
    ) -> Result<Trajectory> {
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!("T must be >= 0, got {t_end}")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let steps = if t_end == 0.0 { 0 } else { ((t_end / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize };
        let t0 = init.t;
        let mut records: Vec<Vec<Record>> = observers
            .iter()
            .map(|o| vec![Record { step: 0, t: t0, values: (o.probe)(init) }])
            .collect();
        let mut state = init.clone();
        for s in 1..=steps {
            let h = if s == steps { t0 + t_end - state.t } else { dt };
            state = if h > 0.0 { self.step(&state, h)? } else { state };
            if s == steps {
                state.t = t0 + t_end;
            }
            let amp = state.max_abs();
            if !amp.is_finite() {
                return Err(Error::NonFinite(format!("state at t = {}", state.t)));
            }
            if amp > self.opts.linf_ceiling {
                return Err(Error::Instability(format!(
                    "sup norm {amp:.4e} exceeds ceiling {} at t = {}",
                    self.opts.linf_ceiling, state.t
                )));
            }
            for (o, rec) in observers.iter().zip(records.iter_mut()) {
                if s % o.every == 0 || s == steps {
                    rec.push(Record { step: s, t: state.t, values: (o.probe)(&state) });
                }
            }
        }
        Ok(Trajectory { final_state: state, steps, records })
    }
}

/// Full primitive tendency with default options.
pub fn rhs(state: &PlasmaState) -> Result<Tendency> {
    EulerPoisson::new(*state.grid(), SolverOptions::default()).rhs(state)
}

/// One IFRK4 step with default options.
pub fn step(state: &PlasmaState, dt: f64) -> Result<PlasmaState> {
    EulerPoisson::new(*state.grid(), SolverOptions::default()).step(state, dt)
}

/// [`EulerPoisson::simulate`] with default options.
pub fn simulate(init: &PlasmaState, t_end: f64, dt: f64, observers: &[Observer<'_>]) -> Result<Trajectory> {
    EulerPoisson::new(*init.grid(), SolverOptions::default()).simulate(init, t_end, dt, observers)
}

/// Default time step `C_cfl·dx`.
pub fn default_dt(grid: &PeriodicGrid, cfl: f64) -> f64 {
    cfl * grid.dx()
}

/// Fraction of `‖ρ‖²` lying in the 10% of the cell farthest from the packet
/// centre (circular centroid of `ρ²`). Monitors self-wrapping of a packet.
pub fn tail_mass(rho: &Field) -> f64 {
    let g = rho.grid();
    let l = g.length();
    let two_pi = 2.0 * std::f64::consts::PI;
    let w: Vec<f64> = rho.samples().iter().map(|c| c.re * c.re).collect();
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let (mut sc, mut ss) = (0.0, 0.0);
    for (i, wi) in w.iter().enumerate() {
        let th = two_pi * g.x(i) / l;
        sc += wi * th.cos();
        ss += wi * th.sin();
    }
    let centre = ss.atan2(sc).rem_euclid(two_pi) / two_pi * l;
    let tail: f64 = w
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            let d = (g.x(*i) - centre).rem_euclid(l);
            let d = d.min(l - d);
            d > 0.4 * l
        })
        .map(|(_, wi)| wi)
        .sum();
    tail / total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_core::make_grid;
    use std::f64::consts::PI;

    fn grid() -> PeriodicGrid {
        make_grid(2.0 * PI, 32).unwrap()
    }

    #[test]
    fn diagonalization_examples() {
        let g = grid();
        let z = Field::zeros(g);
        let (a, b) = diagonalize(&z, &z).unwrap();
        assert_eq!(a.max_abs() + b.max_abs(), 0.0);
        let q1 = qhat(1.0);
        let rho = Field::from_fn(g, |x| x.cos());
        let v = Field::from_fn(g, |x| -q1 * x.cos());
        let (u1, um1) = diagonalize(&rho, &v).unwrap();
        assert!(um1.max_abs() < 1e-14);
        for i in 0..g.n() {
            assert!((u1.samples()[i].re - g.x(i).cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_state_has_zero_tendency() {
        let g = grid();
        let s = PlasmaState::from_primitive(0.0, &Field::zeros(g), &Field::zeros(g)).unwrap();
        let (a, b) = rhs(&s).unwrap();
        assert_eq!(a.l2_norm() + b.l2_norm(), 0.0);
    }

    #[test]
    fn linear_phase_is_exact() {
        let g = grid();
        let ep = EulerPoisson::new(g, SolverOptions { linear_only: true, ..Default::default() });
        let u1 = Spectrum::delta(g, 3, C64::new(1.0, 0.0)).unwrap();
        let s = PlasmaState::from_diagonal(0.0, u1, Spectrum::zeros(g)).unwrap();
        let dt = 0.37;
        let s1 = ep.step(&s, dt).unwrap();
        let expect = C64::from_polar(1.0, omega(3.0) * dt);
        assert!((s1.u1().at_mode(3) - expect).norm() < 1e-12);
    }

    #[test]
    fn step_rejects_bad_dt() {
        let g = grid();
        let s = PlasmaState::from_primitive(0.0, &Field::from_fn(g, |x| 0.3 * x.cos()), &Field::zeros(g)).unwrap();
        assert!(step(&s, 0.0).is_err());
        assert!(step(&s, -0.1).is_err());
        assert!(step(&s, f64::NAN).is_err());
        assert!(step(&s, 10.0).is_err());
    }

    #[test]
    fn observer_record_count() {
        let g = grid();
        let s = PlasmaState::from_primitive(0.0, &Field::from_fn(g, |x| 1e-3 * x.cos()), &Field::zeros(g)).unwrap();
        let obs = [Observer::new(3, |st: &PlasmaState| vec![st.mass()])];
        let tr = simulate(&s, 1.0, 0.1, &obs).unwrap();
        assert_eq!(tr.steps, 10);
        assert_eq!(tr.records[0].len(), (1.0f64 / 0.3).ceil() as usize + 1);
        assert!((tr.final_state.t - 1.0).abs() < 1e-15);
        let tr0 = simulate(&s, 0.0, 0.1, &obs).unwrap();
        assert_eq!(tr0.records[0].len(), 1);
        assert_eq!(tr0.final_state.u1().coef(), s.u1().coef());
    }

    #[test]
    fn tail_mass_of_centred_bump_is_small() {
        let g = make_grid(100.0, 256).unwrap();
        let f = Field::from_fn(g, |x| (-(x - 20.0).powi(2)).exp());
        assert!(tail_mass(&f) < 1e-12);
    }
}
