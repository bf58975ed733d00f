//! NLS modulation equation: coefficients assembled from the Fourier kernels of
//! the diagonalised Euler–Poisson system, and a Strang split-step solver for
//! `∂_T B = iν₁∂_X²B + iν₂|B|²B`.
//!
//! # Frame
//!
//! In the diagonal variables a linear wave `e^{ikx}` in `U₁` evolves as
//! `e^{i(kx+ω(k)t)}`. The packet is therefore written as
//! `U₁ ≈ ε(a(X,T)E + c.c.)`, `E = e^{i(k₀x+ω₀t)}`, `X = ε(x + c_g t)`,
//! `T = ε²t`, with `a = B̄`. The amplitude `a` solves
//! `∂_T a = −iν₁∂_X²a + G|a|²a`, and `ν₂ = iG` is real.
//!
//! Kernel ratios (`ratio2j = Ã₂ⱼ/a²`, `ratio0j = Ã₀ⱼ/|a|²`) refer to `a`.

use serde::{Deserialize, Serialize};

use crate::dispersion::{omega, omega_double_prime, omega_prime, qhat};
use crate::error::{Error, Result};
use crate::spectral_core::{Field, PeriodicGrid, Spectrum, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };

fn bracket(k: f64) -> f64 {
    1.0 + k * k
}

/// Quadratic kernel `K_j^{(ja,jb)}(k; l, m)`, `l + m = k`, of the diagonal
/// system: `N̂_{U_j}(k) ∋ Σ_m K_j^{(ja,jb)}(k; k−m, m) Û_{ja}(k−m) Û_{jb}(m) dk`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadraticKernel {
    pub j: i32,
    pub ja: i32,
    pub jb: i32,
}

impl QuadraticKernel {
    pub fn new(j: i32, ja: i32, jb: i32) -> Self {
        Self { j, ja, jb }
    }

    /// `(ik/2)q̂(m)j_b + (ijk/4q̂(k))q̂(l)q̂(m)j_aj_b − (ijk/4q̂(k))(1 + ⟨k⟩⁻²⟨l⟩⁻²⟨m⟩⁻²)`.
    pub fn eval(&self, k: f64, l: f64, m: f64) -> C64 {
        let (j, ja, jb) = (self.j as f64, self.ja as f64, self.jb as f64);
        let c = j * k / (4.0 * qhat(k));
        let smooth = 1.0 / (bracket(k) * bracket(l) * bracket(m));
        I * (0.5 * k * qhat(m) * jb + c * qhat(l) * qhat(m) * ja * jb - c * (1.0 + smooth))
    }

    /// `½[K^{(ja,jb)}(k;l,m) + K^{(jb,ja)}(k;m,l)]`.
    pub fn symmetrized(&self, k: f64, l: f64, m: f64) -> C64 {
        let swapped = QuadraticKernel::new(self.j, self.jb, self.ja);
        0.5 * (self.eval(k, l, m) + swapped.eval(k, m, l))
    }

    /// `K/(ik)`, the regular part as `k → 0`.
    pub fn slope(&self, k: f64, l: f64, m: f64) -> C64 {
        let (j, ja, jb) = (self.j as f64, self.ja as f64, self.jb as f64);
        let smooth = 1.0 / (bracket(k) * bracket(l) * bracket(m));
        let c = j / (4.0 * qhat(k));
        C64::new(0.5 * qhat(m) * jb + c * qhat(l) * qhat(m) * ja * jb - c * (1.0 + smooth), 0.0)
    }
}

/// Second-harmonic forcing and response.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondHarmonic {
    /// `γ₂ⱼ = iK_j^{(1,1)}(2k₀; k₀, k₀)` (real).
    pub gamma21: f64,
    pub gamma22: f64,
    /// `Ã₂ⱼ/a² = K_j/(i(2ω₀ − jω(2k₀)))` (real).
    pub ratio21: f64,
    pub ratio22: f64,
}

/// Mean-flow forcing and response.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFlow {
    /// `γ₃ⱼ = lim_{k→0} [K_j(k;k₀,−k₀) + K_j(k;−k₀,k₀)]/(ik)`.
    pub gamma31: f64,
    pub gamma32: f64,
    /// `Ã₀ⱼ/|a|² = γ₃ⱼ/(c_g − jω′(0))`.
    pub ratio01: f64,
    pub ratio02: f64,
}

/// All NLS coefficients at one carrier wavenumber.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NlsCoefficients {
    pub k0: f64,
    pub omega0: f64,
    pub cg: f64,
    pub nu1: f64,
    pub gamma21: f64,
    pub gamma22: f64,
    pub ratio21: f64,
    pub ratio22: f64,
    pub gamma31: f64,
    pub gamma32: f64,
    pub ratio01: f64,
    pub ratio02: f64,
    pub nu2: f64,
    /// Whether the direct cubic terms entered `ν₂`.
    pub cubic: bool,
}

fn check_k0(k0: f64) -> Result<()> {
    if !(k0.is_finite() && k0 != 0.0) {
        return Err(Error::InvalidArgument(format!("carrier wavenumber must be finite and nonzero, got {k0}")));
    }
    Ok(())
}

fn nonzero(d: f64, what: &str) -> Result<f64> {
    if d.abs() < 1e-12 {
        Err(Error::Resonance(format!("{what} vanishes ({d:.3e})")))
    } else {
        Ok(d)
    }
}

fn real_part(z: C64, what: &str) -> Result<f64> {
    if z.im.abs() > 1e-10 * z.norm().max(1.0) {
        return Err(Error::NonFinite(format!("{what} has imaginary residue {:.3e}", z.im)));
    }
    Ok(z.re)
}

/// Second-harmonic coefficients (`E²` balance at order `ε²`).
pub fn second_harmonic_coeffs(k0: f64) -> Result<SecondHarmonic> {
    check_k0(k0)?;
    let w0 = omega(k0);
    let w2 = omega(2.0 * k0);
    let mut gam = [0.0; 2];
    let mut rat = [0.0; 2];
    for (idx, j) in [1, -1].into_iter().enumerate() {
        let kj = QuadraticKernel::new(j, 1, 1).eval(2.0 * k0, k0, k0);
        let d = nonzero(2.0 * w0 - j as f64 * w2, "second-harmonic denominator")?;
        gam[idx] = real_part(I * kj, "γ₂")?;
        rat[idx] = real_part(kj / (I * d), "second-harmonic ratio")?;
    }
    Ok(SecondHarmonic { gamma21: gam[0], gamma22: gam[1], ratio21: rat[0], ratio22: rat[1] })
}

/// Mean-flow coefficients (`E⁰` balance at order `ε³`), analytic limit.
pub fn mean_flow_coeffs(k0: f64) -> Result<MeanFlow> {
    check_k0(k0)?;
    let cg = omega_prime(k0);
    let mut gam = [0.0; 2];
    let mut rat = [0.0; 2];
    for (idx, j) in [1, -1].into_iter().enumerate() {
        let kern = QuadraticKernel::new(j, 1, 1);
        let g = kern.slope(0.0, k0, -k0) + kern.slope(0.0, -k0, k0);
        gam[idx] = real_part(g, "γ₃")?;
        let d = nonzero(cg - j as f64 * omega_prime(0.0), "mean-flow denominator")?;
        rat[idx] = gam[idx] / d;
    }
    Ok(MeanFlow { gamma31: gam[0], gamma32: gam[1], ratio01: rat[0], ratio02: rat[1] })
}

/// `γ₃ⱼ` by a small-`k` numerical limit of `K/(ik)` (Richardson on `h`, `h/10`).
pub fn mean_flow_gamma_numeric(k0: f64, j: i32, h: f64) -> C64 {
    let kern = QuadraticKernel::new(j, 1, 1);
    let f = |k: f64| {
        (kern.eval(k, k0 + k / 2.0, -k0 + k / 2.0) + kern.eval(k, -k0 + k / 2.0, k0 + k / 2.0)) / (I * k)
    };
    (10.0 * f(h / 10.0) - f(h)) / 9.0
}

/// `E¹` coefficient of the direct cubic terms, `(ik₀/2q̂₀)(1 + β₁⁴(1+β₂)/2)`,
/// `β₁ = ⟨k₀⟩⁻²`, `β₂ = ⟨2k₀⟩⁻²`: the `ρ³/3` term of the logarithm and the cubic
/// term of the Poisson inversion.
pub fn cubic_coefficient(k0: f64) -> C64 {
    let b1 = 1.0 / bracket(k0);
    let b2 = 1.0 / bracket(2.0 * k0);
    I * (k0 / (2.0 * qhat(k0))) * (1.0 + b1.powi(4) * (1.0 + b2) / 2.0)
}

/// `G` in `∂_T a = −iν₁∂_X²a + G|a|²a`.
fn g_coefficient(k0: f64, sh: &SecondHarmonic, mf: &MeanFlow, cubic: bool) -> C64 {
    let k = |ja, jb, l, m| QuadraticKernel::new(1, ja, jb).eval(k0, l, m);
    let mean = (k(1, 1, k0, 0.0) + k(1, 1, 0.0, k0)) * mf.ratio01
        + (k(1, -1, k0, 0.0) + k(-1, 1, 0.0, k0)) * mf.ratio02;
    let second = (k(1, 1, -k0, 2.0 * k0) + k(1, 1, 2.0 * k0, -k0)) * sh.ratio21
        + (k(1, -1, -k0, 2.0 * k0) + k(-1, 1, 2.0 * k0, -k0)) * sh.ratio22;
    let mut g = mean + second;
    if cubic {
        g += cubic_coefficient(k0);
    }
    g
}

/// `ν₂(k₀)` with all contributions.
pub fn nu2(k0: f64) -> Result<f64> {
    Ok(coefficients(k0)?.nu2)
}

/// Full coefficient record.
pub fn coefficients(k0: f64) -> Result<NlsCoefficients> {
    coefficients_with(k0, true)
}

/// Coefficient record; `cubic = false` drops the direct cubic terms from `ν₂`
/// (ablation).
pub fn coefficients_with(k0: f64, cubic: bool) -> Result<NlsCoefficients> {
    check_k0(k0)?;
    let sh = second_harmonic_coeffs(k0)?;
    let mf = mean_flow_coeffs(k0)?;
    let g = g_coefficient(k0, &sh, &mf, cubic);
    let nu2 = real_part(I * g, "ν₂")?;
    Ok(NlsCoefficients {
        k0,
        omega0: omega(k0),
        cg: omega_prime(k0),
        nu1: 0.5 * omega_double_prime(k0),
        gamma21: sh.gamma21,
        gamma22: sh.gamma22,
        ratio21: sh.ratio21,
        ratio22: sh.ratio22,
        gamma31: mf.gamma31,
        gamma32: mf.gamma32,
        ratio01: mf.ratio01,
        ratio02: mf.ratio02,
        nu2,
        cubic,
    })
}

/// Strang split-step for `∂_T B = iν₁∂_X²B + iν₂|B|²B`: half nonlinear phase
/// rotation, exact linear step `B̂ ↦ e^{−iν₁K²dT}B̂`, half nonlinear rotation.
/// Negative `dT` integrates backwards.
pub fn split_step(b: &Field, nu1: f64, nu2: f64, dt: f64, steps: usize) -> Result<Field> {
    if !dt.is_finite() || !nu1.is_finite() || !nu2.is_finite() {
        return Err(Error::InvalidArgument("split_step parameters must be finite".into()));
    }
    let grid = *b.grid();
    let lin: Vec<C64> = grid.wavenumbers().iter().map(|&k| C64::from_polar(1.0, -nu1 * k * k * dt)).collect();
    let half = |f: &Field| f.map(|c| c * C64::from_polar(1.0, 0.5 * nu2 * c.norm_sqr() * dt));
    let mut cur = b.clone();
    for _ in 0..steps {
        let h = half(&cur);
        let s = h.spectrum();
        let coef = s.coef().iter().zip(&lin).map(|(c, e)| c * e).collect();
        cur = half(&Spectrum::new(grid, coef)?.to_field());
    }
    if cur.samples().iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
        return Err(Error::NonFinite("envelope".into()));
    }
    Ok(cur)
}

/// Evolve over slow time `T` (any sign) with at most `|dT| ≤ dt_max` per step.
pub fn evolve(b: &Field, nu1: f64, nu2: f64, t: f64, dt_max: f64) -> Result<Field> {
    if t == 0.0 {
        return Ok(b.clone());
    }
    let steps = (t.abs() / dt_max).ceil().max(1.0) as usize;
    split_step(b, nu1, nu2, t / steps as f64, steps)
}

/// Envelope grid of length `L_X = ε·L` so that envelope modes coincide with
/// physical modes.
pub fn envelope_grid(eps: f64, physical: &PeriodicGrid, n: usize) -> Result<PeriodicGrid> {
    PeriodicGrid::new(eps * physical.length(), n)
}

/// `amp·sech(X − X_c)` on the envelope grid, centred in the cell.
pub fn sech_envelope(grid: PeriodicGrid, amp: f64) -> Field {
    let c = grid.length() / 2.0;
    Field::from_fn(grid, |x| amp / (x - c).cosh())
}

/// NLS soliton `a·sech(bX)e^{icT}` with `b² = ν₂a²/(2ν₁)`, `c = ν₂a²/2`
/// (requires `ν₁ν₂ > 0`), centred in the cell.
pub fn soliton(grid: PeriodicGrid, nu1: f64, nu2: f64, amp: f64, t: f64) -> Result<Field> {
    if !(nu1 * nu2 > 0.0) {
        return Err(Error::InvalidArgument("soliton requires nu1*nu2 > 0".into()));
    }
    let b = (nu2 * amp * amp / (2.0 * nu1)).sqrt();
    let c = nu2 * amp * amp / 2.0;
    let x0 = grid.length() / 2.0;
    let phase = C64::from_polar(1.0, c * t);
    Ok(Field::from_fn_complex(grid, |x| phase * (amp / (b * (x - x0)).cosh())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_core::make_grid;

    #[test]
    fn kernel_reality() {
        let kern = QuadraticKernel::new(-1, 1, -1);
        let (k, m) = (0.7, -1.9);
        let a = kern.eval(k, k - m, m);
        let b = kern.eval(-k, -(k - m), -m);
        assert!((a.conj() - b).norm() < 1e-15);
    }

    #[test]
    fn second_harmonic_denominator_at_unit_k0() {
        let d = 2.0 * omega(1.0) + omega(2.0);
        assert!((d - 4.640_379_6).abs() < 1e-6);
        let sh = second_harmonic_coeffs(1.0).unwrap();
        assert!(sh.ratio21.is_finite() && sh.ratio22.is_finite());
        assert!(second_harmonic_coeffs(0.0).is_err());
    }

    #[test]
    fn mean_flow_limit_agrees_with_richardson() {
        for k0 in [0.5, 1.0, 2.0] {
            let mf = mean_flow_coeffs(k0).unwrap();
            for (j, g) in [(1, mf.gamma31), (-1, mf.gamma32)] {
                let num = mean_flow_gamma_numeric(k0, j, 1e-4);
                assert!(num.im.abs() < 1e-10);
                assert!((num.re - g).abs() <= 1e-6 * g.abs().max(1e-3), "{k0} {j} {} {}", num.re, g);
            }
        }
    }

    #[test]
    fn nu2_parity_matches_nu1() {
        // k₀ ↦ −k₀ conjugates the packet: both coefficients flip sign together.
        for k0 in [0.5, 1.0, 1.5] {
            let a = coefficients(k0).unwrap();
            let b = coefficients(-k0).unwrap();
            assert!(a.nu2.is_finite());
            assert!((a.nu2 + b.nu2).abs() < 1e-12 * a.nu2.abs().max(1.0));
            assert!((a.nu1 + b.nu1).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_envelope_rotates_by_nonlinear_phase() {
        let g = make_grid(10.0, 32).unwrap();
        let a = C64::new(0.6, 0.2);
        let f = Field::from_fn_complex(g, |_| a);
        let out = split_step(&f, -0.3, 0.8, 1e-2, 100).unwrap();
        let expect = a * C64::from_polar(1.0, 0.8 * a.norm_sqr() * 1.0);
        for c in out.samples() {
            assert!((c - expect).norm() < 1e-12);
        }
    }
}
