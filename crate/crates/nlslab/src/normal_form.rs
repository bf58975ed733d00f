//! Normal-form machinery for the error equations around a wave packet.
//!
//! # Conventions
//!
//! Bilinear operators act on a carrier profile `φ` (Fourier support in the
//! bands `|l ∓ k₀| < δ`) and an error field `R`:
//!
//! `B̂(φ, R)(k) = Σ_m b(k, k−m, m) φ̂(k−m) R̂(m) dk`,
//!
//! so in every kernel `k` is the output wavenumber, `l = k − m` the carrier
//! wavenumber and `m` the error wavenumber. The quadratic interaction of the
//! carrier with the error in component `j₁` is `(ik/2)Σ_n α̂ⁿ_{j₁j₂}` with the
//! five real pieces of [`NormalForm::alpha`]; the resonance denominator is
//! `−j₁ω(k) − ω(l) + j₂ω(m)`.
//!
//! Error components are split by the weight `ϑ̂` and the projections
//! `P̂⁰ = 1_{|k|≤δ}`, `P̂¹ = 1 − P̂⁰`. Pairs of components are stored as
//! `[j = +1, j = −1]`.
//!
//! Kernels vanish outside their declared support unless the evaluator is
//! strict, in which case an out-of-support evaluation is an error.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dispersion::{omega, omega_prime, qhat};
use crate::error::{Error, Result};
use crate::par::par_range_map;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::spectral_core::{convolve, Field, PeriodicGrid, Spectrum, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
/// Component signs in storage order.
pub const SIGNS: [i32; 2] = [1, -1];

fn bracket(k: f64) -> f64 {
    1.0 + k * k
}

fn check_sign(name: &str, j: i32) -> Result<()> {
    if j == 1 || j == -1 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be ±1, got {j}")))
    }
}

/// `jk + ω(k)` without cancellation for `j = −1` (`ω − k = k/((1+k²)(q̂+1))`).
pub fn omega_plus_jk(j: i32, k: f64) -> f64 {
    if j > 0 {
        k * (qhat(k) + 1.0)
    } else {
        k / (bracket(k) * (qhat(k) + 1.0))
    }
}

// ---------------------------------------------------------------------------
// Weight and projections
// ---------------------------------------------------------------------------

/// The weight `ϑ̂(k) = 1` for `|k| > δ`, `ε + (1−ε)|k|/δ` for `|k| ≤ δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub eps: f64,
    pub delta: f64,
}

impl Theta {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidArgument(format!("eps must lie in (0, 1], got {eps}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
        }
        Ok(Self { eps, delta })
    }

    /// `ϑ̂(k)`; continuous, even, `ε ≤ ϑ̂ ≤ 1`.
    pub fn hat(&self, k: f64) -> f64 {
        if k.abs() > self.delta {
            1.0
        } else {
            self.eps + (1.0 - self.eps) * k.abs() / self.delta
        }
    }

    /// `ϑ̂₀ = ϑ̂ − ε` on `|k| ≤ δ`: vanishes at `k = 0`, `1 − ε` at `|k| = δ`.
    pub fn hat0(&self, k: f64) -> f64 {
        if k.abs() > self.delta {
            1.0 - self.eps
        } else {
            (1.0 - self.eps) * k.abs() / self.delta
        }
    }

    /// `P̂⁰(k) = 1_{|k| ≤ δ}`.
    pub fn p0(&self, k: f64) -> f64 {
        if k.abs() <= self.delta {
            1.0
        } else {
            0.0
        }
    }

    /// `P̂¹ = 1 − P̂⁰`.
    pub fn p1(&self, k: f64) -> f64 {
        1.0 - self.p0(k)
    }
}

// ---------------------------------------------------------------------------
// Kernel families
// ---------------------------------------------------------------------------

/// Bilinear kernel families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// The quadratic interaction pieces `α̂ⁿ` themselves.
    Alpha,
    /// Low-frequency output, high-frequency error (`|k| ≤ δ`).
    B01,
    /// High-frequency output, low-frequency error (`|k| > δ`, `|m| ≤ δ`).
    B10,
    /// High-frequency output and error (`|k| > δ`, `|m| > δ`).
    B11,
    /// The separately stated form of the `n = 5` high–high kernel.
    B115,
    /// Commutator kernel `s` of the adjoint identity, as stated.
    SPrinted,
    /// Commutator kernel reconstructed from the exact adjoint of `b¹¹`.
    SExact,
}

impl Family {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "alpha" => Family::Alpha,
            "b01" => Family::B01,
            "b10" => Family::B10,
            "b11" => Family::B11,
            "b115" => Family::B115,
            "s" | "s_printed" => Family::SPrinted,
            "s_exact" => Family::SExact,
            other => return Err(Error::InvalidArgument(format!("unknown kernel family `{other}`"))),
        })
    }
}

/// A concrete bilinear kernel: family, interaction index `n` (0 sums
/// `n = 1..=5`, or `1..=4` for the `S` families) and component signs.
///
/// For the `S` families `(j1, j2)` are the indices of the `B` operator whose
/// adjoint identity the kernel belongs to; the kernel itself is that of
/// `S_{j₂j₁}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: Family,
    pub n: u8,
    pub j1: i32,
    pub j2: i32,
}

impl KernelSpec {
    pub fn new(family: Family, n: u8, j1: i32, j2: i32) -> Self {
        Self { family, n, j1, j2 }
    }
}

/// Evaluator for every normal-form kernel at fixed `(k₀, ε, δ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalForm {
    pub k0: f64,
    pub theta: Theta,
    /// Error (instead of returning zero) on out-of-support evaluations.
    pub strict: bool,
}

impl NormalForm {
    /// Requires `0 < δ < |k₀|/2` so that the bands `|l ∓ k₀| < δ` and
    /// `|k| ≤ δ` are disjoint.
    pub fn new(k0: f64, eps: f64, delta: f64) -> Result<Self> {
        if !(k0.is_finite() && k0 != 0.0) {
            return Err(Error::InvalidArgument(format!("k0 must be finite and nonzero, got {k0}")));
        }
        if !(delta < k0.abs() / 2.0) {
            return Err(Error::InvalidArgument(format!("delta = {delta} must be below |k0|/2")));
        }
        Ok(Self { k0, theta: Theta::new(eps, delta)?, strict: false })
    }

    pub fn with_strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn eps(&self) -> f64 {
        self.theta.eps
    }

    pub fn delta(&self) -> f64 {
        self.theta.delta
    }

    fn in_carrier(&self, l: f64) -> bool {
        (l - self.k0).abs() < self.delta() || (l + self.k0).abs() < self.delta()
    }

    fn outside(&self, what: &str, k: f64, l: f64, m: f64) -> Result<f64> {
        if self.strict {
            Err(Error::OutOfSupport(format!("{what} at (k, l, m) = ({k}, {l}, {m})")))
        } else {
            Ok(0.0)
        }
    }

    fn finite(what: &str, v: f64, k: f64, l: f64, m: f64) -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("{what} at (k, l, m) = ({k}, {l}, {m})")))
        }
    }

    /// Interaction piece `α̂ⁿ_{j₁j₂}(k, l, m)` for `n = 1..=5`:
    /// `j₂q̂(m)`, `q̂(l)`, `j₁j₂q̂(l)q̂(m)/q̂(k)`, `−j₁/q̂(k)` and
    /// `−j₁/(q̂(k)⟨k⟩²⟨l⟩²⟨m⟩²)`. Real and even in `(k, l, m)`.
    pub fn alpha(&self, n: u8, j1: i32, j2: i32, k: f64, l: f64, m: f64) -> Result<f64> {
        alpha(n, j1, j2, k, l, m)
    }

    /// `−j₁ω(k) − ω(l) + j₂ω(m)`.
    pub fn denominator(j1: i32, j2: i32, k: f64, l: f64, m: f64) -> f64 {
        -(j1 as f64) * omega(k) - omega(l) + (j2 as f64) * omega(m)
    }

    /// `b̂⁰¹ = −k P̂⁰(k) α̂ⁿ/den · ϑ̂(m)/(2ϑ̂(k))`.
    ///
    /// At `k = 0` with `j₂ = −1` the denominator vanishes together with the
    /// factor `k`; the kernel takes its limit along fixed `l`.
    pub fn b01(&self, n: u8, j1: i32, j2: i32, k: f64, l: f64, m: f64) -> Result<f64> {
        let a = alpha(n, j1, j2, k, l, m)?;
        if k.abs() > self.delta() || !self.in_carrier(l) {
            return self.outside("b01", k, l, m);
        }
        let den = Self::denominator(j1, j2, k, l, m);
        let k_over_den = if k == 0.0 {
            if den == 0.0 {
                1.0 / (-(j1 as f64) * omega_prime(0.0) + (j2 as f64) * omega_prime(m))
            } else {
                0.0
            }
        } else {
            k / den
        };
        let th = &self.theta;
        Self::finite("b01", -k_over_den * a * th.hat(m) / (2.0 * th.hat(k)), k, l, m)
    }

    /// Frozen-carrier form `b̂^{0,1,n,ℓ,ν}(k)`: `b̂⁰¹` with `l = ℓk₀`,
    /// `m = k − ℓk₀` and weight `ϑ̂(k − (ℓ+ν)k₀)` in place of `ϑ̂(m)`.
    pub fn b01_frozen(&self, n: u8, j1: i32, j2: i32, ell: i32, nu: i32, k: f64) -> Result<f64> {
        check_sign("ell", ell)?;
        check_sign("nu", nu)?;
        let l = ell as f64 * self.k0;
        let m = k - l;
        let a = alpha(n, j1, j2, k, l, m)?;
        if k.abs() > self.delta() {
            return self.outside("b01_frozen", k, l, m);
        }
        let den = Self::denominator(j1, j2, k, l, m);
        let k_over_den = if k == 0.0 && den == 0.0 {
            1.0 / (-(j1 as f64) * omega_prime(0.0) + (j2 as f64) * omega_prime(m))
        } else if k == 0.0 {
            0.0
        } else {
            k / den
        };
        let th = &self.theta;
        let w = th.hat(k - (ell + nu) as f64 * self.k0);
        Self::finite("b01_frozen", -k_over_den * a * w / (2.0 * th.hat(k)), k, l, m)
    }

    /// `b̂¹⁰ = −½k P̂¹(k) α̂ⁿ/den · ϑ̂₀(m)/ϑ̂(k)`.
    ///
    /// The denominator vanishes exactly where `m = 0` and `j₁ = −1`; there
    /// `ϑ̂₀(0) = 0` and the kernel is set to zero (the factor it multiplies
    /// vanishes identically).
    pub fn b10(&self, n: u8, j1: i32, j2: i32, k: f64, l: f64, m: f64) -> Result<f64> {
        let a = alpha(n, j1, j2, k, l, m)?;
        if k.abs() <= self.delta() || m.abs() > self.delta() || !self.in_carrier(l) {
            return self.outside("b10", k, l, m);
        }
        let th = &self.theta;
        let w = th.hat0(m);
        if w == 0.0 {
            return Ok(0.0);
        }
        let den = Self::denominator(j1, j2, k, l, m);
        Self::finite("b10", -0.5 * k * a / den * w / th.hat(k), k, l, m)
    }

    /// Frozen-carrier form of `b̂¹⁰` with `l = ±k₀`, `m = k ∓ k₀`.
    pub fn b10_frozen(&self, n: u8, j1: i32, j2: i32, ell: i32, k: f64) -> Result<f64> {
        check_sign("ell", ell)?;
        let l = ell as f64 * self.k0;
        self.b10(n, j1, j2, k, l, k - l)
    }

    /// One-sided limit of [`NormalForm::b10_frozen`] as `k → ℓk₀` from the side
    /// `side = ±1`: the ratio `ϑ̂₀(k − ℓk₀)/den` tends to
    /// `±(1−ε)/(δ·∂ₖden)`.
    pub fn b10_frozen_limit(&self, n: u8, j1: i32, j2: i32, ell: i32, side: i32) -> Result<f64> {
        check_sign("ell", ell)?;
        check_sign("side", side)?;
        let k = ell as f64 * self.k0;
        let a = alpha(n, j1, j2, k, k, 0.0)?;
        let dden = -(j1 as f64) * omega_prime(k) + (j2 as f64) * omega_prime(0.0);
        let den0 = Self::denominator(j1, j2, k, k, 0.0);
        if den0.abs() > 1e-14 {
            // Nonresonant branch: the weight kills the kernel at m = 0.
            return Ok(0.0);
        }
        let ratio = side as f64 * (1.0 - self.eps()) / (self.delta() * dden);
        Ok(-0.5 * k * a * ratio)
    }

    /// `b̂¹¹ = −½k P̂¹(k) α̂ⁿ/den · ϑ̂(m)/ϑ̂(k)`.
    pub fn b11(&self, n: u8, j1: i32, j2: i32, k: f64, l: f64, m: f64) -> Result<f64> {
        let a = alpha(n, j1, j2, k, l, m)?;
        if k.abs() <= self.delta() || m.abs() <= self.delta() || !self.in_carrier(l) {
            return self.outside("b11", k, l, m);
        }
        let den = Self::denominator(j1, j2, k, l, m);
        let th = &self.theta;
        Self::finite("b11", -0.5 * k * a / den * th.hat(m) / th.hat(k), k, l, m)
    }

    /// Separately stated `n = 5` high–high kernel
    /// `j₁k P̂¹(k)/den · ⟨k⟩⁻²⟨l⟩⁻²⟨m⟩⁻² · ϑ̂(m)/(2ϑ̂(k))`. It differs from
    /// `b̂¹¹` with `n = 5` by the factor `q̂(k)`.
    pub fn b115(&self, j1: i32, j2: i32, k: f64, l: f64, m: f64) -> Result<f64> {
        check_sign("j1", j1)?;
        check_sign("j2", j2)?;
        if k.abs() <= self.delta() || m.abs() <= self.delta() || !self.in_carrier(l) {
            return self.outside("b115", k, l, m);
        }
        let den = Self::denominator(j1, j2, k, l, m);
        let th = &self.theta;
        let smooth = 1.0 / (bracket(k) * bracket(l) * bracket(m));
        Self::finite("b115", j1 as f64 * k / den * smooth * th.hat(m) / (2.0 * th.hat(k)), k, l, m)
    }

    /// Stated commutator kernel `ŝⁿ_{j₂j₁}(k, l, m)` (`n = 1..=4`), to be
    /// applied to `(∂ₓh, f)`. With `den' = −j₂ω(k) − ω(l) + j₁ω(m)` and `∓`
    /// equal to `−` for `j₁ = j₂`:
    /// `ŝ¹ = ∓j₁(kq̂(m) − mq̂(k))/(2il·den')`, `ŝ² = −q̂(l)/(2i·den')`,
    /// `ŝ³ = ∓(kq̂(m) − mq̂(k))q̂(l)/(2il·den')`, `ŝ⁴ = j₁/(2i·den')`.
    pub fn s_printed(&self, n: u8, j1: i32, j2: i32, k: f64, l: f64, m: f64) -> Result<C64> {
        check_sign("j1", j1)?;
        check_sign("j2", j2)?;
        if k.abs() <= self.delta() || m.abs() <= self.delta() || !self.in_carrier(l) {
            return Ok(C64::new(self.outside("s", k, l, m)?, 0.0));
        }
        let den = Self::denominator(j2, j1, k, l, m);
        let mp = if j1 == j2 { -1.0 } else { 1.0 };
        let cross = k * qhat(m) - m * qhat(k);
        let num = match n {
            1 => mp * j1 as f64 * cross / l,
            2 => -qhat(l),
            3 => mp * cross * qhat(l) / l,
            4 => j1 as f64,
            _ => return Err(Error::InvalidArgument(format!("s kernel index must be 1..=4, got {n}"))),
        };
        Ok(C64::new(num, 0.0) / (2.0 * I * den))
    }

    /// Commutator kernel making the adjoint identity exact:
    /// `(b̂¹¹_{j₁j₂}(−m, l, −k) − cₙ b̂¹¹_{j₂j₁}(k, l, m))/(il)` with
    /// `cₙ = −j₁/j₂` for `n ∈ {1, 4}` and `−1` for `n ∈ {2, 3}`.
    pub fn s_exact(&self, n: u8, j1: i32, j2: i32, k: f64, l: f64, m: f64) -> Result<C64> {
        let c = adjoint_coefficient(n, j1, j2)?;
        let adj = self.b11(n, j1, j2, -m, l, -k)?;
        let direct = self.b11(n, j2, j1, k, l, m)?;
        if adj == 0.0 && direct == 0.0 {
            return Ok(ZERO);
        }
        Ok(C64::new(adj - c * direct, 0.0) / (I * l))
    }

    /// Evaluate the kernel named by `spec` (`n = 0` sums over all pieces).
    pub fn eval(&self, spec: &KernelSpec, k: f64, l: f64, m: f64) -> Result<C64> {
        check_sign("j1", spec.j1)?;
        check_sign("j2", spec.j2)?;
        let (j1, j2) = (spec.j1, spec.j2);
        let one = |n: u8| -> Result<C64> {
            Ok(match spec.family {
                Family::Alpha => C64::new(alpha(n, j1, j2, k, l, m)?, 0.0),
                Family::B01 => C64::new(self.b01(n, j1, j2, k, l, m)?, 0.0),
                Family::B10 => C64::new(self.b10(n, j1, j2, k, l, m)?, 0.0),
                Family::B11 => C64::new(self.b11(n, j1, j2, k, l, m)?, 0.0),
                Family::B115 => C64::new(self.b115(j1, j2, k, l, m)?, 0.0),
                Family::SPrinted => self.s_printed(n, j1, j2, k, l, m)?,
                Family::SExact => self.s_exact(n, j1, j2, k, l, m)?,
            })
        };
        let top = match spec.family {
            Family::SPrinted | Family::SExact => 4,
            Family::B115 => 1,
            _ => 5,
        };
        if spec.n == 0 {
            (1..=top).try_fold(ZERO, |acc, n| Ok(acc + one(n)?))
        } else if spec.family == Family::B115 {
            one(5)
        } else {
            one(spec.n)
        }
    }

    /// `B̂(φ, R)(k) = Σ_m b(k, k−m, m) φ̂(k−m) R̂(m) dk`, evaluated exactly on
    /// the lattice by direct summation over the nonzero modes of `φ`
    /// (products whose wavenumber leaves the lattice are dropped, never
    /// aliased). Cost `O(N · #supp φ̂)`.
    pub fn apply_bilinear(&self, spec: &KernelSpec, phi: &Spectrum, r: &Spectrum) -> Result<Spectrum> {
        self.apply_kernel(|k, l, m| self.eval(spec, k, l, m), phi, r)
    }

    /// [`NormalForm::apply_bilinear`] for an arbitrary kernel closure.
    pub fn apply_kernel<F>(&self, kernel: F, phi: &Spectrum, r: &Spectrum) -> Result<Spectrum>
    where
        F: Fn(f64, f64, f64) -> Result<C64> + Sync + Send,
    {
        let grid = *phi.grid();
        grid.check_same(r.grid())?;
        let dk = grid.dk();
        let support: Vec<(i64, C64)> = phi
            .coef()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm_sqr() > 0.0)
            .map(|(i, &c)| (grid.mode(i), c))
            .collect();
        let rc = r.coef();
        let out = par_range_map(grid.n(), |i| -> Result<C64> {
            let jk = grid.mode(i);
            let mut acc = ZERO;
            for &(jl, pc) in &support {
                let jm = jk - jl;
                let Some(im) = grid.index_of_mode(jm) else { continue };
                if grid.mode(im) != jm {
                    continue;
                }
                let rm = rc[im];
                if rm.norm_sqr() == 0.0 {
                    continue;
                }
                let b = kernel(jk as f64 * dk, jl as f64 * dk, jm as f64 * dk)?;
                acc += b * pc * rm;
            }
            Ok(acc * dk)
        });
        Spectrum::new(grid, out.into_iter().collect::<Result<Vec<_>>>()?)
    }

    // -----------------------------------------------------------------------
    // Spectral operators
    // -----------------------------------------------------------------------

    pub fn p0(&self, f: &Spectrum) -> Spectrum {
        f.map(|k, c| c * self.theta.p0(k))
    }

    pub fn p1(&self, f: &Spectrum) -> Spectrum {
        f.map(|k, c| c * self.theta.p1(k))
    }

    pub fn theta_mul(&self, f: &Spectrum) -> Spectrum {
        f.map(|k, c| c * self.theta.hat(k))
    }

    pub fn theta_inv_mul(&self, f: &Spectrum) -> Spectrum {
        f.map(|k, c| c / self.theta.hat(k))
    }

    pub fn theta0_mul(&self, f: &Spectrum) -> Spectrum {
        f.map(|k, c| c * self.theta.hat0(k))
    }

    /// Carrier part of `φ` in the band `|k − ℓk₀| < δ`.
    pub fn carrier_band(&self, phi: &Spectrum, ell: i32) -> Spectrum {
        let c = ell as f64 * self.k0;
        phi.mask(|k| (k - c).abs() < self.delta())
    }

    /// Both carrier bands of `φ`.
    pub fn carrier_part(&self, phi: &Spectrum) -> Spectrum {
        phi.mask(|k| self.in_carrier(k))
    }

    /// Symbol of `G_{j₁j₂}`: `χ/(−2i(jk + ω))` on the diagonal and `χ/2` off
    /// it, with `χ = P̂¹`.
    pub fn g_symbol(&self, j1: i32, j2: i32, k: f64) -> Result<C64> {
        check_sign("j1", j1)?;
        check_sign("j2", j2)?;
        let chi = self.theta.p1(k);
        if chi == 0.0 {
            return Ok(ZERO);
        }
        Ok(if j1 == j2 {
            C64::new(chi, 0.0) / (-2.0 * I * omega_plus_jk(j1, k))
        } else {
            C64::new(0.5 * chi, 0.0)
        })
    }

    pub fn apply_g(&self, j1: i32, j2: i32, f: &Spectrum) -> Result<Spectrum> {
        check_sign("j1", j1)?;
        check_sign("j2", j2)?;
        Ok(f.map(|k, c| c * self.g_symbol(j1, j2, k).unwrap_or(ZERO)))
    }

    // -----------------------------------------------------------------------
    // Second-stage transform near k = 0
    // -----------------------------------------------------------------------

    /// `−j₁ω(k) − 2ω(σk₀) + j₃ω(k − 2σk₀)`.
    pub fn d_denominator(&self, j1: i32, j3: i32, sigma: i32, k: f64) -> f64 {
        let s = sigma as f64 * self.k0;
        -(j1 as f64) * omega(k) - 2.0 * omega(s) + (j3 as f64) * omega(k - 2.0 * s)
    }

    /// Symbol `d^σ_{j₁j₃}(k)` of the second-stage transform,
    /// `εD̂^σ_{j₁j₃} = ε² d^σ_{j₁j₃}(k)·(ψ_σψ_σR¹_{j₃})^(k)`:
    ///
    /// `½ Σ_{j₂,n,ñ} b̂^{0,1,n,σ,σ}_{j₁j₂}(k) ϑ̂⁻¹(k−σk₀) P̂¹(k−σk₀) (k−σk₀)
    ///  (−α̂^ñ_{j₂j₃}(k−σk₀, σk₀, k−2σk₀)) ϑ̂(k−2σk₀) / d_den(k)`.
    pub fn d_symbol(&self, j1: i32, j3: i32, sigma: i32, k: f64) -> Result<f64> {
        check_sign("j1", j1)?;
        check_sign("j3", j3)?;
        check_sign("sigma", sigma)?;
        if k.abs() > self.delta() {
            return self.outside("d", k, sigma as f64 * self.k0, k);
        }
        let s = sigma as f64 * self.k0;
        let th = &self.theta;
        let mid = k - s;
        let inner = th.p1(mid) * mid * th.hat(k - 2.0 * s) / (th.hat(mid) * self.d_denominator(j1, j3, sigma, k));
        let mut acc = 0.0;
        for j2 in SIGNS {
            for n in 1..=5 {
                let b = self.b01_frozen(n, j1, j2, sigma, sigma, k)?;
                for nt in 1..=5 {
                    acc += b * (-alpha(nt, j2, j3, mid, s, k - 2.0 * s)?);
                }
            }
        }
        Self::finite("d", 0.5 * acc * inner, k, s, k - s)
    }

    /// Scan of the second-stage denominator over `|k| ≤ δ`.
    pub fn d_transform_check(&self, j1: i32, j3: i32, sigma: i32) -> Result<DBound> {
        check_sign("j1", j1)?;
        check_sign("j3", j3)?;
        check_sign("sigma", sigma)?;
        let n = 2000;
        let at_zero = self.d_denominator(j1, j3, sigma, 0.0);
        let min_abs = (-n..=n)
            .map(|i| self.d_denominator(j1, j3, sigma, self.delta() * i as f64 / n as f64).abs())
            .fold(f64::INFINITY, f64::min);
        Ok(DBound { j1, j3, sigma, at_zero, min_abs })
    }

    /// Low-frequency correction `εF_{j₁}(R¹)` with
    /// `F_{j₁} = Σ_{j₂,n} B⁰¹ⁿ_{j₁j₂}(φ_c, R¹_{j₂}) + Σ_{σ,j₃} D^σ_{j₁j₃}`;
    /// the transformed variable is `𝓡⁰ = R⁰ + εF(R¹)`.
    pub fn low_frequency_correction(&self, phi_c: &Spectrum, r1: [&Spectrum; 2]) -> Result<[Spectrum; 2]> {
        let eps = self.eps();
        let phi = self.carrier_part(phi_c);
        let psi = [self.carrier_band(phi_c, 1), self.carrier_band(phi_c, -1)];
        let psi_sq = [convolve(&psi[0], &psi[0])?, convolve(&psi[1], &psi[1])?];
        let mut out = Vec::with_capacity(2);
        for j1 in SIGNS {
            let mut acc = Spectrum::zeros(*phi_c.grid());
            for (i2, j2) in SIGNS.into_iter().enumerate() {
                let b = self.apply_bilinear(&KernelSpec::new(Family::B01, 0, j1, j2), &phi, r1[i2])?;
                acc = acc.add(&b)?;
            }
            for (is, sigma) in SIGNS.into_iter().enumerate() {
                for (i3, j3) in SIGNS.into_iter().enumerate() {
                    let prod = convolve(&psi_sq[is], r1[i3])?.mask(|k| k.abs() <= self.delta());
                    let d = prod.map(|k, c| c * (eps * self.d_symbol(j1, j3, sigma, k).unwrap_or(f64::NAN)));
                    acc = acc.add(&d)?;
                }
            }
            let acc = acc.scale_re(eps);
            if acc.coef().iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(Error::NonFinite("low-frequency correction".into()));
            }
            out.push(acc);
        }
        let [a, b]: [Spectrum; 2] = out.try_into().expect("two components");
        Ok([a, b])
    }
}

/// Free-standing form of [`NormalForm::alpha`].
pub fn alpha(n: u8, j1: i32, j2: i32, k: f64, l: f64, m: f64) -> Result<f64> {
    check_sign("j1", j1)?;
    check_sign("j2", j2)?;
    let (s1, s2) = (j1 as f64, j2 as f64);
    Ok(match n {
        1 => s2 * qhat(m),
        2 => qhat(l),
        3 => s1 * s2 * qhat(l) * qhat(m) / qhat(k),
        4 => -s1 / qhat(k),
        5 => -s1 / (qhat(k) * bracket(k) * bracket(l) * bracket(m)),
        _ => return Err(Error::InvalidArgument(format!("alpha index must be 1..=5, got {n}"))),
    })
}

/// Coefficient `cₙ` of the transposed operator in the adjoint identity:
/// `−j₁/j₂` for `n ∈ {1, 4}`, `−1` for `n ∈ {2, 3}`.
pub fn adjoint_coefficient(n: u8, j1: i32, j2: i32) -> Result<f64> {
    check_sign("j1", j1)?;
    check_sign("j2", j2)?;
    match n {
        1 | 4 => Ok(-(j1 as f64) / (j2 as f64)),
        2 | 3 => Ok(-1.0),
        _ => Err(Error::InvalidArgument(format!("adjoint identity index must be 1..=4, got {n}"))),
    }
}

/// Lower bound of the second-stage denominator over `|k| ≤ δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DBound {
    pub j1: i32,
    pub j3: i32,
    pub sigma: i32,
    pub at_zero: f64,
    pub min_abs: f64,
}

/// Seeded random real spectrum on modes `|j| ≤ jmax` where `keep(k)` holds,
/// with coefficients uniform in the unit square scaled by `1/(1+k²)`.
pub fn random_real_spectrum(grid: PeriodicGrid, seed: u64, jmax: i64, keep: impl Fn(f64) -> bool) -> Spectrum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coef = vec![ZERO; grid.n()];
    let jmax = jmax.min(grid.n() as i64 / 2 - 1);
    for j in 1..=jmax {
        let k = j as f64 * grid.dk();
        let c = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) / (1.0 + k * k);
        if keep(k) {
            coef[j as usize] = c;
        }
        if keep(-k) {
            coef[grid.n() - j as usize] = c.conj();
        }
    }
    let c0 = rng.gen_range(-1.0..1.0);
    if keep(0.0) {
        coef[0] = C64::new(c0, 0.0);
    }
    Spectrum::from_vec(grid, coef)
}

// ---------------------------------------------------------------------------
// Operator identities
// ---------------------------------------------------------------------------

fn omega_mul(f: &Spectrum) -> Spectrum {
    f.map(|k, c| c * I * omega(k))
}

fn deriv(f: &Spectrum, order: u32) -> Spectrum {
    f.map(|k, c| c * (I * k).powu(order))
}

fn rel(defect: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        defect / scale
    } else {
        defect
    }
}

/// Which near-identity transform a cancellation check refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transform {
    B01,
    B10,
    B11,
}

/// Relative defect of one cancellation relation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CancellationDefect {
    pub transform: Transform,
    pub n: u8,
    pub j1: i32,
    pub j2: i32,
    pub defect: f64,
}

impl NormalForm {
    /// Relative defect of
    /// `−j₁ΩB(φ,f) − B(Ωφ,f) + j₂B(φ,Ωf) + (P∂ₓ/2ϑ)αⁿ_{j₁j₂}(φ, w f) = 0`,
    /// where `Ω = iω(k)`, and `(P, w) = (P⁰, ϑ)` for `B⁰¹`, `(P¹, ϑ₀)` for
    /// `B¹⁰`, `(P¹, ϑ)` for `B¹¹`. The carrier `φ` must live in the bands
    /// `|l ∓ k₀| < δ`; `f` should be `P¹`-supported for `B⁰¹`/`B¹¹` and
    /// `P⁰`-supported for `B¹⁰`.
    pub fn cancellation_defect(
        &self,
        transform: Transform,
        n: u8,
        j1: i32,
        j2: i32,
        phi: &Spectrum,
        f: &Spectrum,
    ) -> Result<CancellationDefect> {
        let family = match transform {
            Transform::B01 => Family::B01,
            Transform::B10 => Family::B10,
            Transform::B11 => Family::B11,
        };
        let spec = KernelSpec::new(family, n, j1, j2);
        let b = self.apply_bilinear(&spec, phi, f)?;
        let t1 = omega_mul(&b).scale_re(-(j1 as f64));
        let t2 = self.apply_bilinear(&spec, &omega_mul(phi), f)?.scale_re(-1.0);
        let t3 = self.apply_bilinear(&spec, phi, &omega_mul(f))?.scale_re(j2 as f64);
        let wf = match transform {
            Transform::B10 => self.theta0_mul(f),
            _ => self.theta_mul(f),
        };
        let a = self.apply_bilinear(&KernelSpec::new(Family::Alpha, n, j1, j2), phi, &wf)?;
        let th = self.theta;
        let forcing = a.map(|k, c| {
            let p = if transform == Transform::B01 { th.p0(k) } else { th.p1(k) };
            c * I * k * p / (2.0 * th.hat(k))
        });
        let total = t1.add(&t2)?.add(&t3)?.add(&forcing)?;
        Ok(CancellationDefect { transform, n, j1, j2, defect: rel(total.l2_norm(), forcing.l2_norm()) })
    }

    /// All cancellation defects for one transform (`n = 1..=5`, `j₁, j₂ = ±1`).
    pub fn cancellation_suite(&self, transform: Transform, phi: &Spectrum, f: &Spectrum) -> Result<Vec<CancellationDefect>> {
        let mut out = Vec::new();
        for n in 1..=5 {
            for j1 in SIGNS {
                for j2 in SIGNS {
                    out.push(self.cancellation_defect(transform, n, j1, j2, phi, f)?);
                }
            }
        }
        Ok(out)
    }
}

/// One adjoint identity `∫f·B_{j₁j₂}(h,g) = cₙ∫B_{j₂j₁}(h,f)·g + ∫S_{j₂j₁}(∂h,f)·g`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjointRow {
    pub n: u8,
    pub j1: i32,
    pub j2: i32,
    pub lhs: f64,
    pub rhs_printed: f64,
    pub rhs_exact: f64,
    /// Relative defect with the stated commutator kernel.
    pub defect_printed: f64,
    /// Relative defect with the exact commutator kernel.
    pub defect_exact: f64,
}

impl NormalForm {
    /// Check the adjoint identities of `B¹¹` for `n = 1..=4`. `h` is a carrier
    /// profile; `f` and `g` are real `P¹`-supported fields. Integrals are exact
    /// lattice sums.
    pub fn verify_adjoint_identities(&self, h: &Spectrum, f: &Spectrum, g: &Spectrum) -> Result<Vec<AdjointRow>> {
        let dh = deriv(h, 1);
        let mut rows = Vec::new();
        for n in 1..=4 {
            for j1 in SIGNS {
                for j2 in SIGNS {
                    let c = adjoint_coefficient(n, j1, j2)?;
                    let lhs = f.integral_product(&self.apply_bilinear(&KernelSpec::new(Family::B11, n, j1, j2), h, g)?)?;
                    let bt = c * self.apply_bilinear(&KernelSpec::new(Family::B11, n, j2, j1), h, f)?.integral_product(g)?;
                    let sp = self
                        .apply_bilinear(&KernelSpec::new(Family::SPrinted, n, j1, j2), &dh, f)?
                        .integral_product(g)?;
                    let se = self
                        .apply_bilinear(&KernelSpec::new(Family::SExact, n, j1, j2), &dh, f)?
                        .integral_product(g)?;
                    let scale = lhs.abs().max(bt.abs()).max(sp.abs()).max(se.abs());
                    rows.push(AdjointRow {
                        n,
                        j1,
                        j2,
                        lhs,
                        rhs_printed: bt + sp,
                        rhs_exact: bt + se,
                        defect_printed: rel((lhs - bt - sp).abs(), scale),
                        defect_exact: rel((lhs - bt - se).abs(), scale),
                    });
                }
            }
        }
        Ok(rows)
    }
}

/// Both sides of an integral identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub defect: f64,
}

impl IdentityCheck {
    fn new(lhs: f64, rhs: f64, scale: f64) -> Self {
        Self { lhs, rhs, defect: rel((lhs - rhs).abs(), scale.max(lhs.abs()).max(rhs.abs())) }
    }
}

fn dx(f: &Field) -> Field {
    deriv(f.spectrum(), 1).to_field().real_projection()
}

fn int3(a: &Field, b: &Field, c: &Field) -> f64 {
    let dxs = a.grid().dx();
    a.samples().iter().zip(b.samples()).zip(c.samples()).map(|((x, y), z)| x.re * y.re * z.re).sum::<f64>() * dxs
}

fn add(a: &Field, b: &Field) -> Result<Field> {
    a.add(b)
}

fn sub(a: &Field, b: &Field) -> Result<Field> {
    a.sub(b)
}

/// `∫a f ∂f = −½∫∂a f²`.
pub fn identity_part1(a: &Field, f: &Field) -> Result<IdentityCheck> {
    a.grid().check_same(f.grid())?;
    let lhs = int3(a, f, &dx(f));
    let rhs = -0.5 * int3(&dx(a), f, f);
    Ok(IdentityCheck::new(lhs, rhs, 0.0))
}

/// `Σⱼ∫aⱼfⱼ∂f₋ⱼ = ½∫(a₋₁−a₁)(f₁+f₋₁)∂(f₁−f₋₁) + Rem`, with
/// `Rem = −½Σⱼ∫∂aⱼfⱼf₋ⱼ + ¼∫∂(a₋₁−a₁)(f₁²−f₋₁²)`.
pub fn identity_part2(a: [&Field; 2], f: [&Field; 2]) -> Result<IdentityCheck> {
    let lhs = int3(a[0], f[0], &dx(f[1])) + int3(a[1], f[1], &dx(f[0]));
    let am = sub(a[1], a[0])?;
    let fs = add(f[0], f[1])?;
    let fd = sub(f[0], f[1])?;
    let main = 0.5 * int3(&am, &fs, &dx(&fd));
    let rem = -0.5 * (int3(&dx(a[0]), f[0], f[1]) + int3(&dx(a[1]), f[1], f[0])) + 0.25 * int3(&dx(&am), &fs, &fd);
    Ok(IdentityCheck::new(lhs, main + rem, main.abs()))
}

/// `Σⱼ j∫aⱼfⱼ∂f₋ⱼ = −½∫(a₁+a₋₁)(f₁+f₋₁)∂(f₁−f₋₁) + Rem`, with
/// `Rem = −½Σⱼ j∫∂aⱼfⱼf₋ⱼ − ¼∫∂(a₁+a₋₁)(f₁²−f₋₁²)`.
pub fn identity_part3(a: [&Field; 2], f: [&Field; 2]) -> Result<IdentityCheck> {
    let lhs = int3(a[0], f[0], &dx(f[1])) - int3(a[1], f[1], &dx(f[0]));
    let ap = add(a[0], a[1])?;
    let fs = add(f[0], f[1])?;
    let fd = sub(f[0], f[1])?;
    let main = -0.5 * int3(&ap, &fs, &dx(&fd));
    let rem = -0.5 * (int3(&dx(a[0]), f[0], f[1]) - int3(&dx(a[1]), f[1], f[0])) - 0.25 * int3(&dx(&ap), &fs, &fd);
    Ok(IdentityCheck::new(lhs, main + rem, main.abs()))
}

/// Largest relative defects of `Ĝ₋₁,₋₁ + Ĝ₁,₁ = (1/(−ik) + ik)q̂χ` and
/// `Ĝ₋₁,₋₁ − Ĝ₁,₁ = (1/(−ik) + ik)χ` over the given wavenumbers.
pub fn g_identity_defects(nf: &NormalForm, ks: &[f64]) -> Result<(f64, f64)> {
    let mut worst = (0.0f64, 0.0f64);
    for &k in ks {
        let chi = nf.theta.p1(k);
        if chi == 0.0 {
            continue;
        }
        let gm = nf.g_symbol(-1, -1, k)?;
        let gp = nf.g_symbol(1, 1, k)?;
        let sym = (1.0 / (-I * k) + I * k) * chi;
        let d4 = (gm + gp - sym * qhat(k)).norm() / (sym * qhat(k)).norm();
        let d5 = (gm - gp - sym).norm() / sym.norm();
        worst = (worst.0.max(d4), worst.1.max(d5));
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Kernel bounds
// ---------------------------------------------------------------------------

/// Large-`|k|` behaviour of one `b̂¹¹ⁿ` along `l = k₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticRow {
    pub n: u8,
    pub j1: i32,
    pub j2: i32,
    /// Log–log slope of `|b̂ − stated leading term|` against `|k|`.
    pub slope_printed: f64,
    /// Same with the leading term of the `j, −j` branch halved.
    pub slope_corrected: f64,
    /// `|b̂ − stated|` at the largest `|k|`.
    pub remainder_printed: f64,
    pub remainder_corrected: f64,
}

/// Stated leading behaviour of `b̂¹¹ⁿ_{j₁j₂}(k, l, m)` as `|k| → ∞`.
pub fn b11_leading_printed(n: u8, j1: i32, j2: i32, k: f64, l: f64, m: f64) -> Result<f64> {
    check_sign("j1", j1)?;
    check_sign("j2", j2)?;
    let j = j1 as f64;
    let d = j * l + omega(l);
    Ok(if j1 == j2 {
        match n {
            1 => j * k * qhat(m) / (2.0 * d),
            2 => k * qhat(l) / (2.0 * d),
            3 => k * qhat(l) * qhat(m) / (2.0 * d),
            4 => -j * k / (2.0 * d),
            _ => return Err(Error::InvalidArgument(format!("asymptotics cover n = 1..=4, got {n}"))),
        }
    } else {
        match n {
            1 => -qhat(m) / 2.0,
            2 => j * qhat(l) / 2.0,
            3 => -j * qhat(l) * qhat(m) / 2.0,
            4 => -0.5,
            _ => return Err(Error::InvalidArgument(format!("asymptotics cover n = 1..=4, got {n}"))),
        }
    })
}

/// Leading behaviour with the `j, −j` constants halved (`ω(k) + ω(m) ≈ 2k`).
pub fn b11_leading_corrected(n: u8, j1: i32, j2: i32, k: f64, l: f64, m: f64) -> Result<f64> {
    let v = b11_leading_printed(n, j1, j2, k, l, m)?;
    Ok(if j1 == j2 { v } else { 0.5 * v })
}

fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.max(1e-300).ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

/// Finite-lattice kernel bounds with their recorded constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelBounds {
    pub k0: f64,
    pub eps: f64,
    pub delta: f64,
    /// `max |ϑ̂(k) b̂⁰¹|` on a coarse and a 4× refined scan of the support.
    pub b01_theta_max: f64,
    pub b01_theta_max_refined: f64,
    /// `max |ϑ̂(k) b̂⁰¹|` on the `j₂ = +1` branch at `k ∈ {10⁻², 10⁻⁴, 10⁻⁶}`.
    pub b01_small_k: [f64; 3],
    /// `max |b̂¹⁰|` on a scan of the support.
    pub b10_max: f64,
    /// Worst ratio `b̂¹⁰(k₀(1+10⁻⁸))/limit` over the resonant branch.
    pub b10_near_k0_ratio: f64,
    /// `max |b̂¹¹|/(1+|k|)` on a scan of the support.
    pub b11_growth_max: f64,
    pub asymptotics: Vec<AsymptoticRow>,
    pub d_bounds: Vec<DBound>,
}

impl KernelBounds {
    /// The `j, j` expansions hold with an `O(1/|k|)` remainder.
    pub fn diagonal_asymptotics_ok(&self) -> bool {
        self.asymptotics.iter().filter(|r| r.j1 == r.j2).all(|r| r.slope_printed <= -0.9)
    }

    /// The stated `j, −j` limits hold with an `O(1/|k|)` remainder.
    pub fn offdiagonal_asymptotics_printed_ok(&self) -> bool {
        self.asymptotics.iter().filter(|r| r.j1 != r.j2).all(|r| r.slope_printed <= -0.9)
    }

    /// The halved `j, −j` limits hold with an `O(1/|k|)` remainder.
    pub fn offdiagonal_asymptotics_corrected_ok(&self) -> bool {
        self.asymptotics.iter().filter(|r| r.j1 != r.j2).all(|r| r.slope_corrected <= -0.9)
    }

    pub fn b01_bounded(&self) -> bool {
        self.b01_theta_max.is_finite()
            && self.b01_theta_max_refined <= 1.1 * self.b01_theta_max
            && self.b01_small_k.iter().all(|v| v.is_finite() && *v <= 1.1 * self.b01_theta_max_refined)
    }

    pub fn b10_finite_near_k0(&self) -> bool {
        self.b10_max.is_finite() && (0.5..=2.0).contains(&self.b10_near_k0_ratio)
    }

    pub fn d_bounded_away(&self) -> bool {
        self.d_bounds.iter().all(|d| d.min_abs > 0.0)
    }
}

impl NormalForm {
    fn b01_theta_scan(&self, nk: usize, nl: usize) -> Result<f64> {
        let d = self.delta();
        let mut worst = 0.0f64;
        for ik in 0..=nk {
            let k = -d + 2.0 * d * ik as f64 / nk as f64;
            for il in 0..=nl {
                let off = 0.99 * d * (2.0 * il as f64 / nl as f64 - 1.0);
                for ell in SIGNS {
                    let l = ell as f64 * self.k0 + off;
                    for n in 1..=5 {
                        for j1 in SIGNS {
                            for j2 in SIGNS {
                                let v = self.b01(n, j1, j2, k, l, k - l)?;
                                worst = worst.max((self.theta.hat(k) * v).abs());
                            }
                        }
                    }
                }
            }
        }
        Ok(worst)
    }

    /// Evaluate the whole bound suite.
    pub fn kernel_bounds(&self) -> Result<KernelBounds> {
        let nf = self.with_strict(false);
        let d = self.delta();
        let b01_theta_max = nf.b01_theta_scan(200, 20)?;
        let b01_theta_max_refined = nf.b01_theta_scan(800, 80)?;

        let mut b01_small_k = [0.0; 3];
        for (slot, k) in [1e-2, 1e-4, 1e-6].into_iter().enumerate() {
            let mut w = 0.0f64;
            for n in 1..=5 {
                for j1 in SIGNS {
                    for ell in SIGNS {
                        let l = ell as f64 * self.k0;
                        w = w.max((nf.theta.hat(k) * nf.b01(n, j1, 1, k, l, k - l)?).abs());
                    }
                }
            }
            b01_small_k[slot] = w;
        }

        let mut b10_max = 0.0f64;
        for ik in 0..=400 {
            let m = -0.999 * d + 1.998 * d * ik as f64 / 400.0;
            for ell in SIGNS {
                for il in 0..=10 {
                    let l = ell as f64 * self.k0 + 0.99 * d * (il as f64 / 5.0 - 1.0);
                    for n in 1..=5 {
                        for j1 in SIGNS {
                            for j2 in SIGNS {
                                b10_max = b10_max.max(nf.b10(n, j1, j2, l + m, l, m)?.abs());
                            }
                        }
                    }
                }
            }
        }

        let mut b10_near_k0_ratio: f64 = 1.0;
        for n in 1..=5 {
            for j2 in SIGNS {
                let k = self.k0 * (1.0 + 1e-8);
                let v = nf.b10_frozen(n, -1, j2, 1, k)?;
                let side = if k > self.k0 { 1 } else { -1 };
                let lim = nf.b10_frozen_limit(n, -1, j2, 1, side)?;
                if lim != 0.0 {
                    let r = v / lim;
                    if (r - 1.0).abs() > (b10_near_k0_ratio - 1.0).abs() {
                        b10_near_k0_ratio = r;
                    }
                }
            }
        }

        let mut b11_growth_max = 0.0f64;
        for ik in 0..=400 {
            let k = 1.01 * d + (50.0 - 1.01 * d) * ik as f64 / 400.0;
            for sk in [1.0, -1.0] {
                for ell in SIGNS {
                    let l = ell as f64 * self.k0;
                    let k = sk * k;
                    if (k - l).abs() <= d {
                        continue;
                    }
                    for n in 1..=5 {
                        for j1 in SIGNS {
                            for j2 in SIGNS {
                                b11_growth_max = b11_growth_max.max(nf.b11(n, j1, j2, k, l, k - l)?.abs() / (1.0 + k.abs()));
                            }
                        }
                    }
                }
            }
        }

        let ks = [100.0, 200.0, 400.0, 800.0, 1600.0];
        let mut asymptotics = Vec::new();
        for n in 1..=4 {
            for j1 in SIGNS {
                for j2 in SIGNS {
                    let l = self.k0;
                    let mut rp = Vec::new();
                    let mut rc = Vec::new();
                    for &k in &ks {
                        let b = nf.b11(n, j1, j2, k, l, k - l)?;
                        rp.push((b - b11_leading_printed(n, j1, j2, k, l, k - l)?).abs());
                        rc.push((b - b11_leading_corrected(n, j1, j2, k, l, k - l)?).abs());
                    }
                    asymptotics.push(AsymptoticRow {
                        n,
                        j1,
                        j2,
                        slope_printed: loglog_slope(&ks, &rp),
                        slope_corrected: loglog_slope(&ks, &rc),
                        remainder_printed: rp[rp.len() - 1],
                        remainder_corrected: rc[rc.len() - 1],
                    });
                }
            }
        }

        let mut d_bounds = Vec::new();
        for sigma in SIGNS {
            for j1 in SIGNS {
                for j3 in SIGNS {
                    d_bounds.push(nf.d_transform_check(j1, j3, sigma)?);
                }
            }
        }

        Ok(KernelBounds {
            k0: self.k0,
            eps: self.eps(),
            delta: d,
            b01_theta_max,
            b01_theta_max_refined,
            b01_small_k,
            b10_max,
            b10_near_k0_ratio,
            b11_growth_max,
            asymptotics,
            d_bounds,
        })
    }
}

// ---------------------------------------------------------------------------
// Energy
// ---------------------------------------------------------------------------

/// Sign of the `q̂φ₂` term in the energy correction `h_ℓ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HSign {
    /// `φ₁ + φ₂ − 2q̂φ₂`.
    Minus,
    /// `φ₁ + φ₂ + 2q̂φ₂`.
    Plus,
}

/// Inputs of the energy functional. All fields are real.
#[derive(Clone, Debug)]
pub struct EnergyInput {
    /// Leading profile `φ_c` (only its carrier bands are used in the
    /// bilinear terms).
    pub phi_c: Spectrum,
    /// Next-order profiles `[ψ_{p,1}, ψ_{p,−1}]` (zero if absent).
    pub phi_p: [Spectrum; 2],
    /// Transformed low-frequency error `𝓡⁰`.
    pub r0: [Spectrum; 2],
    /// High-frequency error `R¹`.
    pub r1: [Spectrum; 2],
}

/// Terms of one derivative level `ℓ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyLevel {
    pub ell: u32,
    /// `½Σⱼ(‖∂^ℓ𝓡⁰ⱼ‖² + ‖∂^ℓR¹ⱼ‖²)`.
    pub base: f64,
    /// `εΣ_{j₁,j₂,n}∫∂^ℓR¹_{j₁}·∂^ℓ(B¹⁰ + B¹¹)`.
    pub cross: f64,
    /// `h_ℓ` with the requested sign (zero for `ℓ = 0`).
    pub h: f64,
    /// `h_ℓ` with the other sign.
    pub h_alt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub s: u32,
    pub eps: f64,
    pub levels: Vec<EnergyLevel>,
    /// `𝓔_s = Σ_ℓ (base + cross)`.
    pub energy: f64,
    /// `𝓔̃_s = 𝓔_s + (ε²/4)Σ_{ℓ≥1} h_ℓ`.
    pub modified: f64,
    /// `𝓔̃_s` with the other sign of the `q̂φ₂` term.
    pub modified_alt: f64,
    /// `Σ_ℓ base`.
    pub base: f64,
    /// `𝓔_s / base`.
    pub ratio: f64,
}

fn weighted_inner(a: &Spectrum, b: &Spectrum, ell: u32) -> f64 {
    let g = a.grid();
    let s: f64 = a
        .coef()
        .iter()
        .zip(b.coef())
        .enumerate()
        .map(|(i, (x, y))| g.k(i).powi(2 * ell as i32) * (x.conj() * y).re)
        .sum();
    2.0 * PI * g.dk() * s
}

impl NormalForm {
    /// Raw low-frequency error `R⁰ = 𝓡⁰ − εF(R¹)`.
    pub fn untransform_low(&self, phi_c: &Spectrum, r0: [&Spectrum; 2], r1: [&Spectrum; 2]) -> Result<[Spectrum; 2]> {
        let corr = self.low_frequency_correction(phi_c, r1)?;
        Ok([r0[0].sub(&corr[0])?, r0[1].sub(&corr[1])?])
    }

    /// Transformed low-frequency error `𝓡⁰ = R⁰ + εF(R¹)`.
    pub fn transform_low(&self, phi_c: &Spectrum, r0: [&Spectrum; 2], r1: [&Spectrum; 2]) -> Result<[Spectrum; 2]> {
        let corr = self.low_frequency_correction(phi_c, r1)?;
        Ok([r0[0].add(&corr[0])?, r0[1].add(&corr[1])?])
    }

    /// Energy `𝓔_s`, modified energy `𝓔̃_s` and their base norm. The
    /// undefined auxiliary term of `h_ℓ` is taken to be zero.
    pub fn energy(&self, input: &EnergyInput, s: u32, sign: HSign) -> Result<EnergyReport> {
        let eps = self.eps();
        let phi = self.carrier_part(&input.phi_c);
        let r0 = [&input.r0[0], &input.r0[1]];
        let r1 = [&input.r1[0], &input.r1[1]];

        // Σ_{j₂,n} B¹⁰_{j₁j₂}(φ_c, 𝓡⁰_{j₂}) + B¹¹_{j₁j₂}(φ_c, R¹_{j₂}) per j₁.
        let mut bsum = Vec::with_capacity(2);
        for j1 in SIGNS {
            let mut acc = Spectrum::zeros(*phi.grid());
            for (i2, j2) in SIGNS.into_iter().enumerate() {
                acc = acc.add(&self.apply_bilinear(&KernelSpec::new(Family::B10, 0, j1, j2), &phi, r0[i2])?)?;
                acc = acc.add(&self.apply_bilinear(&KernelSpec::new(Family::B11, 0, j1, j2), &phi, r1[i2])?)?;
            }
            bsum.push(acc);
        }

        // Profiles entering h_ℓ.
        let raw0 = self.untransform_low(&input.phi_c, r0, r1)?;
        let se = eps.sqrt();
        let th0s = self.theta_mul(&raw0[0].add(&raw0[1])?);
        let th0d = self.theta_mul(&raw0[0].sub(&raw0[1])?);
        let r1s = r1[0].add(r1[1])?;
        let r1d = r1[0].sub(r1[1])?;
        let phi3 = input.phi_p[0].add(&input.phi_p[1])?.add(&th0s.add(&r1s.scale_re(0.5))?.scale_re(se))?;
        let phi4 = input.phi_p[0].sub(&input.phi_p[1])?.add(&th0d.add(&r1d.scale_re(0.5))?.scale_re(se))?;
        let phi1 = input.phi_c.add(&phi3.scale_re(eps))?;
        let phi2 = input.phi_c.add(&phi4.scale_re(eps))?;
        let q2 = input.phi_c.map(|k, c| c * (-1.0 - k * k) * qhat(k) * qhat(k)).to_field().real_projection();
        let phic_f = input.phi_c.to_field().real_projection();
        let phi1_f = phi1.to_field().real_projection();
        let sgn = match sign {
            HSign::Minus => -1.0,
            HSign::Plus => 1.0,
        };
        let a_term = q2.zip(&phi1_f, |x, y| 2.0 * x * y)?;
        let b_term = |sgn: f64| -> Result<Field> {
            let mix = phi1.add(&phi2)?.add(&phi2.map(|k, c| c * 2.0 * sgn * qhat(k)))?.to_field().real_projection();
            phic_f.zip(&mix, |x, y| x * y)
        };
        let (b_main, b_alt) = (b_term(sgn)?, b_term(-sgn)?);

        let mut levels = Vec::new();
        for ell in 0..=s {
            let mut base = 0.0;
            let mut cross = 0.0;
            for i in 0..2 {
                base += 0.5 * (weighted_inner(r0[i], r0[i], ell) + weighted_inner(r1[i], r1[i], ell));
                cross += eps * weighted_inner(r1[i], &bsum[i], ell);
            }
            let (h, h_alt) = if ell == 0 {
                (0.0, 0.0)
            } else {
                let d = deriv(&r1s, ell).to_field().real_projection();
                let a = a_term.scale((2 * ell + 1) as f64);
                (int3(&a.add(&b_main)?, &d, &d), int3(&a.add(&b_alt)?, &d, &d))
            };
            levels.push(EnergyLevel { ell, base, cross, h, h_alt });
        }
        let base: f64 = levels.iter().map(|l| l.base).sum();
        let energy: f64 = levels.iter().map(|l| l.base + l.cross).sum();
        let modified = energy + 0.25 * eps * eps * levels.iter().map(|l| l.h).sum::<f64>();
        let modified_alt = energy + 0.25 * eps * eps * levels.iter().map(|l| l.h_alt).sum::<f64>();
        Ok(EnergyReport { s, eps, levels, energy, modified, modified_alt, base, ratio: rel(energy, base) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nls::QuadraticKernel;

    fn random_real(grid: PeriodicGrid, seed: u64, jmax: i64, keep: impl Fn(f64) -> bool) -> Spectrum {
        random_real_spectrum(grid, seed, jmax, keep)
    }

    fn setup() -> (NormalForm, PeriodicGrid) {
        let grid = PeriodicGrid::new(40.0 * PI, 256).unwrap();
        (NormalForm::new(1.0, 0.1, 0.1).unwrap(), grid)
    }

    #[test]
    fn theta_continuous_and_bounded() {
        let t = Theta::new(0.05, 0.1).unwrap();
        assert_eq!(t.hat(0.0), 0.05);
        assert!((t.hat(0.1) - 1.0).abs() < 1e-15);
        assert_eq!(t.hat(0.5), 1.0);
        assert_eq!(t.hat0(0.0), 0.0);
        for i in 0..100 {
            let k = -0.2 + 0.004 * i as f64;
            assert!(t.hat(k) >= 0.05 && t.hat(k) <= 1.0);
            assert_eq!(t.hat(k), t.hat(-k));
        }
        assert!(Theta::new(0.0, 0.1).is_err());
        assert!(Theta::new(0.1, -1.0).is_err());
    }

    #[test]
    fn alpha_matches_symmetrized_quadratic_kernel() {
        // (ik/2)Σₙαⁿ_{j₁j₂} is the interaction of a U₁ carrier with U_{j₂}.
        for j1 in SIGNS {
            for j2 in SIGNS {
                for &(k, l) in &[(0.3, 1.05), (2.7, -0.95), (-4.0, 1.0)] {
                    let m = k - l;
                    let sum: f64 = (1..=5).map(|n| alpha(n, j1, j2, k, l, m).unwrap()).sum();
                    let ours = I * k * 0.5 * sum;
                    let kern = QuadraticKernel::new(j1, 1, j2).eval(k, l, m) + QuadraticKernel::new(j1, j2, 1).eval(k, m, l);
                    assert!((ours - kern).norm() < 1e-13, "{j1} {j2} {k}: {ours} vs {kern}");
                }
            }
        }
        assert!(alpha(6, 1, 1, 0.0, 1.0, 1.0).is_err());
        assert!(alpha(1, 2, 1, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn kernels_are_even_and_real() {
        let (nf, _) = setup();
        for n in 1..=5 {
            for j1 in SIGNS {
                for j2 in SIGNS {
                    let (k, l) = (3.2, 1.03);
                    let a = nf.b11(n, j1, j2, k, l, k - l).unwrap();
                    let b = nf.b11(n, j1, j2, -k, -l, l - k).unwrap();
                    assert_eq!(a, b);
                    let (k, l) = (0.04, -0.97);
                    assert_eq!(nf.b01(n, j1, j2, k, l, k - l).unwrap(), nf.b01(n, j1, j2, -k, -l, l - k).unwrap());
                }
            }
        }
    }

    #[test]
    fn support_and_strictness() {
        let (nf, _) = setup();
        assert_eq!(nf.b01(1, 1, 1, 0.5, 1.0, -0.5).unwrap(), 0.0);
        assert_eq!(nf.b11(1, 1, 1, 0.05, 1.0, -0.95).unwrap(), 0.0);
        assert_eq!(nf.b10(1, 1, 1, 2.0, 1.0, 1.0).unwrap(), 0.0);
        let strict = nf.with_strict(true);
        assert!(matches!(strict.b01(1, 1, 1, 0.5, 1.0, -0.5), Err(Error::OutOfSupport(_))));
        assert!(matches!(strict.b11(1, 1, 1, 3.0, 2.0, 1.0), Err(Error::OutOfSupport(_))));
        assert!(strict.b11(1, 1, 1, 3.0, 1.0, 2.0).is_ok());
    }

    #[test]
    fn b01_resonant_limit_at_zero() {
        let (nf, _) = setup();
        for n in 1..=5 {
            for j1 in SIGNS {
                let l = 1.0;
                let at0 = nf.b01(n, j1, -1, 0.0, l, -l).unwrap();
                let near = nf.b01(n, j1, -1, 1e-7, l, 1e-7 - l).unwrap();
                assert!((at0 - near).abs() < 1e-5 * at0.abs().max(1.0), "{n} {j1}: {at0} {near}");
            }
        }
    }

    #[test]
    fn cancellation_relations_hold() {
        let (nf, grid) = setup();
        let d = nf.delta();
        let phi = random_real(grid, 3, 40, |k| (k.abs() - 1.0).abs() < d);
        let hi = random_real(grid, 4, 60, |k| k.abs() > d);
        let lo = random_real(grid, 5, 60, |k| k.abs() <= d);
        for (t, f) in [(Transform::B01, &hi), (Transform::B11, &hi), (Transform::B10, &lo)] {
            for row in nf.cancellation_suite(t, &phi, f).unwrap() {
                assert!(row.defect < 1e-10, "{row:?}");
            }
        }
    }

    #[test]
    fn g_identities_exact() {
        let (nf, _) = setup();
        let ks: Vec<f64> = (1..2000).map(|i| 0.05 * i as f64 * if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let (d4, d5) = g_identity_defects(&nf, &ks).unwrap();
        assert!(d4 < 1e-12 && d5 < 1e-12, "{d4} {d5}");
    }

    #[test]
    fn adjoint_identities() {
        let (nf, grid) = setup();
        let d = nf.delta();
        let h = random_real(grid, 7, 32, |k| (k.abs() - 1.0).abs() < d);
        let f = random_real(grid, 8, 32, |k| k.abs() > d);
        let g = random_real(grid, 9, 32, |k| k.abs() > d);
        let rows = nf.verify_adjoint_identities(&h, &f, &g).unwrap();
        for r in &rows {
            assert!(r.defect_exact < 1e-10, "{r:?}");
            if r.n <= 2 {
                assert!(r.defect_printed < 1e-10, "{r:?}");
            }
        }
        // The stated n = 3, 4 commutators are not exact.
        assert!(rows.iter().filter(|r| r.n >= 3).any(|r| r.defect_printed > 1e-6));
        let zero = Spectrum::zeros(grid);
        for r in nf.verify_adjoint_identities(&zero, &f, &g).unwrap() {
            assert_eq!((r.lhs, r.rhs_exact), (0.0, 0.0));
        }
    }

    #[test]
    fn integration_by_parts_identities() {
        let (_, grid) = setup();
        let f = |s| random_real(grid, s, 30, |_| true).to_field().real_projection();
        let (a1, a2, f1, f2) = (f(11), f(12), f(13), f(14));
        assert!(identity_part1(&a1, &f1).unwrap().defect < 1e-12);
        assert!(identity_part2([&a1, &a2], [&f1, &f2]).unwrap().defect < 1e-12);
        assert!(identity_part3([&a1, &a2], [&f1, &f2]).unwrap().defect < 1e-12);
    }

    #[test]
    fn d_denominator_values() {
        let (nf, _) = setup();
        let plus = nf.d_transform_check(1, 1, 1).unwrap();
        let minus = nf.d_transform_check(1, -1, 1).unwrap();
        assert!((plus.at_zero.abs() - 4.6404).abs() < 1e-3, "{plus:?}");
        assert!((minus.at_zero.abs() - 0.2586).abs() < 1e-3, "{minus:?}");
        for j1 in SIGNS {
            let b = nf.d_transform_check(j1, 1, 1).unwrap();
            assert!(b.min_abs >= 0.9 * b.at_zero.abs(), "{b:?}");
            assert!(nf.d_transform_check(j1, -1, 1).unwrap().min_abs > 0.0);
        }
    }

    #[test]
    fn bound_suite() {
        let (nf, _) = setup();
        let b = nf.kernel_bounds().unwrap();
        assert!(b.b01_bounded(), "{b:?}");
        assert!(b.b10_finite_near_k0(), "{b:?}");
        assert!((b.b10_near_k0_ratio - 1.0).abs() < 1e-6);
        assert!(b.b11_growth_max.is_finite());
        assert!(b.diagonal_asymptotics_ok(), "{:?}", b.asymptotics);
        assert!(b.offdiagonal_asymptotics_corrected_ok(), "{:?}", b.asymptotics);
        assert!(!b.offdiagonal_asymptotics_printed_ok());
        assert!(b.d_bounded_away());
    }

    #[test]
    fn energy_reduces_to_base_norm_without_carrier() {
        let (nf, grid) = setup();
        let d = nf.delta();
        let zero = Spectrum::zeros(grid);
        let r0 = [random_real(grid, 21, 10, |k| k.abs() <= d), random_real(grid, 22, 10, |k| k.abs() <= d)];
        let r1 = [random_real(grid, 23, 60, |k| k.abs() > d), random_real(grid, 24, 60, |k| k.abs() > d)];
        let input = EnergyInput { phi_c: zero.clone(), phi_p: [zero.clone(), zero.clone()], r0, r1 };
        let rep = nf.energy(&input, 2, HSign::Minus).unwrap();
        assert!((rep.ratio - 1.0).abs() < 1e-14);
        assert_eq!(rep.levels.len(), 3);
    }

    #[test]
    fn energy_equivalence_with_carrier() {
        let grid = PeriodicGrid::new(80.0 * PI, 512).unwrap();
        let nf = NormalForm::new(1.0, 0.05, 0.1).unwrap();
        let d = nf.delta();
        let phi = random_real(grid, 31, 60, |k| (k.abs() - 1.0).abs() < d);
        let scale = 1.0 / phi.to_field().max_abs();
        let phi = phi.scale_re(scale);
        let zero = Spectrum::zeros(grid);
        let r0 = [random_real(grid, 32, 20, |k| k.abs() <= d), random_real(grid, 33, 20, |k| k.abs() <= d)];
        let r1 = [random_real(grid, 34, 120, |k| k.abs() > d), random_real(grid, 35, 120, |k| k.abs() > d)];
        let input = EnergyInput { phi_c: phi, phi_p: [zero.clone(), zero], r0, r1 };
        let rep = nf.energy(&input, 2, HSign::Minus).unwrap();
        assert!((0.5..=2.0).contains(&rep.ratio), "{rep:?}");
        assert!(rep.modified.is_finite());
    }
}
