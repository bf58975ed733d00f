//! Periodic spectral discretisation: grids, fields, spectra, Fourier
//! multipliers, dealiased products and Sobolev norms.
//!
//! # Conventions
//!
//! Spectra store coefficients under the continuum convention
//! `û(k) = (1/2π) ∫_cell u(x) e^{-ikx} dx`, approximated by the rectangle rule,
//! so that `u(x) = Σ_k û(k) e^{ikx} dk` with `dk = 2π/L`. A coefficient is
//! therefore (approximately) grid independent: refining the grid or padding
//! it with zeros does not change the value stored for a given wavenumber.
//!
//! Plancherel then reads `∫|u|²dx = 2π ∫|û|²dk`, so the Sobolev norm is
//! computed as `‖u‖²_{H^s} = 2π Σ_k |û(k)|²(1+k²)^s dk`; the factor `2π` makes
//! the `s = 0` norm coincide with the sample-space `L²` norm `(Σ|u|²dx)^{1/2}`.
//!
//! Coefficient vectors are in FFT order: index `i < N/2` carries mode `j = i`,
//! index `i ≥ N/2` carries `j = i − N`; the Nyquist mode is `j = −N/2`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex double used for all spectral data.
pub type C64 = Complex<f64>;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Truncated periodic domain `[0, L)` with `N` equispaced samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    l: f64,
    n: usize,
}

/// Build a [`PeriodicGrid`]; `N` must be even and at least 16, `L` positive.
pub fn make_grid(l: f64, n: usize) -> Result<PeriodicGrid> {
    PeriodicGrid::new(l, n)
}

impl PeriodicGrid {
    pub fn new(l: f64, n: usize) -> Result<Self> {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::InvalidGrid(format!("length must be positive, got {l}")));
        }
        if n < 16 {
            return Err(Error::InvalidGrid(format!("need N >= 16, got {n}")));
        }
        if n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("N must be even, got {n}")));
        }
        Ok(Self { l, n })
    }

    /// Cell length `L`.
    pub fn length(&self) -> f64 {
        self.l
    }

    /// Number of samples `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Sample spacing `dx = L/N`.
    pub fn dx(&self) -> f64 {
        self.l / self.n as f64
    }

    /// Wavenumber spacing `dk = 2π/L`.
    pub fn dk(&self) -> f64 {
        2.0 * PI / self.l
    }

    /// Signed mode number carried by FFT index `i`.
    pub fn mode(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// FFT index of signed mode `j`, if it lies on the lattice.
    pub fn index_of_mode(&self, j: i64) -> Option<usize> {
        let n = self.n as i64;
        if j < -n / 2 || j >= n / 2 {
            None
        } else if j >= 0 {
            Some(j as usize)
        } else {
            Some((j + n) as usize)
        }
    }

    /// Wavenumber `k_j = 2πj/L` at FFT index `i`.
    pub fn k(&self, i: usize) -> f64 {
        self.mode(i) as f64 * self.dk()
    }

    /// Whether FFT index `i` is the self-conjugate Nyquist mode.
    pub fn is_nyquist(&self, i: usize) -> bool {
        i == self.n / 2
    }

    /// All wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.k(i)).collect()
    }

    /// Sample position `x_i = i·dx`.
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    /// All sample positions.
    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Largest resolved wavenumber magnitude `π/dx`.
    pub fn k_max(&self) -> f64 {
        PI / self.dx()
    }

    pub fn check_same(&self, other: &PeriodicGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Samples → continuum-convention coefficients on a cell of length `l`.
pub fn forward_raw(l: f64, samples: &[C64]) -> Vec<C64> {
    let n = samples.len();
    let mut buf = samples.to_vec();
    plan(n, false).process(&mut buf);
    let scale = l / n as f64 / (2.0 * PI);
    for c in buf.iter_mut() {
        *c *= scale;
    }
    buf
}

/// Continuum-convention coefficients → samples on a cell of length `l`.
pub fn inverse_raw(l: f64, coef: &[C64]) -> Vec<C64> {
    let n = coef.len();
    let mut buf = coef.to_vec();
    plan(n, true).process(&mut buf);
    let scale = 2.0 * PI / l;
    for c in buf.iter_mut() {
        *c *= scale;
    }
    buf
}

// ---------------------------------------------------------------------------
// Spectrum
// ---------------------------------------------------------------------------

/// Discrete Fourier coefficients of a field, in FFT order.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    grid: PeriodicGrid,
    coef: Vec<C64>,
}

impl Spectrum {
    pub fn new(grid: PeriodicGrid, coef: Vec<C64>) -> Result<Self> {
        if coef.len() != grid.n() {
            return Err(Error::InvalidArgument(format!(
                "spectrum length {} does not match grid size {}",
                coef.len(),
                grid.n()
            )));
        }
        Ok(Self { grid, coef })
    }

    pub(crate) fn from_vec(grid: PeriodicGrid, coef: Vec<C64>) -> Self {
        debug_assert_eq!(coef.len(), grid.n());
        Self { grid, coef }
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self { grid, coef: vec![ZERO; grid.n()] }
    }

    /// Spectrum with `c(k_j) = f(k_j)`.
    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(f64) -> C64) -> Self {
        let coef = (0..grid.n()).map(|i| f(grid.k(i))).collect();
        Self { grid, coef }
    }

    /// Single lattice mode `j` with coefficient `c`.
    pub fn delta(grid: PeriodicGrid, j: i64, c: C64) -> Result<Self> {
        let idx = grid
            .index_of_mode(j)
            .ok_or_else(|| Error::InvalidArgument(format!("mode {j} is not on the lattice")))?;
        let mut s = Self::zeros(grid);
        s.coef[idx] = c;
        Ok(s)
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn coef(&self) -> &[C64] {
        &self.coef
    }

    pub fn into_coef(self) -> Vec<C64> {
        self.coef
    }

    /// Coefficient of signed mode `j` (zero off the lattice).
    pub fn at_mode(&self, j: i64) -> C64 {
        self.grid.index_of_mode(j).map(|i| self.coef[i]).unwrap_or(ZERO)
    }

    /// Back to real space.
    pub fn to_field(&self) -> Field {
        let samples = inverse_raw(self.grid.length(), &self.coef);
        let f = Field { grid: self.grid, samples, spectrum: OnceLock::new() };
        let _ = f.spectrum.set(self.clone());
        f
    }

    /// Pointwise map over `(k, c)`.
    pub fn map(&self, f: impl Fn(f64, C64) -> C64) -> Self {
        let coef = self
            .coef
            .iter()
            .enumerate()
            .map(|(i, &c)| f(self.grid.k(i), c))
            .collect();
        Self { grid: self.grid, coef }
    }

    /// `self + other`.
    pub fn add(&self, other: &Spectrum) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    /// `self − other`.
    pub fn sub(&self, other: &Spectrum) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: C64, other: &Spectrum) -> Result<Self> {
        self.zip(other, |x, y| x + a * y)
    }

    /// `a·self`.
    pub fn scale(&self, a: C64) -> Self {
        Self { grid: self.grid, coef: self.coef.iter().map(|&c| a * c).collect() }
    }

    /// Real scalar multiple.
    pub fn scale_re(&self, a: f64) -> Self {
        self.scale(C64::new(a, 0.0))
    }

    /// Elementwise combination of two spectra on the same grid.
    pub fn zip(&self, other: &Spectrum, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let coef = self.coef.iter().zip(&other.coef).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid, coef })
    }

    /// Keep only the coefficients where `keep(k)` holds.
    pub fn mask(&self, keep: impl Fn(f64) -> bool) -> Self {
        self.map(|k, c| if keep(k) { c } else { ZERO })
    }

    /// Largest violation of `c(−k) = conj c(k)` relative to `max|c|`
    /// (the Nyquist mode is compared with its own conjugate).
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.n();
        let scale = self.coef.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let j = (n - i) % n;
            worst = worst.max((self.coef[j] - self.coef[i].conj()).norm());
        }
        worst / scale
    }

    /// Spectral `L²` norm `(2π Σ|c|²dk)^{1/2}` (equals the sample-space norm).
    pub fn l2_norm(&self) -> f64 {
        self.weighted_l2(|_| 1.0)
    }

    /// `(2π Σ|c(k)|² w(k) dk)^{1/2}`.
    pub fn weighted_l2(&self, w: impl Fn(f64) -> f64) -> f64 {
        let dk = self.grid.dk();
        let s: f64 = self
            .coef
            .iter()
            .enumerate()
            .map(|(i, c)| c.norm_sqr() * w(self.grid.k(i)))
            .sum();
        (2.0 * PI * s * dk).sqrt()
    }

    /// Weighted Fourier-`L¹` norm `Σ|c(k)|(1+k²)^{s/2} dk`.
    pub fn l1_weighted(&self, s: f64) -> f64 {
        let dk = self.grid.dk();
        self.coef
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let k = self.grid.k(i);
                c.norm() * (1.0 + k * k).powf(0.5 * s)
            })
            .sum::<f64>()
            * dk
    }

    /// `∫ conj(f) g dx = 2π Σ conj(f̂) ĝ dk`.
    pub fn inner(&self, other: &Spectrum) -> Result<C64> {
        self.grid.check_same(&other.grid)?;
        let s: C64 = self.coef.iter().zip(&other.coef).map(|(a, b)| a.conj() * b).sum();
        Ok(s * (2.0 * PI * self.grid.dk()))
    }

    /// `∫ f g dx` for real fields `f`, `g` given by their spectra.
    pub fn integral_product(&self, other: &Spectrum) -> Result<f64> {
        Ok(self.inner(other)?.re)
    }
}

// ---------------------------------------------------------------------------
// Field
// ---------------------------------------------------------------------------

/// Sampled function on a periodic grid with a lazily cached spectrum.
#[derive(Debug)]
pub struct Field {
    grid: PeriodicGrid,
    samples: Vec<C64>,
    spectrum: OnceLock<Spectrum>,
}

impl Clone for Field {
    fn clone(&self) -> Self {
        let f = Field { grid: self.grid, samples: self.samples.clone(), spectrum: OnceLock::new() };
        if let Some(s) = self.spectrum.get() {
            let _ = f.spectrum.set(s.clone());
        }
        f
    }
}

impl Field {
    pub fn from_complex(grid: PeriodicGrid, samples: Vec<C64>) -> Result<Self> {
        if samples.len() != grid.n() {
            return Err(Error::InvalidArgument(format!(
                "field length {} does not match grid size {}",
                samples.len(),
                grid.n()
            )));
        }
        Ok(Self { grid, samples, spectrum: OnceLock::new() })
    }

    pub fn from_real(grid: PeriodicGrid, samples: &[f64]) -> Result<Self> {
        Self::from_complex(grid, samples.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Sample a real function at the grid points.
    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(f64) -> f64) -> Self {
        let samples = (0..grid.n()).map(|i| C64::new(f(grid.x(i)), 0.0)).collect();
        Self { grid, samples, spectrum: OnceLock::new() }
    }

    /// Sample a complex function at the grid points.
    pub fn from_fn_complex(grid: PeriodicGrid, f: impl Fn(f64) -> C64) -> Self {
        let samples = (0..grid.n()).map(|i| f(grid.x(i))).collect();
        Self { grid, samples, spectrum: OnceLock::new() }
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self { grid, samples: vec![ZERO; grid.n()], spectrum: OnceLock::new() }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    /// Real parts of the samples.
    pub fn re(&self) -> Vec<f64> {
        self.samples.iter().map(|c| c.re).collect()
    }

    /// Spectrum (computed on first use, then cached).
    pub fn spectrum(&self) -> &Spectrum {
        self.spectrum.get_or_init(|| {
            Spectrum::from_vec(self.grid, forward_raw(self.grid.length(), &self.samples))
        })
    }

    /// Drop imaginary parts (for fields that are real up to round-off).
    pub fn real_projection(&self) -> Field {
        Field::from_complex(self.grid, self.samples.iter().map(|c| C64::new(c.re, 0.0)).collect())
            .expect("same length")
    }

    /// Sample-space `L²` norm `(Σ|u|²dx)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        (self.samples.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.dx()).sqrt()
    }

    /// `max |u|`.
    pub fn max_abs(&self) -> f64 {
        self.samples.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `max |Im u| / max |u|` (zero for the zero field).
    pub fn imag_residue(&self) -> f64 {
        let m = self.max_abs();
        if m == 0.0 {
            0.0
        } else {
            self.samples.iter().map(|c| c.im.abs()).fold(0.0, f64::max) / m
        }
    }

    /// `∫ u dx` (rectangle rule, exact for trigonometric polynomials).
    pub fn integral(&self) -> C64 {
        self.samples.iter().sum::<C64>() * self.grid.dx()
    }

    /// Pointwise map.
    pub fn map(&self, f: impl Fn(C64) -> C64) -> Field {
        Field {
            grid: self.grid,
            samples: self.samples.iter().map(|&c| f(c)).collect(),
            spectrum: OnceLock::new(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip(&self, other: &Field, f: impl Fn(C64, C64) -> C64) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        Ok(Field {
            grid: self.grid,
            samples: self.samples.iter().zip(&other.samples).map(|(&a, &b)| f(a, b)).collect(),
            spectrum: OnceLock::new(),
        })
    }

    /// `self + other`.
    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a + b)
    }

    /// `self − other`.
    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a - b)
    }

    /// Real scalar multiple.
    pub fn scale(&self, a: f64) -> Field {
        self.map(|c| c * a)
    }
}

// ---------------------------------------------------------------------------
// Multipliers
// ---------------------------------------------------------------------------

/// Declared symmetry of a multiplier symbol under `k ↦ −k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
    None,
}

/// Fourier multiplier `m(k)` tabulated on a lattice.
#[derive(Clone, Debug)]
pub struct Multiplier {
    grid: PeriodicGrid,
    symbol: Vec<C64>,
    parity: Parity,
}

const PARITY_TOL: f64 = 1e-12;

impl Multiplier {
    /// Tabulate `m` on the lattice and verify the declared parity.
    ///
    /// Odd multipliers have their Nyquist entry zeroed (the self-conjugate
    /// mode has no partner `−k` on the lattice, so its sign is ambiguous).
    pub fn new(grid: PeriodicGrid, m: impl Fn(f64) -> C64, parity: Parity) -> Result<Self> {
        let mut symbol: Vec<C64> = (0..grid.n()).map(|i| m(grid.k(i))).collect();
        if parity == Parity::Odd {
            symbol[grid.n() / 2] = ZERO;
        }
        let out = Self { grid, symbol, parity };
        out.verify_parity()?;
        Ok(out)
    }

    /// Real, even multiplier from a real symbol.
    pub fn even(grid: PeriodicGrid, m: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, |k| C64::new(m(k), 0.0), Parity::Even)
    }

    /// `(∂ₓ)^order`, i.e. `(ik)^order`, with the Nyquist mode zeroed.
    pub fn derivative(grid: PeriodicGrid, order: u32) -> Self {
        let parity = if order % 2 == 0 { Parity::Even } else { Parity::Odd };
        let mut symbol: Vec<C64> = (0..grid.n())
            .map(|i| C64::new(0.0, grid.k(i)).powu(order))
            .collect();
        if order > 0 {
            symbol[grid.n() / 2] = ZERO;
        }
        Self { grid, symbol, parity }
    }

    /// Identity multiplier.
    pub fn identity(grid: PeriodicGrid) -> Self {
        Self { grid, symbol: vec![C64::new(1.0, 0.0); grid.n()], parity: Parity::Even }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn symbol(&self) -> &[C64] {
        &self.symbol
    }

    fn verify_parity(&self) -> Result<()> {
        let sign = match self.parity {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
            Parity::None => return Ok(()),
        };
        let n = self.grid.n();
        let scale = self.symbol.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut defect: f64 = 0.0;
        for i in 1..n {
            if self.grid.is_nyquist(i) {
                continue;
            }
            let j = n - i;
            defect = defect.max((self.symbol[i] - self.symbol[j] * sign).norm());
        }
        let tolerance = PARITY_TOL * scale.max(f64::MIN_POSITIVE);
        if defect > tolerance {
            return Err(Error::Parity { defect, tolerance });
        }
        Ok(())
    }

    /// Composition `self ∘ other` (symbol product).
    pub fn compose(&self, other: &Multiplier) -> Result<Multiplier> {
        self.grid.check_same(&other.grid)?;
        let parity = match (self.parity, other.parity) {
            (Parity::None, _) | (_, Parity::None) => Parity::None,
            (a, b) if a == b => Parity::Even,
            _ => Parity::Odd,
        };
        Ok(Self {
            grid: self.grid,
            symbol: self.symbol.iter().zip(&other.symbol).map(|(a, b)| a * b).collect(),
            parity,
        })
    }

    /// Apply to a spectrum.
    pub fn apply_spectrum(&self, s: &Spectrum) -> Result<Spectrum> {
        self.grid.check_same(s.grid())?;
        Ok(Spectrum::from_vec(
            self.grid,
            s.coef().iter().zip(&self.symbol).map(|(c, m)| c * m).collect(),
        ))
    }

    /// Apply to a field.
    pub fn apply(&self, f: &Field) -> Result<Field> {
        Ok(self.apply_spectrum(f.spectrum())?.to_field())
    }
}

/// `apply_multiplier(f, m)`: spectrum of the result is `m(k_j)·f̂(k_j)`.
pub fn apply_multiplier(f: &Field, m: &Multiplier) -> Result<Field> {
    m.apply(f)
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

/// `‖f‖_{H^s} = (2π Σ_k |f̂(k)|²(1+k²)^s dk)^{1/2}`.
pub fn sobolev_norm(f: &Field, s: f64) -> Result<f64> {
    spectrum_sobolev_norm(f.spectrum(), s)
}

/// Sobolev norm of a spectrum (see [`sobolev_norm`]).
pub fn spectrum_sobolev_norm(s_hat: &Spectrum, s: f64) -> Result<f64> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument(format!("Sobolev index must be >= 0, got {s}")));
    }
    Ok(s_hat.weighted_l2(|k| (1.0 + k * k).powf(s)))
}

// ---------------------------------------------------------------------------
// Products and dealiasing
// ---------------------------------------------------------------------------

/// Size of the 3/2-rule padded grid for an `N`-point grid.
pub fn padded_len(n: usize) -> usize {
    3 * n / 2
}

/// Zero-pad a spectrum to the 3/2 grid and transform to padded samples.
/// The Nyquist coefficient is dropped.
pub fn to_padded_samples(s: &Spectrum) -> Vec<C64> {
    let g = s.grid();
    let n = g.n();
    let m = padded_len(n);
    let mut pad = vec![ZERO; m];
    for i in 0..n {
        if g.is_nyquist(i) {
            continue;
        }
        let j = g.mode(i);
        let idx = if j >= 0 { j as usize } else { (m as i64 + j) as usize };
        pad[idx] = s.coef()[i];
    }
    inverse_raw(g.length(), &pad)
}

/// Transform padded samples back and truncate to the `N`-mode lattice.
pub fn from_padded_samples(grid: PeriodicGrid, samples: &[C64]) -> Spectrum {
    let n = grid.n();
    let m = samples.len();
    let full = forward_raw(grid.length(), samples);
    let coef = (0..n)
        .map(|i| {
            let j = grid.mode(i);
            let idx = if j >= 0 { j as usize } else { (m as i64 + j) as usize };
            full[idx]
        })
        .collect();
    Spectrum::from_vec(grid, coef)
}

/// Spectrum of the pointwise product of the two underlying fields, computed on
/// a 3/2 zero-padded grid so that quadratic aliasing vanishes. This is the
/// continuum convolution `(a ∗ b)(k) = Σ_m a(k−m) b(m) dk`.
pub fn convolve(a: &Spectrum, b: &Spectrum) -> Result<Spectrum> {
    a.grid().check_same(b.grid())?;
    let ua = to_padded_samples(a);
    let ub = to_padded_samples(b);
    let prod: Vec<C64> = ua.iter().zip(&ub).map(|(x, y)| x * y).collect();
    Ok(from_padded_samples(*a.grid(), &prod))
}

/// Highest mode number kept by the 2/3 rule: `floor(N/3)`.
pub fn two_thirds_cutoff(n: usize) -> i64 {
    (n / 3) as i64
}

/// 2/3-rule truncation: zero every mode with `|j| > floor(N/3)`. Idempotent.
pub fn dealias(a: &Spectrum) -> Spectrum {
    let g = *a.grid();
    let jc = two_thirds_cutoff(g.n());
    let coef = a
        .coef()
        .iter()
        .enumerate()
        .map(|(i, &c)| if g.mode(i).abs() > jc { ZERO } else { c })
        .collect();
    Spectrum::from_vec(g, coef)
}

// ---------------------------------------------------------------------------
// Snapshot artefacts
// ---------------------------------------------------------------------------

/// Field snapshot persistence: JSON sidecar plus flat little-endian `f64`
/// record (component-major), and CSV export.
pub mod io {
    use std::fs;
    use std::io::Write;
    use std::path::{Path, PathBuf};

    use serde::{Deserialize, Serialize};

    use super::{Field, PeriodicGrid};
    use crate::error::{Error, Result};

    /// JSON sidecar header of a snapshot.
    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    pub struct SnapshotHeader {
        #[serde(rename = "L")]
        pub l: f64,
        #[serde(rename = "N")]
        pub n: usize,
        pub t: f64,
        pub components: Vec<String>,
        pub convention: String,
    }

    /// Tag stored in every sidecar.
    pub const CONVENTION: &str = "ft-2pi";

    fn paths(stem: &Path) -> (PathBuf, PathBuf) {
        (stem.with_extension("json"), stem.with_extension("bin"))
    }

    /// Write `<stem>.json` and `<stem>.bin`.
    pub fn write_snapshot(stem: &Path, t: f64, components: &[(&str, &Field)]) -> Result<()> {
        let grid = components
            .first()
            .map(|(_, f)| *f.grid())
            .ok_or_else(|| Error::InvalidArgument("snapshot needs a component".into()))?;
        if components.iter().any(|(_, f)| *f.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        let header = SnapshotHeader {
            l: grid.length(),
            n: grid.n(),
            t,
            components: components.iter().map(|(n, _)| n.to_string()).collect(),
            convention: CONVENTION.to_string(),
        };
        let (json, bin) = paths(stem);
        fs::write(&json, serde_json::to_string_pretty(&header)?)?;
        let mut bytes = Vec::with_capacity(8 * grid.n() * components.len());
        for (_, f) in components {
            for c in f.samples() {
                bytes.extend_from_slice(&c.re.to_le_bytes());
            }
        }
        fs::write(&bin, bytes)?;
        Ok(())
    }

    /// Read a snapshot written by [`write_snapshot`].
    pub fn read_snapshot(stem: &Path) -> Result<(SnapshotHeader, Vec<Field>)> {
        let (json, bin) = paths(stem);
        let header: SnapshotHeader = serde_json::from_str(&fs::read_to_string(json)?)?;
        let grid = PeriodicGrid::new(header.l, header.n)?;
        let bytes = fs::read(bin)?;
        let expect = 8 * header.n * header.components.len();
        if bytes.len() != expect {
            return Err(Error::InvalidArgument(format!(
                "snapshot record has {} bytes, expected {expect}",
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let fields = values
            .chunks_exact(header.n)
            .map(|chunk| Field::from_real(grid, chunk))
            .collect::<Result<Vec<_>>>()?;
        Ok((header, fields))
    }

    /// CSV export with columns `x, <component>...`.
    pub fn write_csv(path: &Path, components: &[(&str, &Field)]) -> Result<()> {
        let grid = components
            .first()
            .map(|(_, f)| *f.grid())
            .ok_or_else(|| Error::InvalidArgument("csv export needs a component".into()))?;
        let mut out = fs::File::create(path)?;
        let names: Vec<&str> = components.iter().map(|(n, _)| *n).collect();
        writeln!(out, "x,{}", names.join(","))?;
        for i in 0..grid.n() {
            let mut line = format!("{:.17e}", grid.x(i));
            for (_, f) in components {
                line.push_str(&format!(",{:.17e}", f.samples()[i].re));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(l: f64, n: usize) -> PeriodicGrid {
        make_grid(l, n).unwrap()
    }

    #[test]
    fn grid_lattice_and_errors() {
        let grid = g(2.0 * PI, 16);
        let mut modes: Vec<i64> = (0..16).map(|i| grid.mode(i)).collect();
        modes.sort();
        assert_eq!(modes, (-8..8).collect::<Vec<_>>());
        assert!((grid.k(3) - 3.0).abs() < 1e-15);
        assert!((g(4.0 * PI, 32).dk() - 0.5).abs() < 1e-15);
        assert!(make_grid(2.0 * PI, 15).is_err());
        assert!(make_grid(-1.0, 16).is_err());
        assert!(make_grid(0.0, 16).is_err());
        assert!(make_grid(1.0, 8).is_err());
        assert_eq!(grid.dx() * grid.n() as f64, grid.length());
    }

    #[test]
    fn derivative_of_sine_is_cosine() {
        let grid = g(2.0 * PI, 64);
        let f = Field::from_fn(grid, f64::sin);
        let d = apply_multiplier(&f, &Multiplier::derivative(grid, 1)).unwrap();
        let err = (0..grid.n())
            .map(|i| (d.samples()[i].re - grid.x(i).cos()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-12, "err = {err}");
    }

    #[test]
    fn bessel_potential_eigenfunction() {
        let grid = g(2.0 * PI, 32);
        let f = Field::from_fn(grid, |x| (2.0 * x).cos());
        let m = Multiplier::even(grid, |k| 1.0 / (1.0 + k * k)).unwrap();
        let r = m.apply(&f).unwrap();
        for i in 0..grid.n() {
            assert!((r.samples()[i].re - (2.0 * grid.x(i)).cos() / 5.0).abs() < 1e-14);
        }
    }

    #[test]
    fn unit_mode_has_unit_coefficient() {
        let grid = g(2.0 * PI, 16);
        let f = Field::from_fn_complex(grid, |x| C64::new(x.cos(), x.sin()));
        let c = f.spectrum().at_mode(1);
        assert!((c - C64::new(1.0, 0.0)).norm() < 1e-14);
        let h1 = sobolev_norm(&f, 1.0).unwrap();
        assert!((h1 - f.l2_norm() * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(sobolev_norm(&Field::zeros(grid), 2.0).unwrap(), 0.0);
        assert!(sobolev_norm(&f, -1.0).is_err());
    }

    #[test]
    fn round_trip_and_parseval() {
        let grid = g(10.0, 64);
        let f = Field::from_fn(grid, |x| (x * 0.6).sin().exp() - 0.3 * (2.0 * x).cos());
        let back = f.spectrum().to_field();
        let err = back.sub(&f).unwrap().l2_norm() / f.l2_norm();
        assert!(err < 1e-12);
        let rel = (f.spectrum().l2_norm() - f.l2_norm()).abs() / f.l2_norm();
        assert!(rel < 1e-12);
    }

    #[test]
    fn point_mass_convolution() {
        let grid = g(2.0 * PI, 32);
        let a = Spectrum::delta(grid, 1, C64::new(1.0, 0.0)).unwrap();
        let b = Spectrum::delta(grid, 2, C64::new(1.0, 0.0)).unwrap();
        let c = convolve(&a, &b).unwrap();
        // continuum convolution carries one factor dk = 1 here
        assert!((c.at_mode(3) - C64::new(1.0, 0.0)).norm() < 1e-13);
        let rest: f64 = (0..32).filter(|&i| grid.mode(i) != 3).map(|i| c.coef()[i].norm()).sum();
        assert!(rest < 1e-13);
    }

    #[test]
    fn dealias_keeps_eleven_nonnegative_modes() {
        let grid = g(2.0 * PI, 32);
        let white = Spectrum::from_fn(grid, |_| C64::new(1.0, 0.0));
        let d = dealias(&white);
        let kept = (0..32).filter(|&i| grid.mode(i) >= 0 && d.coef()[i].norm() > 0.0).count();
        assert_eq!(kept, 11);
        assert_eq!(dealias(&d), d);
    }

    #[test]
    fn parity_is_verified() {
        let grid = g(2.0 * PI, 16);
        assert!(Multiplier::new(grid, |k| C64::new(k, 0.0), Parity::Even).is_err());
        assert!(Multiplier::new(grid, |k| C64::new(0.0, k), Parity::Odd).is_ok());
        assert!(Multiplier::new(grid, |k| C64::new(k, 0.0), Parity::None).is_ok());
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let a = Spectrum::zeros(g(2.0 * PI, 16));
        let b = Spectrum::zeros(g(2.0 * PI, 32));
        assert!(matches!(convolve(&a, &b), Err(Error::GridMismatch)));
        let m = Multiplier::identity(g(2.0 * PI, 32));
        assert!(m.apply_spectrum(&a).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = std::env::temp_dir().join(format!("nlslab-snap-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let grid = g(3.0, 16);
        let a = Field::from_fn(grid, |x| x.sin());
        let b = Field::from_fn(grid, |x| x * x);
        let stem = dir.join("snap");
        io::write_snapshot(&stem, 1.5, &[("rho", &a), ("v", &b)]).unwrap();
        let (h, fs) = io::read_snapshot(&stem).unwrap();
        assert_eq!(h.convention, "ft-2pi");
        assert_eq!(h.components, vec!["rho", "v"]);
        assert_eq!(fs[0].re(), a.re());
        assert_eq!(fs[1].re(), b.re());
        io::write_csv(&dir.join("snap.csv"), &[("rho", &a)]).unwrap();
        let text = std::fs::read_to_string(dir.join("snap.csv")).unwrap();
        assert!(text.starts_with("x,rho\n"));
        assert_eq!(text.lines().count(), 17);
    }
}
