//! Ion-acoustic dispersion relation `ω(k) = k q̂(k)`, `q̂(k) = √((2+k²)/(1+k²))`,
//! its analytic derivatives, and the resonance structure that drives every
//! normal-form decision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `q̂(k) = √((2+k²)/(1+k²))`; even, decreasing on `k > 0`, `1 < q̂ ≤ √2`.
pub fn qhat(k: f64) -> f64 {
    // 1 + 1/(1+k²) keeps full relative precision for large |k|.
    (1.0 + 1.0 / (1.0 + k * k)).sqrt()
}

/// `q̂′(k) = −k / (q̂ (1+k²)²)`.
pub fn qhat_prime(k: f64) -> f64 {
    let s = 1.0 + k * k;
    -k / (qhat(k) * s * s)
}

/// `q̂″(k)`, differentiated analytically from [`qhat_prime`].
pub fn qhat_double_prime(k: f64) -> f64 {
    let q = qhat(k);
    let qp = qhat_prime(k);
    let s = 1.0 + k * k;
    -(q * s - k * qp * s - 4.0 * k * k * q) / (q * q * s * s * s)
}

/// `ω(k) = k q̂(k)`; odd.
pub fn omega(k: f64) -> f64 {
    k * qhat(k)
}

/// `ω′(k) = q̂(k) − k²/(q̂(k)(1+k²)²)`.
pub fn omega_prime(k: f64) -> f64 {
    qhat(k) + k * qhat_prime(k)
}

/// `ω″(k) = 2q̂′(k) + k q̂″(k)`.
pub fn omega_double_prime(k: f64) -> f64 {
    2.0 * qhat_prime(k) + k * qhat_double_prime(k)
}

/// All dispersion data at one wavenumber.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionPoint {
    pub k: f64,
    pub qhat: f64,
    pub omega: f64,
    pub omega_prime: f64,
    pub omega_double_prime: f64,
}

impl DispersionPoint {
    pub fn at(k: f64) -> Self {
        Self {
            k,
            qhat: qhat(k),
            omega: omega(k),
            omega_prime: omega_prime(k),
            omega_double_prime: omega_double_prime(k),
        }
    }
}

/// Tabulate [`DispersionPoint`]s on `n` equispaced wavenumbers in `[kmin, kmax]`.
pub fn table(kmin: f64, kmax: f64, n: usize) -> Vec<DispersionPoint> {
    if n == 1 {
        return vec![DispersionPoint::at(kmin)];
    }
    (0..n)
        .map(|i| DispersionPoint::at(kmin + (kmax - kmin) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Three-wave denominator `−j₁ω(k) − ω(k−m) + j₂ω(m)`.
pub fn resonance_denominator(j1: i32, j2: i32, k: f64, m: f64) -> f64 {
    -(j1 as f64) * omega(k) - omega(k - m) + (j2 as f64) * omega(m)
}

/// `∂_k` of [`resonance_denominator`] at fixed `m`.
pub fn resonance_denominator_dk(j1: i32, _j2: i32, k: f64, m: f64) -> f64 {
    -(j1 as f64) * omega_prime(k) - omega_prime(k - m)
}

/// Gaps that make the second-harmonic and mean-flow corrections well defined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonresonanceReport {
    pub k0: f64,
    /// `(m, min_± |±ω(mk₀) ∓ mω(k₀)|)` for `m = 2..=mmax`.
    pub harmonic_gaps: Vec<(u32, f64)>,
    /// `|−2ω₀ + ω(2k₀)|`.
    pub second_harmonic_minus: f64,
    /// `|−2ω₀ − ω(2k₀)|`.
    pub second_harmonic_plus: f64,
    /// `|c_g − ω′(0)|`.
    pub mean_flow_minus: f64,
    /// `|c_g + ω′(0)|`.
    pub mean_flow_plus: f64,
    /// All gaps strictly positive.
    pub nonresonant: bool,
}

/// Check `±ω(mk₀) ≠ ±mω(k₀)` for `m = 2..=mmax`, and the second-harmonic and
/// mean-flow denominators.
pub fn check_second_harmonic_nonresonance(k0: f64, mmax: u32) -> Result<NonresonanceReport> {
    if k0 == 0.0 || !k0.is_finite() {
        return Err(Error::InvalidArgument("k0 must be finite and nonzero".into()));
    }
    if mmax < 2 {
        return Err(Error::InvalidArgument("mmax must be at least 2".into()));
    }
    let w0 = omega(k0);
    let cg = omega_prime(k0);
    let harmonic_gaps: Vec<(u32, f64)> = (2..=mmax)
        .map(|m| {
            let wm = omega(m as f64 * k0);
            let mw = m as f64 * w0;
            (m, (wm - mw).abs().min((wm + mw).abs()))
        })
        .collect();
    let report = NonresonanceReport {
        k0,
        second_harmonic_minus: (-2.0 * w0 + omega(2.0 * k0)).abs(),
        second_harmonic_plus: (-2.0 * w0 - omega(2.0 * k0)).abs(),
        mean_flow_minus: (cg - omega_prime(0.0)).abs(),
        mean_flow_plus: (cg + omega_prime(0.0)).abs(),
        nonresonant: false,
        harmonic_gaps,
    };
    let nonresonant = report.harmonic_gaps.iter().all(|&(_, g)| g > 0.0)
        && report.second_harmonic_minus > 0.0
        && report.second_harmonic_plus > 0.0
        && report.mean_flow_minus > 0.0
        && report.mean_flow_plus > 0.0;
    Ok(NonresonanceReport { nonresonant, ..report })
}

/// One root of the carrier-slot denominator found by [`scan_resonances`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub k: f64,
    /// Root within the scan step of `k = 0` (trivial resonance).
    pub at_zero: bool,
    /// Root within the scan step of `k = k₀` (nontrivial resonance).
    pub at_k0: bool,
}

/// Scan step of [`scan_resonances`].
pub const SCAN_DK: f64 = 1e-3;
/// Bisection tolerance of [`scan_resonances`].
pub const SCAN_TOL: f64 = 1e-10;

/// Roots of `k ↦ −j₁ω(k) − ω(k₀) + j₂ω(k−k₀)` (the denominator with the carrier
/// slot fixed at `k₀`) on `[kmin, kmax]`, by sign-change bracketing on a grid
/// of step [`SCAN_DK`] refined by bisection to [`SCAN_TOL`].
pub fn scan_resonances(j1: i32, j2: i32, k0: f64, kmin: f64, kmax: f64) -> Vec<Resonance> {
    let f = |k: f64| resonance_denominator(j1, j2, k, k - k0);
    let steps = ((kmax - kmin) / SCAN_DK).ceil().max(1.0) as usize;
    let node = |i: usize| kmin + (kmax - kmin) * i as f64 / steps as f64;
    let mut roots: Vec<f64> = Vec::new();
    let push = |r: f64, roots: &mut Vec<f64>| {
        if !roots.iter().any(|&x| (x - r).abs() < 10.0 * SCAN_TOL) {
            roots.push(r);
        }
    };
    let mut a = node(0);
    let mut fa = f(a);
    if fa == 0.0 {
        push(a, &mut roots);
    }
    for i in 1..=steps {
        let b = node(i);
        let fb = f(b);
        if fb == 0.0 {
            push(b, &mut roots);
        } else if fa != 0.0 && fa.signum() != fb.signum() {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            while hi - lo > SCAN_TOL {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            push(0.5 * (lo + hi), &mut roots);
        }
        a = b;
        fa = fb;
    }
    roots
        .into_iter()
        .map(|k| Resonance { k, at_zero: k.abs() < SCAN_DK, at_k0: (k - k0).abs() < SCAN_DK })
        .collect()
}

/// Fitted constant `C` in `|−j₁ω(k) − ω(k₀) + j₂ω(k−k₀)| ≥ C|k|` on
/// `0 < |k| ≤ delta` (minimum of the ratio over a fine scan).
pub fn linear_lower_bound_near_zero(j1: i32, j2: i32, k0: f64, delta: f64) -> f64 {
    let n = 2000;
    (1..=n)
        .flat_map(|i| {
            let k = delta * i as f64 / n as f64;
            [k, -k]
        })
        .map(|k| resonance_denominator(j1, j2, k, k - k0).abs() / k.abs())
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, k: f64, h: f64) -> f64 {
        (f(k + h) - f(k - h)) / (2.0 * h)
    }

    #[test]
    fn closed_form_values() {
        assert!((qhat(0.0) - 2f64.sqrt()).abs() < 1e-15);
        assert!((qhat(1.0) - 1.224_744_871_391_589).abs() < 1e-12);
        assert!((qhat(1e6) - 1.0).abs() < 1e-12);
        assert!((qhat(-1e6) - 1.0).abs() < 1e-12);
        assert!((omega(1.0) - 1.224_744_871_391_589).abs() < 1e-12);
        assert!((omega_prime(0.0) - 2f64.sqrt()).abs() < 1e-15);
        assert!((omega(2.0) - 2.0 * (6.0f64 / 5.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn omega_prime_at_one_matches_difference_quotient() {
        let d = fd(omega, 1.0, 1e-6);
        assert!((omega_prime(1.0) - d).abs() <= 1e-8);
        assert!((omega_prime(1.0) - 1.020_620_726_2).abs() < 1e-9);
    }

    #[test]
    fn derivatives_match_finite_differences_on_interval() {
        for i in 0..=400 {
            let k = -10.0 + 0.05 * i as f64;
            assert!((omega_prime(k) - fd(omega, k, 1e-6)).abs() < 1e-7, "k={k}");
            assert!((omega_double_prime(k) - fd(omega_prime, k, 1e-6)).abs() < 1e-7, "k={k}");
        }
    }

    #[test]
    fn denominators() {
        for m in [-3.0, 0.2, 1.7] {
            assert_eq!(resonance_denominator(1, -1, 0.0, m), 0.0);
            assert_eq!(resonance_denominator(-1, -1, 0.0, m), 0.0);
        }
        assert_eq!(resonance_denominator(-1, 1, 1.3, 0.0), 0.0);
        let direct = -omega(2.0) - omega(1.0) + omega(1.0);
        assert_eq!(resonance_denominator(1, 1, 2.0, 1.0), direct);
    }

    #[test]
    fn nonresonance_report_at_unit_wavenumber() {
        let r = check_second_harmonic_nonresonance(1.0, 6).unwrap();
        assert!(r.nonresonant);
        assert!((r.second_harmonic_minus - 0.258_599_5).abs() < 1e-6);
        assert!((r.second_harmonic_plus - 4.640_379_6).abs() < 1e-6);
        assert!(omega_prime(1.0) - omega_prime(0.0) < 0.0);
        assert_eq!(r.harmonic_gaps.first().unwrap().0, 2);
        assert!(check_second_harmonic_nonresonance(0.0, 3).is_err());
        assert!(check_second_harmonic_nonresonance(1.0, 1).is_err());
    }

    #[test]
    fn resonance_scan_finds_trivial_and_nontrivial_roots() {
        let k0 = 1.0;
        for j1 in [-1, 1] {
            let r = scan_resonances(j1, -1, k0, -3.0, 3.0);
            assert!(r.iter().any(|x| x.at_zero), "j1={j1}: {r:?}");
        }
        for j2 in [-1, 1] {
            let r = scan_resonances(-1, j2, k0, -3.0, 3.0);
            assert!(r.iter().any(|x| x.at_k0), "j2={j2}: {r:?}");
        }
        for j1 in [-1, 1] {
            let c = linear_lower_bound_near_zero(j1, -1, k0, 0.1);
            assert!(c > 0.1, "j1={j1}: C={c}");
        }
    }
}
