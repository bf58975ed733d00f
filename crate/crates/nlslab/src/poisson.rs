//! Nonlinear Poisson equation `∂ₓ²φ = e^φ − n`.
//!
//! [`solve_phi`] runs an inexact Newton iteration whose linear systems
//! `(e^φ − ∂ₓ²)δ = F` are solved by conjugate gradients preconditioned with the
//! spectral inverse `(1 − ∂ₓ²)^{-1}` (the Jacobian at `φ = 0`). The
//! small-amplitude inversion `φ = Bρ − ½B[(Bρ)²] + 𝓜(ρ)`, `B = (1−∂ₓ²)^{-1}`,
//! is provided by [`phi_expansion`] and [`m_remainder`].

use crate::error::{Error, Result};
use crate::spectral_core::{Field, Multiplier, PeriodicGrid, C64};

/// Outcome of [`solve_phi`].
#[derive(Clone, Debug)]
pub struct PoissonSolution {
    pub phi: Field,
    /// Number of Newton passes (residual evaluations).
    pub iterations: usize,
    /// Final `‖∂ₓ²φ − e^φ + n‖_{L²}`.
    pub residual: f64,
    /// Residual of every iterate, starting with the initial guess.
    pub residual_history: Vec<f64>,
    /// `[φ₁, φ₂, φ₃]` of the expansion of `ρ = n − 1`, when requested.
    pub terms: Option<[Field; 3]>,
}

/// `B = (1 − ∂ₓ²)^{-1}`.
pub fn bessel(grid: PeriodicGrid) -> Multiplier {
    Multiplier::even(grid, |k| 1.0 / (1.0 + k * k)).expect("even symbol")
}

fn laplacian(grid: PeriodicGrid) -> Multiplier {
    Multiplier::derivative(grid, 2)
}

fn real_dot(a: &[f64], b: &[f64], dx: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * dx
}

fn to_field(grid: PeriodicGrid, v: &[f64]) -> Field {
    Field::from_real(grid, v).expect("grid-sized vector")
}

fn apply_real(m: &Multiplier, grid: PeriodicGrid, v: &[f64]) -> Vec<f64> {
    m.apply(&to_field(grid, v)).expect("same grid").re()
}

/// Preconditioned CG for `(w − ∂ₓ²) x = b`, `w = e^φ > 0`.
fn pcg(grid: PeriodicGrid, w: &[f64], b: &[f64], abs_tol: f64, max_iter: usize) -> Vec<f64> {
    let dx = grid.dx();
    let lap = laplacian(grid);
    let prec = bessel(grid);
    let apply_a = |x: &[f64]| -> Vec<f64> {
        let lx = apply_real(&lap, grid, x);
        x.iter().zip(w).zip(&lx).map(|((xi, wi), li)| wi * xi - li).collect()
    };
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    if real_dot(&r, &r, dx).sqrt() <= abs_tol {
        return x;
    }
    let mut z = apply_real(&prec, grid, &r);
    let mut p = z.clone();
    let mut rz = real_dot(&r, &z, dx);
    for _ in 0..max_iter {
        let ap = apply_a(&p);
        let alpha = rz / real_dot(&p, &ap, dx);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if real_dot(&r, &r, dx).sqrt() <= abs_tol {
            break;
        }
        z = apply_real(&prec, grid, &r);
        let rz_new = real_dot(&r, &z, dx);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

fn residual_vec(grid: PeriodicGrid, phi: &[f64], n: &[f64]) -> Vec<f64> {
    let lphi = apply_real(&laplacian(grid), grid, phi);
    lphi.iter().zip(phi).zip(n).map(|((l, p), ni)| l - p.exp() + ni).collect()
}

/// Solve `∂ₓ²φ = e^φ − n` by preconditioned Newton–Krylov iteration.
///
/// The initial guess is `B(n−1)`. The iteration aborts with
/// [`Error::Divergence`] once the residual has failed to shrink by 10% for
/// three consecutive iterations.
pub fn solve_phi(n: &Field, tol: f64, max_iter: usize) -> Result<PoissonSolution> {
    if !(tol > 1e-14 && tol <= 1e-6) {
        return Err(Error::InvalidArgument(format!("tol must lie in (1e-14, 1e-6], got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be positive".into()));
    }
    let grid = *n.grid();
    let nv = n.re();
    let min = nv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::NonPositiveDensity { min });
    }
    let dx = grid.dx();
    let rho: Vec<f64> = nv.iter().map(|x| x - 1.0).collect();
    let mut phi = apply_real(&bessel(grid), grid, &rho);
    let mut history = Vec::new();
    let mut stalls = 0usize;
    loop {
        let f = residual_vec(grid, &phi, &nv);
        let r = real_dot(&f, &f, dx).sqrt();
        if !r.is_finite() {
            return Err(Error::NonFinite("Poisson residual".into()));
        }
        if let Some(&prev) = history.last() {
            if r > 0.9 * prev {
                stalls += 1;
            } else {
                stalls = 0;
            }
        }
        history.push(r);
        if r <= tol {
            return Ok(PoissonSolution {
                phi: to_field(grid, &phi),
                iterations: history.len(),
                residual: r,
                residual_history: history,
                terms: None,
            });
        }
        if stalls >= 3 {
            return Err(Error::Divergence { iteration: history.len(), residual: r });
        }
        if history.len() >= max_iter {
            return Err(Error::MaxIterations { max_iter, residual: r });
        }
        let w: Vec<f64> = phi.iter().map(|p| p.exp()).collect();
        let inner_tol = (0.1 * r.min(1.0) * r).max(1e-3 * tol);
        let delta = pcg(grid, &w, &f, inner_tol, 200);
        for (p, d) in phi.iter_mut().zip(&delta) {
            *p += d;
        }
    }
}

/// [`solve_phi`] on `n = 1 + ρ`, additionally returning the expansion terms.
pub fn solve_phi_with_terms(rho: &Field, tol: f64, max_iter: usize) -> Result<PoissonSolution> {
    let n = rho.map(|c| C64::new(1.0 + c.re, 0.0));
    let mut sol = solve_phi(&n, tol, max_iter)?;
    sol.terms = Some(expansion_terms(rho));
    Ok(sol)
}

fn pointwise(a: &Field, b: &Field) -> Field {
    a.zip(b, |x, y| C64::new(x.re * y.re, 0.0)).expect("same grid")
}

/// `[φ₁, φ₂, φ₃]` with `φ₁ = Bρ`, `φ₂ = −½B[(Bρ)²]`,
/// `φ₃ = B(½·Bρ·B[(Bρ)²] − ⅙(Bρ)³)`.
///
/// The cubic term comes from iterating `(1−∂ₓ²)φ = ρ − φ²/2 − φ³/6 − …`.
pub fn expansion_terms(rho: &Field) -> [Field; 3] {
    let grid = *rho.grid();
    let b = bessel(grid);
    let b_rho = b.apply(&rho.real_projection()).expect("same grid").real_projection();
    let sq = pointwise(&b_rho, &b_rho);
    let b_sq = b.apply(&sq).expect("same grid").real_projection();
    let phi2 = b_sq.scale(-0.5);
    let cube = pointwise(&sq, &b_rho);
    let inner = pointwise(&b_rho, &b_sq).scale(0.5).sub(&cube.scale(1.0 / 6.0)).expect("same grid");
    let phi3 = b.apply(&inner).expect("same grid").real_projection();
    [b_rho, phi2, phi3]
}

/// Partial sum of the small-amplitude inversion up to `order ∈ {1,2,3}`.
pub fn phi_expansion(rho: &Field, order: u32) -> Result<Field> {
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidArgument(format!("expansion order must be 1, 2 or 3, got {order}")));
    }
    let [p1, p2, p3] = expansion_terms(rho);
    let mut out = p1;
    if order >= 2 {
        out = out.add(&p2)?;
    }
    if order >= 3 {
        out = out.add(&p3)?;
    }
    Ok(out)
}

/// Default tolerance used when the exact Poisson solution is needed as an oracle.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Default Newton iteration cap.
pub const DEFAULT_MAX_ITER: usize = 40;

/// `𝓜(ρ) = φ(1+ρ) − (Bρ − ½B[(Bρ)²])`, the cubic-and-higher remainder.
pub fn m_remainder(rho: &Field) -> Result<Field> {
    let n = rho.map(|c| C64::new(1.0 + c.re, 0.0));
    let exact = solve_phi(&n, DEFAULT_TOL, DEFAULT_MAX_ITER)?.phi;
    exact.sub(&phi_expansion(rho, 2)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_core::make_grid;
    use std::f64::consts::PI;

    fn grid() -> PeriodicGrid {
        make_grid(2.0 * PI, 64).unwrap()
    }

    #[test]
    fn uniform_density_gives_zero_potential_in_one_pass() {
        let n = Field::from_fn(grid(), |_| 1.0);
        let s = solve_phi(&n, 1e-12, 10).unwrap();
        assert_eq!(s.iterations, 1);
        assert!(s.phi.max_abs() == 0.0);
    }

    #[test]
    fn weak_cosine_matches_first_order_term() {
        let g = grid();
        let n = Field::from_fn(g, |x| 1.0 + 1e-3 * x.cos());
        let s = solve_phi(&n, 1e-13, 20).unwrap();
        let err = (0..g.n())
            .map(|i| (s.phi.samples()[i].re - 5e-4 * g.x(i).cos()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "err = {err}");
        // mean consistency: ∫(e^φ − n) = 0
        let m: f64 = s.phi.re().iter().zip(n.re()).map(|(p, ni)| p.exp() - ni).sum::<f64>() * g.dx();
        assert!(m.abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let g = grid();
        let n = Field::from_fn(g, |x| x.cos());
        assert!(matches!(solve_phi(&n, 1e-12, 10), Err(Error::NonPositiveDensity { .. })));
        let ok = Field::from_fn(g, |_| 1.0);
        assert!(solve_phi(&ok, 1e-3, 10).is_err());
        assert!(phi_expansion(&ok, 4).is_err());
    }

    #[test]
    fn expansion_of_zero_and_of_cosine() {
        let g = grid();
        let z = Field::zeros(g);
        for o in 1..=3 {
            assert_eq!(phi_expansion(&z, o).unwrap().max_abs(), 0.0);
        }
        assert_eq!(m_remainder(&z).unwrap().max_abs(), 0.0);
        let a = 0.3;
        let rho = Field::from_fn(g, |x| a * x.cos());
        let p1 = phi_expansion(&rho, 1).unwrap();
        for i in 0..g.n() {
            assert!((p1.samples()[i].re - 0.5 * a * g.x(i).cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn max_iter_is_reported() {
        let g = grid();
        let n = Field::from_fn(g, |x| 1.0 + 0.5 * x.cos());
        assert!(matches!(solve_phi(&n, 1e-13, 1), Err(Error::MaxIterations { .. })));
    }
}
