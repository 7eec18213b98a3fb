//! Entanglement measures of a pure two-particle state.
//!
//! The purity `Π = Tr ρₓ²` is available by three independent contractions:
//! the reduced density kernel (`O(n³)`), the Schmidt spectrum (SVD of the
//! amplitude matrix) and the four-fold integral of the purity density
//! (`O(n⁴)`).
//!
//! Kernel convention: `ρ(x, X) = Σ_y ψ(x, y) ψ*(X, y)·h`, so one factor
//! of the spacing `h` is attached per trace and `Σ_x ρ(x, x)·h = 1`.

use std::sync::Arc;

use nalgebra::DMatrix;
use ndarray::{Array2, Array3, ArrayViewMut3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{integrate4, Field2C, Field4C, StoragePolicy, DENSE_MAX_N};
use crate::grid::Grid;

/// Eigenvalues of ρ between `-EIGEN_CLIP` and zero are treated as zero.
pub const EIGEN_CLIP: f64 = 1e-10;

/// Concurrence accepts purities up to `1 + PURITY_SLACK`, clamped to 1.
pub const PURITY_SLACK: f64 = 1e-9;

/// Reduced density kernel `ρ[i, I]` of one particle.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDensity {
    grid: Grid,
    rho: Array2<Complex64>,
}

impl ReducedDensity {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rho(&self) -> &Array2<Complex64> {
        &self.rho
    }

    /// `Σ ρ[i, i]·h`.
    pub fn trace(&self) -> f64 {
        let h = self.grid.spacing();
        (0..self.grid.n()).map(|i| self.rho[[i, i]].re).sum::<f64>() * h
    }

    /// Eigenvalues of the operator `ρ·h`, descending. Values in
    /// `[-EIGEN_CLIP, 0)` are clipped to zero; anything more negative is an error.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let n = self.grid.n();
        let h = self.grid.spacing();
        let m = DMatrix::from_fn(n, n, |r, c| self.rho[[r, c]] * h);
        let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        for e in ev.iter_mut() {
            if *e < -EIGEN_CLIP {
                return Err(Error::NegativeEigenvalue(*e));
            }
            if *e < 0.0 {
                *e = 0.0;
            }
        }
        Ok(ev)
    }
}

fn reduce_over(psi: &Field2C, trace_first: bool) -> ReducedDensity {
    let grid = *psi.grid();
    let n = grid.n();
    let h = grid.spacing();
    let a = psi.values();
    let at = |keep: usize, traced: usize| if trace_first { a[[traced, keep]] } else { a[[keep, traced]] };
    let mut rho = Array2::<Complex64>::zeros((n, n));
    for r in 0..n {
        for c in r..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..n {
                acc += at(r, t) * at(c, t).conj();
            }
            let v = acc * h;
            if r == c {
                rho[[r, r]] = Complex64::new(v.re, 0.0);
            } else {
                rho[[r, c]] = v;
                rho[[c, r]] = v.conj();
            }
        }
    }
    ReducedDensity { grid, rho }
}

/// `ρₓ(x, X) = ∫ ψ(x, y) ψ*(X, y) dy`.
pub fn reduced_density(psi: &Field2C) -> ReducedDensity {
    reduce_over(psi, false)
}

/// `ρᵧ(y, Y) = ∫ ψ(x, y) ψ*(x, Y) dx`.
pub fn reduced_density_y(psi: &Field2C) -> ReducedDensity {
    reduce_over(psi, true)
}

/// `Σ |ρ[i, I]|²·h²`.
pub fn purity_from_rho(rho: &ReducedDensity) -> f64 {
    let h2 = rho.grid.spacing().powi(2);
    rho.rho.iter().map(|z| z.norm_sqr()).sum::<f64>() * h2
}

/// Purity via the reduced density route.
pub fn purity(psi: &Field2C) -> f64 {
    purity_from_rho(&reduced_density(psi))
}

/// Pair products `P[i, j, J] = ψ*[i, j]·ψ[i, J]`. The purity density is
/// `π[i, j, I, J] = P[i, j, J]·conj(P[I, j, J])`; building it from pairs
/// makes the exchange and conjugation symmetries hold bitwise.
pub(crate) fn pair_products(psi: &Array2<Complex64>) -> Array3<Complex64> {
    let n = psi.nrows();
    Array3::from_shape_fn((n, n, n), |(i, j, bj)| psi[[i, j]].conj() * psi[[i, bj]])
}

pub(crate) fn density_from_pairs(grid: Grid, pairs: Arc<Array3<Complex64>>, policy: StoragePolicy) -> Result<Field4C> {
    let kind = policy.resolve(grid.n(), DENSE_MAX_N)?;
    let source = move |big_i: usize, mut out: ArrayViewMut3<'_, Complex64>| {
        for ((i, j, bj), v) in out.indexed_iter_mut() {
            *v = pairs[[i, j, bj]] * pairs[[big_i, j, bj]].conj();
        }
    };
    Field4C::from_source(grid, kind, Arc::new(source))
}

/// `π(x, y, X, Y) = ψ*(x, y) ψ(X, y) ψ*(X, Y) ψ(x, Y)`; dense up to
/// `n = 48`, slab-streamed above.
pub fn purity_density(psi: &Field2C) -> Field4C {
    purity_density_with(psi, StoragePolicy::Auto).expect("automatic storage never exceeds the dense limit")
}

pub fn purity_density_with(psi: &Field2C, policy: StoragePolicy) -> Result<Field4C> {
    density_from_pairs(*psi.grid(), Arc::new(pair_products(psi.values())), policy)
}

/// `∫ π`; the real part is Π and the imaginary part should vanish.
pub fn purity_from_density(pi: &Field4C) -> Complex64 {
    integrate4(pi)
}

/// Schmidt weights `λ_k`, descending, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchmidtSpectrum {
    pub coefficients: Vec<f64>,
}

impl SchmidtSpectrum {
    /// `Σ λ_k²`.
    pub fn purity(&self) -> f64 {
        self.coefficients.iter().map(|l| l * l).sum()
    }

    /// `K = 1 / Σ λ_k²`.
    pub fn schmidt_number(&self) -> f64 {
        1.0 / self.purity()
    }

    /// Number of weights above `tol`.
    pub fn rank(&self, tol: f64) -> usize {
        self.coefficients.iter().filter(|&&l| l > tol).count()
    }
}

/// Squared singular values of `ψ[i, j]·h`, rescaled to sum to one.
pub fn schmidt_spectrum(psi: &Field2C) -> SchmidtSpectrum {
    let n = psi.grid().n();
    let h = psi.grid().spacing();
    let m = DMatrix::from_fn(n, n, |r, c| psi.values()[[r, c]] * h);
    let sv = m.singular_values();
    let mut lambda: Vec<f64> = sv.iter().map(|s| s * s).collect();
    lambda.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = lambda.iter().sum();
    if total > 0.0 {
        lambda.iter_mut().for_each(|l| *l /= total);
    }
    SchmidtSpectrum { coefficients: lambda }
}

/// `C = √(2(1 − Π))`.
pub fn concurrence(purity: f64) -> Result<f64> {
    if !(purity.is_finite() && purity > 0.0 && purity <= 1.0 + PURITY_SLACK) {
        return Err(Error::InvalidArgument(format!("purity must lie in (0, 1] (got {purity})")));
    }
    let p = purity.min(1.0);
    Ok((2.0 * (1.0 - p)).sqrt())
}

/// Dimension comparison parameter: dimension of the space carrying the
/// purity density over the dimension of the wavefunction's configuration
/// space. Only two particles are supported.
pub fn dcp(num_particles: usize, particle_dim: usize) -> Result<f64> {
    if num_particles != 2 {
        return Err(Error::InvalidArgument(format!(
            "dimension comparison is defined for two particles (got {num_particles})"
        )));
    }
    if particle_dim == 0 {
        return Err(Error::InvalidArgument("particle dimension must be at least 1".into()));
    }
    let density_dim = 2 * num_particles * particle_dim;
    let wavefunction_dim = num_particles * particle_dim;
    Ok(density_dim as f64 / wavefunction_dim as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityReport {
    pub pi_from_rho: f64,
    pub pi_from_density: Complex64Repr,
    pub pi_from_schmidt: f64,
    pub schmidt_number: f64,
    pub concurrence: f64,
    pub imag_total: f64,
    pub dcp: f64,
}

/// Serializable complex number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complex64Repr {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for Complex64Repr {
    fn from(z: Complex64) -> Self {
        Complex64Repr { re: z.re, im: z.im }
    }
}

impl From<Complex64Repr> for Complex64 {
    fn from(z: Complex64Repr) -> Self {
        Complex64::new(z.re, z.im)
    }
}

/// All purity routes plus derived measures for one state.
pub fn purity_report(psi: &Field2C) -> Result<PurityReport> {
    let pi_from_rho = purity(psi);
    let density = purity_from_density(&purity_density(psi));
    let spectrum = schmidt_spectrum(psi);
    Ok(PurityReport {
        pi_from_rho,
        pi_from_density: density.into(),
        pi_from_schmidt: spectrum.purity(),
        schmidt_number: spectrum.schmidt_number(),
        concurrence: concurrence(pi_from_rho)?,
        imag_total: density.im,
        dcp: dcp(2, 1)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::StorageKind;
    use crate::grid::make_grid;

    fn hermite_pair(grid: Grid) -> (Vec<f64>, Vec<f64>) {
        let h = grid.spacing();
        let c = grid.coords();
        let h0: Vec<f64> = c.iter().map(|x| (-x * x / 2.0).exp()).collect();
        let n0 = (h0.iter().map(|v| v * v).sum::<f64>() * h).sqrt();
        let h0: Vec<f64> = h0.iter().map(|v| v / n0).collect();
        let h1: Vec<f64> = c.iter().map(|x| x * (-x * x / 2.0).exp()).collect();
        let n1 = (h1.iter().map(|v| v * v).sum::<f64>() * h).sqrt();
        (h0, h1.iter().map(|v| v / n1).collect())
    }

    fn two_term(grid: Grid, l0: f64) -> Field2C {
        let (a, b) = hermite_pair(grid);
        let values = Array2::from_shape_fn((grid.n(), grid.n()), |(i, j)| {
            Complex64::new(l0.sqrt() * a[i] * a[j] + (1.0 - l0).sqrt() * b[i] * b[j], 0.0)
        });
        Field2C::new(grid, values).unwrap()
    }

    fn double_gaussian(grid: Grid, a: f64, b: f64) -> Field2C {
        Field2C::from_fn(grid, |x, y| {
            Complex64::new((-(x + y).powi(2) / (4.0 * b * b) - (x - y).powi(2) / (4.0 * a * a)).exp(), 0.0)
        })
        .unwrap()
        .normalized()
        .unwrap()
    }

    fn product(grid: Grid) -> Field2C {
        Field2C::from_fn(grid, |x, y| {
            Complex64::from_polar((-(x - 0.5).powi(2) / 2.0 - y * y / 1.5).exp(), 0.7 * x - 0.2 * y)
        })
        .unwrap()
        .normalized()
        .unwrap()
    }

    #[test]
    fn product_state_is_pure() {
        let g = make_grid(24, 12.0).unwrap();
        let psi = product(g);
        let rho = reduced_density(&psi);
        assert!((rho.trace() - 1.0).abs() < 1e-12);
        assert!((purity_from_rho(&rho) - 1.0).abs() < 1e-12);
        let ev = rho.eigenvalues().unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-10 && ev[1].abs() < 1e-10);
        let s = schmidt_spectrum(&psi);
        assert!((s.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((purity_from_density(&purity_density(&psi)) - Complex64::new(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn equal_two_term_state() {
        let g = make_grid(32, 16.0).unwrap();
        let psi = two_term(g, 0.5);
        let rho = reduced_density(&psi);
        let ev = rho.eigenvalues().unwrap();
        assert!((ev[0] - 0.5).abs() < 1e-10 && (ev[1] - 0.5).abs() < 1e-10);
        assert!(ev[2..].iter().all(|e| e.abs() < 1e-10));
        assert!((purity_from_rho(&rho) - 0.5).abs() < 1e-10);
    }

    #[test]
    fn weighted_two_term_spectrum() {
        let g = make_grid(32, 16.0).unwrap();
        let s = schmidt_spectrum(&two_term(g, 0.7));
        assert!((s.coefficients[0] - 0.7).abs() < 1e-12);
        assert!((s.coefficients[1] - 0.3).abs() < 1e-12);
        assert!((s.schmidt_number() - 1.0 / 0.58).abs() < 1e-9);
        assert_eq!(s.rank(1e-10), 2);
    }

    #[test]
    fn double_gaussian_purity_by_every_route() {
        // Oracle: Σλ² of the numerically diagonalized ρ; the closed form
        // 2ab/(a²+b²) = 0.8 is only trusted once the oracle confirms it.
        let g = make_grid(48, 24.0).unwrap();
        let psi = double_gaussian(g, 1.0, 2.0);
        let rho = reduced_density(&psi);
        let ev = rho.eigenvalues().unwrap();
        let oracle: f64 = ev.iter().map(|l| l * l).sum();
        assert!((oracle - 0.8).abs() < 1e-4);
        let by_rho = purity_from_rho(&rho);
        assert!((by_rho - oracle).abs() < 1e-10);
        let by_density = purity_from_density(&purity_density(&psi));
        assert!((by_density.re - by_rho).abs() < 1e-9);
        assert!(by_density.im.abs() < 1e-11);
        let s = schmidt_spectrum(&psi);
        assert!((s.purity() - by_rho).abs() < 1e-10);
        assert!((s.schmidt_number() - 1.25).abs() < 1e-3);
        // Geometric Schmidt law: λ_{k+1}/λ_k constant.
        let ratios: Vec<f64> = ev.windows(2).take(5).map(|w| w[1] / w[0]).collect();
        for r in &ratios {
            assert!((r - ratios[0]).abs() < 1e-6, "{ratios:?}");
        }
        // ratio ((b - a)/(b + a))² = 1/9 for a = 1, b = 2
        assert!((ratios[0] - 1.0 / 9.0).abs() < 1e-6);
    }

    #[test]
    fn purity_density_symmetries_are_exact() {
        let g = make_grid(8, 6.0).unwrap();
        let psi = Field2C::from_fn(g, |x, y| {
            Complex64::from_polar((-(x * x + y * y + x * y) / 3.0).exp(), 0.4 * x * y + 0.9 * x)
        })
        .unwrap()
        .normalized()
        .unwrap();
        let pi = purity_density_with(&psi, StoragePolicy::Dense).unwrap();
        let a = pi.as_dense().unwrap();
        let n = g.n();
        for i in 0..n {
            for j in 0..n {
                for bi in 0..n {
                    for bj in 0..n {
                        let v = a[[i, j, bi, bj]];
                        assert_eq!(a[[bi, bj, i, j]], v);
                        assert_eq!(a[[bi, j, i, bj]], v.conj());
                        assert_eq!(a[[i, bj, bi, j]], v.conj());
                    }
                }
            }
        }
    }

    #[test]
    fn real_product_density_is_real_and_positive() {
        let g = make_grid(12, 8.0).unwrap();
        let psi = Field2C::from_fn(g, |x, y| Complex64::new((-(x * x) / 2.0 - y * y).exp(), 0.0)).unwrap();
        let pi = purity_density(&psi.normalized().unwrap());
        let a = pi.as_dense().unwrap();
        assert!(a.iter().all(|z| z.im == 0.0 && z.re >= 0.0));
    }

    #[test]
    fn streamed_density_matches_dense() {
        let g = make_grid(10, 6.0).unwrap();
        let psi = product(g);
        let d = purity_density_with(&psi, StoragePolicy::Dense).unwrap();
        let s = purity_density_with(&psi, StoragePolicy::Streamed).unwrap();
        assert_eq!(s.storage_kind(), StorageKind::Streamed);
        assert_eq!(purity_from_density(&d), purity_from_density(&s));
    }

    #[test]
    fn exchange_symmetry() {
        let g = make_grid(32, 16.0).unwrap();
        let psi = double_gaussian(g, 0.8, 1.7);
        let px = purity_from_rho(&reduced_density(&psi));
        let py = purity_from_rho(&reduced_density_y(&psi));
        assert!((px - py).abs() < 1e-10);
    }

    #[test]
    fn concurrence_values() {
        assert_eq!(concurrence(1.0).unwrap(), 0.0);
        assert_eq!(concurrence(1.0 + 5e-10).unwrap(), 0.0);
        assert!((concurrence(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((concurrence(0.8).unwrap() - 0.4f64.sqrt()).abs() < 1e-15);
        assert!((concurrence(0.8).unwrap() - 0.6325).abs() < 1e-4);
        assert!(concurrence(1.0 + 2e-9).is_err());
        assert!(concurrence(0.0).is_err());
        assert!(concurrence(-0.1).is_err());
    }

    #[test]
    fn dimension_comparison_parameter() {
        assert_eq!(dcp(2, 3).unwrap(), 2.0);
        assert_eq!(dcp(2, 1).unwrap(), 2.0);
        assert!(dcp(3, 1).is_err());
        assert!(dcp(2, 0).is_err());
    }

    #[test]
    fn negative_eigenvalues_are_rejected() {
        let g = make_grid(8, 8.0).unwrap();
        let mut rho = Array2::<Complex64>::zeros((8, 8));
        rho[[0, 0]] = Complex64::new(1.0, 0.0);
        rho[[1, 1]] = Complex64::new(-1e-3, 0.0);
        let r = ReducedDensity { grid: g, rho };
        assert!(matches!(r.eigenvalues(), Err(Error::NegativeEigenvalue(_))));
        let mut rho = Array2::<Complex64>::zeros((8, 8));
        rho[[0, 0]] = Complex64::new(1.0, 0.0);
        rho[[1, 1]] = Complex64::new(-1e-12, 0.0);
        let ev = ReducedDensity { grid: g, rho }.eigenvalues().unwrap();
        assert_eq!(ev.iter().filter(|&&e| e == 0.0).count(), 7);
    }

    #[test]
    fn report_collects_all_routes() {
        let g = make_grid(16, 10.0).unwrap();
        let r = purity_report(&double_gaussian(g, 0.9, 1.4)).unwrap();
        assert!((r.pi_from_rho - r.pi_from_schmidt).abs() < 1e-10);
        assert!((r.pi_from_density.re - r.pi_from_rho).abs() < 1e-9);
        assert!((r.concurrence - (2.0 * (1.0 - r.pi_from_rho)).sqrt()).abs() < 1e-15);
        assert_eq!(r.dcp, 2.0);
    }
}
