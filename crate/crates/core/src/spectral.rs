//! Fourier spectral calculus on the periodic grid.
//!
//! First derivatives use the multiplier `ik` with the Nyquist coefficient
//! zeroed; second derivatives use `-k²` on every coefficient, Nyquist
//! included. Both are exact derivatives of the symmetric trigonometric
//! interpolant sampled back on the grid.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::{Array, Array2, Array3, ArrayViewMut1, Axis as NdAxis, Dimension, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::field::Field2C;
use crate::grid::{wavenumbers, Grid};

/// Axis of a rank-2 field: `First` is `x` (index `i`), `Second` is `y` (index `j`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    First,
    Second,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::First => 0,
            Axis::Second => 1,
        }
    }
}

#[derive(Clone)]
pub(crate) struct Plan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

type PlanCache = Mutex<(FftPlanner<f64>, HashMap<usize, Plan>)>;

pub(crate) fn plan(n: usize) -> Plan {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    let (planner, plans) = &mut *guard;
    if let Some(p) = plans.get(&n) {
        return p.clone();
    }
    let p = Plan { forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) };
    plans.insert(n, p.clone());
    p
}

/// `ik` multipliers with the Nyquist entry zeroed.
pub(crate) fn first_derivative_multiplier(n: usize, length: f64) -> Vec<Complex64> {
    wavenumbers(n, length)
        .into_iter()
        .enumerate()
        .map(|(i, k)| if i == n / 2 { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, k) })
        .collect()
}

/// `-k²` multipliers.
pub(crate) fn second_derivative_multiplier(n: usize, length: f64) -> Vec<Complex64> {
    wavenumbers(n, length).into_iter().map(|k| Complex64::new(-k * k, 0.0)).collect()
}

fn transform_lane(mut lane: ArrayViewMut1<'_, Complex64>, plan: &Plan, mult: &[Complex64]) {
    let n = mult.len();
    let mut buf: Vec<Complex64> = lane.iter().copied().collect();
    plan.forward.process(&mut buf);
    let scale = 1.0 / n as f64;
    for (b, m) in buf.iter_mut().zip(mult) {
        *b *= m * scale;
    }
    plan.inverse.process(&mut buf);
    for (l, b) in lane.iter_mut().zip(buf) {
        *l = b;
    }
}

/// Applies the Fourier multiplier `mult` along `axis` of an array of any rank.
pub(crate) fn apply_multiplier<D: Dimension>(a: &mut Array<Complex64, D>, axis: usize, mult: &[Complex64]) {
    let plan = plan(mult.len());
    Zip::from(a.lanes_mut(NdAxis(axis))).par_for_each(|lane| transform_lane(lane, &plan, mult));
}

pub(crate) fn derivative_along<D: Dimension>(a: &mut Array<Complex64, D>, axis: usize, grid: &Grid) {
    let mult = first_derivative_multiplier(grid.n(), grid.length());
    apply_multiplier(a, axis, &mult);
}

/// Spectral first derivative of `f` along `axis`.
pub fn spectral_derivative(f: &Field2C, axis: Axis) -> Field2C {
    let mut values = f.values().clone();
    derivative_along(&mut values, axis.index(), f.grid());
    Field2C::from_parts_unchecked(*f.grid(), values)
}

/// Spectral second derivative of `f` along `axis` (one term of the Laplacian).
pub fn spectral_laplacian(f: &Field2C, axis: Axis) -> Field2C {
    let mut values = f.values().clone();
    let mult = second_derivative_multiplier(f.grid().n(), f.grid().length());
    apply_multiplier(&mut values, axis.index(), &mult);
    Field2C::from_parts_unchecked(*f.grid(), values)
}

fn raw_transform<D: Dimension>(a: &mut Array<Complex64, D>, inverse: bool) {
    let n = a.shape()[0];
    let plan = plan(n);
    let fft = if inverse { plan.inverse.clone() } else { plan.forward.clone() };
    for axis in 0..a.ndim() {
        Zip::from(a.lanes_mut(NdAxis(axis))).par_for_each(|mut lane| {
            let mut buf: Vec<Complex64> = lane.iter().copied().collect();
            fft.process(&mut buf);
            for (l, b) in lane.iter_mut().zip(buf) {
                *l = b;
            }
        });
    }
    if inverse {
        let scale = 1.0 / (n as f64).powi(a.ndim() as i32);
        a.mapv_inplace(|z| z * scale);
    }
}

/// Unnormalized forward 2D DFT.
pub fn fft2(values: &Array2<Complex64>) -> Array2<Complex64> {
    let mut out = values.clone();
    raw_transform(&mut out, false);
    out
}

/// Inverse of [`fft2`] (includes the `1/n²` factor).
pub fn ifft2(values: &Array2<Complex64>) -> Array2<Complex64> {
    let mut out = values.clone();
    raw_transform(&mut out, true);
    out
}

/// Trigonometric interpolation of every column of `a` (indexed `[pos, other]`)
/// onto the doubled grid. The Nyquist coefficient is split evenly between
/// `±n/2` so real data stays real.
pub(crate) fn upsample_axis0(a: &Array2<Complex64>) -> Array2<Complex64> {
    let (n, m) = a.dim();
    let coarse = plan(n);
    let fine = plan(2 * n);
    let mut out = Array2::<Complex64>::zeros((2 * n, m));
    let columns: Vec<Vec<Complex64>> = (0..m)
        .into_par_iter()
        .map(|c| {
            let mut buf: Vec<Complex64> = a.column(c).iter().copied().collect();
            coarse.forward.process(&mut buf);
            let mut wide = vec![Complex64::new(0.0, 0.0); 2 * n];
            let half = n / 2;
            wide[..half].copy_from_slice(&buf[..half]);
            wide[2 * n - half + 1..].copy_from_slice(&buf[half + 1..]);
            wide[half] = buf[half] * 0.5;
            wide[2 * n - half] = buf[half] * 0.5;
            fine.inverse.process(&mut wide);
            // forward/inverse pair carries a factor 2n; the interpolant needs 1/n.
            let scale = 1.0 / n as f64;
            wide.iter_mut().for_each(|z| *z *= scale);
            wide
        })
        .collect();
    for (c, col) in columns.into_iter().enumerate() {
        out.column_mut(c).iter_mut().zip(col).for_each(|(o, v)| *o = v);
    }
    out
}

/// Antisymmetric bracket `G[r, p, q] = a[r, q]·conj(da[r, p]) − conj(a[r, p])·da[r, q]`.
pub(crate) fn bracket(a: &Array2<Complex64>, da: &Array2<Complex64>) -> Array3<Complex64> {
    let (n, m) = a.dim();
    Array3::from_shape_fn((n, m, m), |(r, p, q)| a[[r, q]] * da[[r, p]].conj() - a[[r, p]].conj() * da[[r, q]])
}

/// `∂_r G` where `G` is [`bracket`], differentiating the product on the
/// grid it is sampled on (products alias into the retained band).
pub(crate) fn bracket_derivative_collocated(
    a: &Array2<Complex64>,
    da: &Array2<Complex64>,
    grid: &Grid,
) -> Array3<Complex64> {
    let mut g = bracket(a, da);
    derivative_along(&mut g, 0, grid);
    g
}

/// `∂_r G` where `G` is [`bracket`], with the product formed from the
/// trigonometric interpolants on the doubled grid so it is represented
/// without aliasing, then sampled back on the original points.
pub(crate) fn bracket_derivative_dealiased(
    a: &Array2<Complex64>,
    da: &Array2<Complex64>,
    grid: &Grid,
) -> Array3<Complex64> {
    let (n, m) = a.dim();
    let af = upsample_axis0(a);
    let daf = upsample_axis0(da);
    let fine = plan(2 * n);
    let mult = first_derivative_multiplier(2 * n, grid.length());
    let scale = 1.0 / (2 * n) as f64;
    let mut out = Array3::<Complex64>::zeros((n, m, m));
    let blocks: Vec<Array2<Complex64>> = (0..m)
        .into_par_iter()
        .map(|p| {
            let mut block = Array2::<Complex64>::zeros((n, m));
            let mut buf = vec![Complex64::new(0.0, 0.0); 2 * n];
            for q in 0..m {
                for (r, b) in buf.iter_mut().enumerate() {
                    *b = af[[r, q]] * daf[[r, p]].conj() - af[[r, p]].conj() * daf[[r, q]];
                }
                fine.forward.process(&mut buf);
                for (b, k) in buf.iter_mut().zip(&mult) {
                    *b *= k * scale;
                }
                fine.inverse.process(&mut buf);
                for r in 0..n {
                    block[[r, q]] = buf[2 * r];
                }
            }
            block
        })
        .collect();
    for (p, block) in blocks.into_iter().enumerate() {
        out.index_axis_mut(NdAxis(1), p).assign(&block);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::integrate2;
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    fn max_rel(a: &Field2C, b: &Field2C) -> f64 {
        a.linf_distance(b).unwrap() / b.linf().max(1e-300)
    }

    #[test]
    fn plane_wave_is_an_eigenfunction() {
        let g = make_grid(32, 10.0).unwrap();
        let k = 2.0 * PI * 3.0 / 10.0;
        let f = Field2C::from_fn(g, |x, _| Complex64::from_polar(1.0, k * x)).unwrap();
        let df = spectral_derivative(&f, Axis::First);
        assert!(max_rel(&df, &f.scale(Complex64::new(0.0, k))) < 1e-12);
        let d2 = spectral_laplacian(&f, Axis::First);
        assert!(max_rel(&d2, &f.scale(Complex64::new(-k * k, 0.0))) < 1e-12);
        let dy = spectral_derivative(&f, Axis::Second);
        assert!(dy.linf() < 1e-12);
    }

    #[test]
    fn constant_has_zero_derivative() {
        let g = make_grid(16, 3.0).unwrap();
        let f = Field2C::from_fn(g, |_, _| Complex64::new(2.5, -1.0)).unwrap();
        assert!(spectral_derivative(&f, Axis::Second).linf() < 1e-14);
        assert!(spectral_laplacian(&f, Axis::First).linf() < 1e-13);
    }

    #[test]
    fn gaussian_matches_closed_form() {
        // Oracle: analytic derivatives of exp(-x²/2) evaluated on the lattice.
        let g = make_grid(64, 20.0).unwrap();
        let f = Field2C::from_fn(g, |x, _| Complex64::new((-x * x / 2.0).exp(), 0.0)).unwrap();
        let d1 = Field2C::from_fn(g, |x, _| Complex64::new(-x * (-x * x / 2.0).exp(), 0.0)).unwrap();
        let d2 = Field2C::from_fn(g, |x, _| Complex64::new((x * x - 1.0) * (-x * x / 2.0).exp(), 0.0)).unwrap();
        assert!(spectral_derivative(&f, Axis::First).linf_distance(&d1).unwrap() <= 1e-10);
        assert!(spectral_laplacian(&f, Axis::First).linf_distance(&d2).unwrap() <= 1e-9);
    }

    #[test]
    fn nyquist_mode_first_derivative_is_zeroed() {
        let g = make_grid(8, 8.0).unwrap();
        let f = Field2C::from_fn(g, |x, _| Complex64::new((PI * x).cos(), 0.0)).unwrap();
        assert!(spectral_derivative(&f, Axis::First).linf() < 1e-14);
        let d2 = spectral_laplacian(&f, Axis::First);
        assert!(max_rel(&d2, &f.scale(Complex64::new(-PI * PI, 0.0))) < 1e-13);
    }

    #[test]
    fn fft_round_trip_preserves_values() {
        let g = make_grid(16, 5.0).unwrap();
        let f = Field2C::from_fn(g, |x, y| Complex64::new((x * y).sin(), (x - y).cos())).unwrap();
        let back = ifft2(&fft2(f.values()));
        let gf = Field2C::new(g, back).unwrap();
        assert!(gf.linf_distance(&f).unwrap() < 1e-14);
    }

    #[test]
    fn upsampling_reproduces_band_limited_data() {
        let g = make_grid(16, 2.0 * PI).unwrap();
        let fine = make_grid(32, 2.0 * PI).unwrap();
        let f = |x: f64| Complex64::new((3.0 * x).cos() + 0.5 * (8.0 * x).cos(), (2.0 * x).sin());
        let a = Array2::from_shape_fn((16, 1), |(i, _)| f(g.coord(i)));
        let up = upsample_axis0(&a);
        for r in 0..32 {
            assert!((up[[r, 0]] - f(fine.coord(r))).norm() < 1e-13, "r = {r}");
        }
    }

    #[test]
    fn dealiased_bracket_derivative_is_exact_for_band_limited_products() {
        // Modes 5 and -4 on a 16-point grid; their conjugate products reach 9 and alias
        // on the coarse grid but not on the doubled one.
        let g = make_grid(16, 2.0 * PI).unwrap();
        let u = |x: f64, p: usize| Complex64::from_polar(1.0, 5.0 * x) * (1.0 + p as f64) + (4.0 * x).cos();
        let du = |x: f64, p: usize| Complex64::new(0.0, 5.0) * Complex64::from_polar(1.0, 5.0 * x) * (1.0 + p as f64) - 4.0 * (4.0 * x).sin();
        let d2u = |x: f64, p: usize| -25.0 * Complex64::from_polar(1.0, 5.0 * x) * (1.0 + p as f64) - 16.0 * (4.0 * x).cos();
        let m = 3;
        let a = Array2::from_shape_fn((16, m), |(r, p)| u(g.coord(r), p));
        let da = Array2::from_shape_fn((16, m), |(r, p)| du(g.coord(r), p));
        let got = bracket_derivative_dealiased(&a, &da, &g);
        let colloc = bracket_derivative_collocated(&a, &da, &g);
        let mut worst = 0.0f64;
        let mut worst_colloc = 0.0f64;
        for r in 0..16 {
            let x = g.coord(r);
            for p in 0..m {
                for q in 0..m {
                    // d/dx [u_q conj(u_p') - conj(u_p) u_q'] = u_q conj(u_p'') - conj(u_p) u_q''
                    let exact = u(x, q) * d2u(x, p).conj() - u(x, p).conj() * d2u(x, q);
                    worst = worst.max((got[[r, p, q]] - exact).norm());
                    worst_colloc = worst_colloc.max((colloc[[r, p, q]] - exact).norm());
                }
            }
        }
        // exact values reach ~200, so this is a few ulps of relative roundoff
        assert!(worst < 1e-10, "dealiased error {worst}");
        assert!(worst_colloc > 1.0, "collocated product should alias, error {worst_colloc}");
    }

    #[test]
    fn derivative_integrates_to_zero() {
        let g = make_grid(24, 7.0).unwrap();
        let f = Field2C::from_fn(g, |x, y| Complex64::new((-(x - 1.0).powi(2)).exp() * y.cos(), x.sin())).unwrap();
        assert!(integrate2(&spectral_derivative(&f, Axis::First)).norm() < 1e-13);
        assert!(integrate2(&spectral_derivative(&f, Axis::Second)).norm() < 1e-13);
    }
}
