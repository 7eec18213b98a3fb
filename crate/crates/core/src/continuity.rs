//! Purity currents, their divergence, the analytic `∂π/∂t`, the interaction
//! source `U` and the residuals of the continuity equations.
//!
//! Every current component factors into a pair product that is constant
//! along the differentiated axis times an antisymmetric bracket of ψ and
//! its derivative:
//!
//! ```text
//! J_x = cₓ · ψ(X,y) ψ*(X,Y) · Gₓ(x; y, Y)     cₓ = iħ/2m
//! J_y = c_y · ψ(x,Y) ψ*(X,Y) · G_y(y; x, X)    c_y = iħ/2M
//! J_X = cₓ · ψ*(x,y) ψ(x,Y) · Gₓ(X; Y, y)
//! J_Y = c_y · ψ*(x,y) ψ(X,y) · G_y(Y; X, x)
//! G(r; p, q) = a(r,q)·∂a*(r,p) − a*(r,p)·∂a(r,q)
//! ```
//!
//! so the divergence only needs `∂_r G` on an `n³` array per particle.
//! The default [`DivergenceScheme::Dealiased`] forms the bracket from the
//! trigonometric interpolants on a doubled grid before differentiating,
//! which removes the aliasing error of differentiating the sampled product.

use std::sync::Arc;

use ndarray::{Array2, Array3, Array4, ArrayViewMut3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{same_grid, Field2C, Field4C, StorageKind, StoragePolicy, DENSE_MAX_N};
use crate::grid::{Grid, PhysParams};
use crate::propagator::{apply_hamiltonian, Potential, SplitStepper};
use crate::purity::{density_from_pairs, pair_products, purity};
use crate::reduce::pairwise_sum_real;
use crate::spectral::{
    bracket, bracket_derivative_collocated, bracket_derivative_dealiased, derivative_along,
    spectral_derivative, Axis,
};

/// Current components are kept dense up to this size; above it they are
/// streamed so the four are never materialized together.
pub const CURRENT_DENSE_MAX_N: usize = 32;

/// Reference scales below this are treated as zero and residuals are
/// reported in absolute terms.
pub const REFERENCE_FLOOR: f64 = 1e-14;

/// Relative residual above which a state is flagged as unresolved.
pub const RESOLVED_TOL: f64 = 1e-3;

/// How `∂_r G` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceScheme {
    /// Bracket formed on the doubled grid, differentiated there and sampled back.
    #[default]
    Dealiased,
    /// Spectral derivative of the current as sampled on the grid.
    Collocated,
}

#[derive(Debug)]
struct CurrentFactors {
    grid: Grid,
    psi: Array2<Complex64>,
    dpsi_x: Array2<Complex64>,
    dpsi_y: Array2<Complex64>,
    cx: Complex64,
    cy: Complex64,
}

impl CurrentFactors {
    fn new(psi: &Field2C, p: &PhysParams) -> Self {
        CurrentFactors {
            grid: *psi.grid(),
            psi: psi.values().clone(),
            dpsi_x: spectral_derivative(psi, Axis::First).into_values(),
            dpsi_y: spectral_derivative(psi, Axis::Second).into_values(),
            cx: Complex64::new(0.0, p.hbar / (2.0 * p.mass_x)),
            cy: Complex64::new(0.0, p.hbar / (2.0 * p.mass_y)),
        }
    }

    fn transposed(&self) -> (Array2<Complex64>, Array2<Complex64>) {
        (self.psi.t().to_owned(), self.dpsi_y.t().to_owned())
    }

    /// Brackets (or their derivatives) for both particles, `[x; y, Y]` and `[y; x, X]`.
    fn brackets(&self, derivative: Option<DivergenceScheme>) -> (Arc<Array3<Complex64>>, Arc<Array3<Complex64>>) {
        let (psi_t, dpsi_yt) = self.transposed();
        let g = &self.grid;
        let (gx, gy) = match derivative {
            None => (bracket(&self.psi, &self.dpsi_x), bracket(&psi_t, &dpsi_yt)),
            Some(DivergenceScheme::Dealiased) => (
                bracket_derivative_dealiased(&self.psi, &self.dpsi_x, g),
                bracket_derivative_dealiased(&psi_t, &dpsi_yt, g),
            ),
            Some(DivergenceScheme::Collocated) => (
                bracket_derivative_collocated(&self.psi, &self.dpsi_x, g),
                bracket_derivative_collocated(&psi_t, &dpsi_yt, g),
            ),
        };
        (Arc::new(gx), Arc::new(gy))
    }
}

/// Which component of the current a slab source fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Component {
    X,
    Y,
    BigX,
    BigY,
}

/// Evaluates one component (or its axis derivative) from factors and a
/// bracket array; `out[i, j, J]` at fixed `I`.
fn fill_component(
    c: Component,
    f: &CurrentFactors,
    gx: &Array3<Complex64>,
    gy: &Array3<Complex64>,
    bi: usize,
    mut out: ArrayViewMut3<'_, Complex64>,
) {
    let psi = &f.psi;
    for ((i, j, bj), o) in out.indexed_iter_mut() {
        *o = match c {
            Component::X => f.cx * (psi[[bi, j]] * psi[[bi, bj]].conj()) * gx[[i, j, bj]],
            Component::Y => f.cy * (psi[[i, bj]] * psi[[bi, bj]].conj()) * gy[[j, i, bi]],
            Component::BigX => f.cx * (psi[[i, j]].conj() * psi[[i, bj]]) * gx[[bi, bj, j]],
            Component::BigY => f.cy * (psi[[i, j]].conj() * psi[[bi, j]]) * gy[[bj, bi, i]],
        };
    }
}

fn fill_divergence(
    f: &CurrentFactors,
    gx: &Array3<Complex64>,
    gy: &Array3<Complex64>,
    bi: usize,
    mut out: ArrayViewMut3<'_, Complex64>,
) {
    let psi = &f.psi;
    for ((i, j, bj), o) in out.indexed_iter_mut() {
        let a = f.cx * (psi[[bi, j]] * psi[[bi, bj]].conj()) * gx[[i, j, bj]];
        let b = f.cy * (psi[[i, bj]] * psi[[bi, bj]].conj()) * gy[[j, i, bi]];
        let c = f.cx * (psi[[i, j]].conj() * psi[[i, bj]]) * gx[[bi, bj, j]];
        let d = f.cy * (psi[[i, j]].conj() * psi[[bi, j]]) * gy[[bj, bi, i]];
        *o = (a + b) + (c + d);
    }
}

/// The four components `(J_x, J_y, J_X, J_Y)` of the purity current.
#[derive(Debug, Clone)]
pub struct CurrentField {
    pub x: Field4C,
    pub y: Field4C,
    pub big_x: Field4C,
    pub big_y: Field4C,
    factors: Option<Arc<CurrentFactors>>,
}

impl CurrentField {
    /// Wraps arbitrary component fields. Their divergence is taken by
    /// differentiating each stored component along its own axis.
    pub fn from_components(x: Field4C, y: Field4C, big_x: Field4C, big_y: Field4C) -> Result<Self> {
        let g = *x.grid();
        for (f, what) in [(&y, "J_y"), (&big_x, "J_X"), (&big_y, "J_Y")] {
            same_grid(&g, f.grid(), what)?;
        }
        Ok(CurrentField { x, y, big_x, big_y, factors: None })
    }

    pub fn grid(&self) -> &Grid {
        self.x.grid()
    }

    pub fn components(&self) -> [&Field4C; 4] {
        [&self.x, &self.y, &self.big_x, &self.big_y]
    }

    /// True when built from a wavefunction, so the factored divergence is available.
    pub fn is_factored(&self) -> bool {
        self.factors.is_some()
    }
}

/// Builds the four purity-current components of `ψ`.
pub fn current_components(psi: &Field2C, p: &PhysParams) -> CurrentField {
    current_components_with(psi, p, StoragePolicy::Auto).expect("automatic storage never exceeds the dense limit")
}

pub fn current_components_with(psi: &Field2C, p: &PhysParams, policy: StoragePolicy) -> Result<CurrentField> {
    let factors = Arc::new(CurrentFactors::new(psi, p));
    let grid = factors.grid;
    let kind = policy.resolve(grid.n(), CURRENT_DENSE_MAX_N)?;
    let (gx, gy) = factors.brackets(None);
    let make = |c: Component| {
        let (f, gx, gy) = (factors.clone(), gx.clone(), gy.clone());
        let src = move |bi: usize, out: ArrayViewMut3<'_, Complex64>| fill_component(c, &f, &gx, &gy, bi, out);
        Field4C::from_source(grid, kind, Arc::new(src))
    };
    Ok(CurrentField {
        x: make(Component::X)?,
        y: make(Component::Y)?,
        big_x: make(Component::BigX)?,
        big_y: make(Component::BigY)?,
        factors: Some(factors),
    })
}

/// `∂_x J_x + ∂_y J_y + ∂_X J_X + ∂_Y J_Y` with the default scheme.
pub fn divergence4(j: &CurrentField) -> Result<Field4C> {
    divergence4_with(j, DivergenceScheme::default(), StoragePolicy::Auto)
}

/// Factored currents are differentiated through their brackets with the
/// requested scheme, accumulated into one field. Bare component fields are
/// materialized and differentiated per axis (collocated only).
pub fn divergence4_with(j: &CurrentField, scheme: DivergenceScheme, policy: StoragePolicy) -> Result<Field4C> {
    let grid = *j.grid();
    match &j.factors {
        Some(f) => {
            let kind = policy.resolve(grid.n(), DENSE_MAX_N)?;
            let (gx, gy) = f.brackets(Some(scheme));
            let f = f.clone();
            let src = move |bi: usize, out: ArrayViewMut3<'_, Complex64>| fill_divergence(&f, &gx, &gy, bi, out);
            Field4C::from_source(grid, kind, Arc::new(src))
        }
        None => {
            if scheme == DivergenceScheme::Dealiased {
                log::debug!("bare current components: falling back to the collocated divergence");
            }
            let mut total: Option<Array4<Complex64>> = None;
            for (axis, comp) in j.components().into_iter().enumerate() {
                let mut a = comp.materialize()?.as_dense().expect("materialized").clone();
                derivative_along(&mut a, axis, &grid);
                total = Some(match total {
                    None => a,
                    Some(t) => t + a,
                });
            }
            let field = Field4C::dense(grid, total.expect("four components"))?;
            match policy.resolve(grid.n(), DENSE_MAX_N)? {
                StorageKind::Dense => Ok(field),
                StorageKind::Streamed => {
                    let src = move |bi: usize, mut out: ArrayViewMut3<'_, Complex64>| out.assign(&field.slab(bi));
                    Ok(Field4C::streamed(grid, Arc::new(src)))
                }
            }
        }
    }
}

/// `ψ̇ = (−i/ħ)Hψ`. When the potential cannot source purity its
/// contribution to `∂π/∂t` cancels identically, so it is dropped.
fn psi_dot(psi: &Field2C, v: &Potential, p: &PhysParams) -> Result<Array2<Complex64>> {
    same_grid(psi.grid(), v.grid(), "dpi_dt_analytic")?;
    let h = if v.source_vanishes() {
        apply_hamiltonian(psi, &Potential::zero(*psi.grid()), p)?
    } else {
        apply_hamiltonian(psi, v, p)?
    };
    let c = Complex64::new(0.0, -1.0 / p.hbar);
    Ok(h.into_values().mapv(|z| c * z))
}

/// `Ṗ[i, j, J] = ψ̇*[i, j]·ψ[i, J] + ψ*[i, j]·ψ̇[i, J]`, so that
/// `∂π/∂t = Ṗ[i,j,J]·conj(P[I,j,J]) + P[i,j,J]·conj(Ṗ[I,j,J])`.
fn pair_rates(psi: &Array2<Complex64>, dot: &Array2<Complex64>) -> Array3<Complex64> {
    let n = psi.nrows();
    Array3::from_shape_fn((n, n, n), |(i, j, bj)| {
        dot[[i, j]].conj() * psi[[i, bj]] + psi[[i, j]].conj() * dot[[i, bj]]
    })
}

#[inline]
fn rate_at(pairs: &Array3<Complex64>, rates: &Array3<Complex64>, i: usize, j: usize, bi: usize, bj: usize) -> Complex64 {
    rates[[i, j, bj]] * pairs[[bi, j, bj]].conj() + pairs[[i, j, bj]] * rates[[bi, j, bj]].conj()
}

/// `∂π/∂t` by the product rule over the four factors of π.
pub fn dpi_dt_analytic(psi: &Field2C, v: &Potential, p: &PhysParams) -> Result<Field4C> {
    dpi_dt_analytic_with(psi, v, p, StoragePolicy::Auto)
}

pub fn dpi_dt_analytic_with(psi: &Field2C, v: &Potential, p: &PhysParams, policy: StoragePolicy) -> Result<Field4C> {
    let grid = *psi.grid();
    let dot = psi_dot(psi, v, p)?;
    let pairs = Arc::new(pair_products(psi.values()));
    let rates = Arc::new(pair_rates(psi.values(), &dot));
    let kind = policy.resolve(grid.n(), DENSE_MAX_N)?;
    let src = move |bi: usize, mut out: ArrayViewMut3<'_, Complex64>| {
        for ((i, j, bj), o) in out.indexed_iter_mut() {
            *o = rate_at(&pairs, &rates, i, j, bi, bj);
        }
    };
    Field4C::from_source(grid, kind, Arc::new(src))
}

/// `U(x, y, X, Y) = V(x,y) − V(X,y) + V(X,Y) − V(x,Y)`, evaluated lazily.
///
/// Evaluated as `D(j) − D(J)` with `D(q) = V(x, q) − V(X, q)` so the
/// antisymmetries hold bitwise. Separable and constant potentials give
/// exactly zero without touching the values.
#[derive(Debug, Clone)]
pub struct SourceField {
    grid: Grid,
    v: Arc<Array2<f64>>,
    vanishes: bool,
}

impl SourceField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn is_identically_zero(&self) -> bool {
        self.vanishes
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize, bi: usize, bj: usize) -> f64 {
        if self.vanishes {
            return 0.0;
        }
        let v = &self.v;
        (v[[i, j]] - v[[bi, j]]) - (v[[i, bj]] - v[[bi, bj]])
    }

    /// The `(i, j, J)` block at fixed `I`.
    pub fn slab(&self, bi: usize) -> Array3<f64> {
        let n = self.grid.n();
        Array3::from_shape_fn((n, n, n), |(i, j, bj)| self.value(i, j, bi, bj))
    }

    pub fn to_dense(&self) -> Result<Array4<f64>> {
        let n = self.grid.n();
        if n > DENSE_MAX_N {
            return Err(Error::DenseTooLarge { n, limit: DENSE_MAX_N });
        }
        Ok(Array4::from_shape_fn((n, n, n, n), |(i, j, bi, bj)| self.value(i, j, bi, bj)))
    }

    /// `U` as a complex field with zero imaginary part.
    pub fn to_field(&self, policy: StoragePolicy) -> Result<Field4C> {
        let kind = policy.resolve(self.grid.n(), DENSE_MAX_N)?;
        let me = self.clone();
        Field4C::from_index_fn(self.grid, kind, move |i, j, bi, bj| Complex64::new(me.value(i, j, bi, bj), 0.0))
    }
}

pub fn source_u(v: &Potential) -> SourceField {
    SourceField { grid: *v.grid(), v: Arc::new(v.values().clone()), vanishes: v.source_vanishes() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    Free,
    Interacting,
}

/// Residual norms of one continuity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub l2_residual_re: f64,
    pub linf_residual_re: f64,
    pub l2_residual_im: f64,
    pub linf_residual_im: f64,
    /// `max |∂π/∂t|`.
    pub reference_scale: f64,
    pub mode: ResidualMode,
    pub scheme: DivergenceScheme,
    pub n: usize,
}

impl ContinuityReport {
    /// True when the reference scale is too small for a relative measure.
    pub fn is_absolute(&self) -> bool {
        self.reference_scale < REFERENCE_FLOOR
    }

    fn scaled(&self, x: f64) -> f64 {
        if self.is_absolute() {
            x
        } else {
            x / self.reference_scale
        }
    }

    pub fn relative_re(&self) -> f64 {
        self.scaled(self.linf_residual_re)
    }

    pub fn relative_im(&self) -> f64 {
        self.scaled(self.linf_residual_im)
    }

    /// Larger of the two relative (or absolute) L∞ residuals.
    pub fn relative_max(&self) -> f64 {
        self.relative_re().max(self.relative_im())
    }

    /// False when the residual exceeds [`RESOLVED_TOL`] of the reference
    /// scale, i.e. the grid does not resolve the state.
    pub fn resolved(&self) -> bool {
        self.relative_max() <= RESOLVED_TOL
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.relative_max() <= tol
    }
}

struct SlabStats {
    sq_re: f64,
    sq_im: f64,
    max_re: f64,
    max_im: f64,
    max_ref: f64,
}

fn residual_report(
    psi: &Field2C,
    v: &Potential,
    p: &PhysParams,
    mode: ResidualMode,
    scheme: DivergenceScheme,
) -> Result<ContinuityReport> {
    let grid = *psi.grid();
    let n = grid.n();
    let dot = psi_dot(psi, v, p)?;
    let pairs = pair_products(psi.values());
    let rates = pair_rates(psi.values(), &dot);
    let factors = CurrentFactors::new(psi, p);
    let (gx, gy) = factors.brackets(Some(scheme));
    let source = match mode {
        ResidualMode::Interacting => Some(source_u(v)).filter(|s| !s.is_identically_zero()),
        ResidualMode::Free => None,
    };
    let inv_hbar = 1.0 / p.hbar;
    let stats: Vec<SlabStats> = {
        use rayon::prelude::*;
        (0..n)
            .into_par_iter()
            .map(|bi| {
                let mut div = Array3::<Complex64>::zeros((n, n, n));
                fill_divergence(&factors, &gx, &gy, bi, div.view_mut());
                let mut re2 = Vec::with_capacity(n * n * n);
                let mut im2 = Vec::with_capacity(n * n * n);
                let (mut max_re, mut max_im, mut max_ref) = (0.0f64, 0.0f64, 0.0f64);
                for ((i, j, bj), d) in div.indexed_iter() {
                    let rate = rate_at(&pairs, &rates, i, j, bi, bj);
                    let mut r = rate + d;
                    if let Some(s) = &source {
                        let u = s.value(i, j, bi, bj) * inv_hbar;
                        let pi = pairs[[i, j, bj]] * pairs[[bi, j, bj]].conj();
                        r += Complex64::new(u * pi.im, -u * pi.re);
                    }
                    re2.push(r.re * r.re);
                    im2.push(r.im * r.im);
                    max_re = max_re.max(r.re.abs());
                    max_im = max_im.max(r.im.abs());
                    max_ref = max_ref.max(rate.norm());
                }
                SlabStats { sq_re: pairwise_sum_real(&re2), sq_im: pairwise_sum_real(&im2), max_re, max_im, max_ref }
            })
            .collect()
    };
    let h4 = grid.spacing().powi(4);
    let sq_re: Vec<f64> = stats.iter().map(|s| s.sq_re).collect();
    let sq_im: Vec<f64> = stats.iter().map(|s| s.sq_im).collect();
    let fold = |g: fn(&SlabStats) -> f64| stats.iter().map(g).fold(0.0, f64::max);
    Ok(ContinuityReport {
        l2_residual_re: (pairwise_sum_real(&sq_re) * h4).sqrt(),
        linf_residual_re: fold(|s| s.max_re),
        l2_residual_im: (pairwise_sum_real(&sq_im) * h4).sqrt(),
        linf_residual_im: fold(|s| s.max_im),
        reference_scale: fold(|s| s.max_ref),
        mode,
        scheme,
        n,
    })
}

/// Free continuity residual `∂π/∂t + ∇·J` (V = 0).
pub fn residual_free(psi: &Field2C, p: &PhysParams) -> Result<ContinuityReport> {
    residual_free_with(psi, p, DivergenceScheme::default())
}

pub fn residual_free_with(psi: &Field2C, p: &PhysParams, scheme: DivergenceScheme) -> Result<ContinuityReport> {
    residual_report(psi, &Potential::zero(*psi.grid()), p, ResidualMode::Free, scheme)
}

/// Interacting residual `∂π/∂t + ∇·J − (i/ħ)U·π`, i.e.
/// `Re: ∂ₜπ_R + ∇·J_R + U·π_I/ħ` and `Im: ∂ₜπ_I + ∇·J_I − U·π_R/ħ`.
pub fn residual_interacting(psi: &Field2C, v: &Potential, p: &PhysParams) -> Result<ContinuityReport> {
    residual_interacting_with(psi, v, p, DivergenceScheme::default())
}

pub fn residual_interacting_with(
    psi: &Field2C,
    v: &Potential,
    p: &PhysParams,
    scheme: DivergenceScheme,
) -> Result<ContinuityReport> {
    residual_report(psi, v, p, ResidualMode::Interacting, scheme)
}

/// The full residual as a field, for inspection and storage tests.
pub fn residual_field(psi: &Field2C, v: &Potential, p: &PhysParams, policy: StoragePolicy) -> Result<Field4C> {
    let rate = dpi_dt_analytic_with(psi, v, p, policy)?;
    let div = divergence4_with(&current_components_with(psi, p, policy)?, DivergenceScheme::default(), policy)?;
    let free = rate.add(&div)?;
    let source = source_u(v);
    if source.is_identically_zero() {
        return Ok(free);
    }
    let pi = density_from_pairs(*psi.grid(), Arc::new(pair_products(psi.values())), policy)?;
    let c = Complex64::new(0.0, -1.0 / p.hbar);
    let upi = pi.zip_with(&source.to_field(policy)?, move |a, u| c * u.re * a)?;
    free.add(&upi)
}

/// Rate of change of the purity by two routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurityRate {
    /// `(Π(ψ after +dt) − Π(ψ after −dt)) / 2dt` with split steps.
    pub lhs: f64,
    /// `−(1/ħ) ∫ π_I U`.
    pub rhs: f64,
}

impl PurityRate {
    /// `|lhs − rhs| / max(|lhs|, 1e-12)`.
    pub fn mismatch(&self) -> f64 {
        (self.lhs - self.rhs).abs() / self.lhs.abs().max(1e-12)
    }
}

/// `−(1/ħ) ∫ π_I U`.
pub fn purity_source_integral(psi: &Field2C, v: &Potential, p: &PhysParams) -> Result<f64> {
    same_grid(psi.grid(), v.grid(), "purity_source_integral")?;
    let source = source_u(v);
    if source.is_identically_zero() {
        return Ok(0.0);
    }
    let grid = *psi.grid();
    let n = grid.n();
    let pairs = pair_products(psi.values());
    let partial: Vec<f64> = {
        use rayon::prelude::*;
        (0..n)
            .into_par_iter()
            .map(|bi| {
                let mut terms = Vec::with_capacity(n * n * n);
                for i in 0..n {
                    for j in 0..n {
                        for bj in 0..n {
                            let pi = pairs[[i, j, bj]] * pairs[[bi, j, bj]].conj();
                            terms.push(pi.im * source.value(i, j, bi, bj));
                        }
                    }
                }
                pairwise_sum_real(&terms)
            })
            .collect()
    };
    Ok(-pairwise_sum_real(&partial) * grid.spacing().powi(4) / p.hbar)
}

pub fn purity_rate_check(psi: &Field2C, v: &Potential, p: &PhysParams, dt: f64) -> Result<PurityRate> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive (got {dt})")));
    }
    let forward = SplitStepper::new(v, p, dt)?.step(psi)?;
    let backward = SplitStepper::new(v, p, -dt)?.step(psi)?;
    let lhs = (purity(&forward) - purity(&backward)) / (2.0 * dt);
    Ok(PurityRate { lhs, rhs: purity_source_integral(psi, v, p)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::integrate4;
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    fn double_gaussian(grid: Grid, a: f64, b: f64) -> Field2C {
        Field2C::from_fn(grid, |x, y| {
            Complex64::new((-(x + y).powi(2) / (4.0 * b * b) - (x - y).powi(2) / (4.0 * a * a)).exp(), 0.0)
        })
        .unwrap()
        .normalized()
        .unwrap()
    }

    fn moving(grid: Grid) -> Field2C {
        Field2C::from_fn(grid, |x, y| {
            let amp = (-(x * x + y * y) / 2.4 - 0.3 * x * y).exp();
            Complex64::from_polar(amp, 0.8 * x - 0.5 * y + 0.1 * x * y)
        })
        .unwrap()
        .normalized()
        .unwrap()
    }

    fn max_abs_diff(a: &Field4C, b: &Field4C) -> f64 {
        a.linf_distance(b).unwrap()
    }

    #[test]
    fn real_state_currents_are_imaginary() {
        let g = make_grid(12, 10.0).unwrap();
        let psi = double_gaussian(g, 1.0, 1.6);
        let j = current_components(&psi, &PhysParams::default());
        for c in j.components() {
            assert!(c.linf_re() <= 1e-12, "{}", c.linf_re());
        }
    }

    #[test]
    fn plane_wave_currents() {
        let g = make_grid(16, 8.0).unwrap();
        let (k1, k2) = (2.0 * PI * 2.0 / 8.0, 2.0 * PI / 8.0);
        let amp = 1.0 / 8.0;
        let psi = Field2C::from_fn(g, |x, y| Complex64::from_polar(amp, k1 * x + k2 * y)).unwrap();
        let p = PhysParams::new(1.0, 1.5, 0.7).unwrap();
        let j = current_components(&psi, &p);
        let a4 = amp.powi(4);
        let expect = [k1 / p.mass_x * a4, k2 / p.mass_y * a4, k1 / p.mass_x * a4, k2 / p.mass_y * a4];
        for (c, e) in j.components().into_iter().zip(expect) {
            let want = Field4C::constant(g, StorageKind::Dense, Complex64::new(e, 0.0)).unwrap();
            assert!(max_abs_diff(c, &want) < 1e-14 * a4.max(1.0));
        }
        let div = divergence4(&j).unwrap();
        assert!(div.linf() < 1e-14);
    }

    #[test]
    fn global_phase_leaves_currents_unchanged() {
        let g = make_grid(10, 8.0).unwrap();
        let psi = moving(g);
        let rotated = psi.scale(Complex64::from_polar(1.0, 1.234));
        let p = PhysParams::default();
        let a = current_components(&psi, &p);
        let b = current_components(&rotated, &p);
        for (x, y) in a.components().into_iter().zip(b.components()) {
            assert!(max_abs_diff(x, y) < 1e-14);
        }
    }

    #[test]
    fn big_components_mirror_small_ones() {
        let g = make_grid(8, 7.0).unwrap();
        let psi = moving(g);
        let j = current_components(&psi, &PhysParams::new(1.0, 1.0, 2.0).unwrap());
        let (x, bx) = (j.x.as_dense().unwrap(), j.big_x.as_dense().unwrap());
        let (y, by) = (j.y.as_dense().unwrap(), j.big_y.as_dense().unwrap());
        for ((i, jj, bi, bj), v) in bx.indexed_iter() {
            assert!((v - x[[bi, bj, i, jj]]).norm() < 1e-15);
            assert!((by[[i, jj, bi, bj]] - y[[bi, bj, i, jj]]).norm() < 1e-15);
        }
    }

    #[test]
    fn constant_current_has_no_divergence() {
        let g = make_grid(8, 4.0).unwrap();
        let c = Field4C::constant(g, StorageKind::Dense, Complex64::new(0.3, -2.0)).unwrap();
        let j = CurrentField::from_components(c.clone(), c.clone(), c.clone(), c).unwrap();
        assert!(!j.is_factored());
        assert!(divergence4(&j).unwrap().linf() < 1e-13);
    }

    #[test]
    fn collocated_factorization_matches_component_derivatives() {
        let g = make_grid(10, 9.0).unwrap();
        let psi = moving(g);
        let p = PhysParams::default();
        let j = current_components(&psi, &p);
        let bare = CurrentField::from_components(j.x.clone(), j.y.clone(), j.big_x.clone(), j.big_y.clone()).unwrap();
        let generic = divergence4_with(&bare, DivergenceScheme::Collocated, StoragePolicy::Dense).unwrap();
        let factored = divergence4_with(&j, DivergenceScheme::Collocated, StoragePolicy::Dense).unwrap();
        assert!(max_abs_diff(&generic, &factored) < 1e-13 * factored.linf());
    }

    #[test]
    fn divergence_integrates_to_zero() {
        let g = make_grid(12, 9.0).unwrap();
        let psi = moving(g);
        let j = current_components(&psi, &PhysParams::default());
        for scheme in [DivergenceScheme::Dealiased, DivergenceScheme::Collocated] {
            let d = divergence4_with(&j, scheme, StoragePolicy::Auto).unwrap();
            assert!(integrate4(&d).norm() < 1e-12);
        }
    }

    #[test]
    fn dense_and_streamed_agree() {
        let g = make_grid(10, 9.0).unwrap();
        let psi = moving(g);
        let p = PhysParams::default();
        let v = Potential::bilinear(g, 0.5).unwrap();
        let d = residual_field(&psi, &v, &p, StoragePolicy::Dense).unwrap();
        let s = residual_field(&psi, &v, &p, StoragePolicy::Streamed).unwrap();
        assert_eq!(s.storage_kind(), StorageKind::Streamed);
        let scale = d.linf().max(1e-300);
        assert!(max_abs_diff(&d, &s) <= 1e-13 * scale);
        assert_eq!(d.sum(), s.sum());
    }

    #[test]
    fn stationary_state_has_no_rate() {
        let g = make_grid(32, 16.0).unwrap();
        let v = Potential::separable(g, |x| 0.5 * x * x, |y| 0.5 * y * y).unwrap();
        let psi = Field2C::from_fn(g, |x, y| Complex64::new((-(x * x + y * y) / 2.0).exp(), 0.0))
            .unwrap()
            .normalized()
            .unwrap();
        let rate = dpi_dt_analytic(&psi, &v, &PhysParams::default()).unwrap();
        assert!(rate.linf() < 1e-10, "{}", rate.linf());
    }

    #[test]
    fn constant_potential_rate_is_free_rate() {
        let g = make_grid(10, 8.0).unwrap();
        let psi = moving(g);
        let p = PhysParams::default();
        let free = dpi_dt_analytic(&psi, &Potential::zero(g), &p).unwrap();
        let shifted = dpi_dt_analytic(&psi, &Potential::constant(g, 3.7).unwrap(), &p).unwrap();
        assert_eq!(max_abs_diff(&free, &shifted), 0.0);
        assert!(integrate4(&free).norm() < 1e-11);
    }

    #[test]
    fn source_identities() {
        let g = make_grid(8, 6.0).unwrap();
        let sep = source_u(&Potential::separable(g, |x| x.sin() + x * x, |y| y.cos()).unwrap());
        assert!(sep.is_identically_zero());
        assert!(sep.to_dense().unwrap().iter().all(|&u| u == 0.0));
        let kappa = 0.5;
        let bil = source_u(&Potential::bilinear(g, kappa).unwrap());
        let c = g.coords();
        let dense = bil.to_dense().unwrap();
        for ((i, j, bi, bj), &u) in dense.indexed_iter() {
            let want = kappa * (c[i] - c[bi]) * (c[j] - c[bj]);
            assert!((u - want).abs() <= 1e-14 * want.abs().max(1.0));
            assert_eq!(dense[[bi, j, i, bj]], -u);
            assert_eq!(dense[[i, bj, bi, j]], -u);
            assert_eq!(dense[[bi, bj, i, j]], u);
        }
    }

    #[test]
    fn free_residual_is_small_on_resolved_state() {
        let g = make_grid(24, 14.0).unwrap();
        let r = residual_free(&double_gaussian(g, 1.0, 1.5), &PhysParams::default()).unwrap();
        assert_eq!(r.mode, ResidualMode::Free);
        assert!(r.relative_max() < 1e-6, "{r:?}");
        assert!(r.resolved());
    }

    #[test]
    fn under_resolved_state_is_flagged() {
        let g = make_grid(16, 16.0).unwrap();
        let psi = Field2C::from_fn(g, |x, y| {
            Complex64::from_polar((-(x * x + y * y) / 0.5 - x * y).exp(), 2.5 * x * y)
        })
        .unwrap()
        .normalized()
        .unwrap();
        let r = residual_free(&psi, &PhysParams::default()).unwrap();
        assert!(!r.resolved(), "{r:?}");
    }

    #[test]
    fn separable_interacting_matches_free() {
        let g = make_grid(16, 12.0).unwrap();
        let psi = moving(g);
        let p = PhysParams::default();
        let v = Potential::separable(g, |x| 0.3 * x * x, |y| 0.2 * y).unwrap();
        let a = residual_free(&psi, &p).unwrap();
        let b = residual_interacting(&psi, &v, &p).unwrap();
        assert_eq!(a.linf_residual_re, b.linf_residual_re);
        assert_eq!(a.linf_residual_im, b.linf_residual_im);
        assert_eq!(a.l2_residual_re, b.l2_residual_re);
        assert_eq!(a.reference_scale, b.reference_scale);
    }

    #[test]
    fn interacting_residual_and_sign_flip() {
        let g = make_grid(40, 16.0).unwrap();
        let psi = moving(g);
        let p = PhysParams::default();
        let v = Potential::bilinear(g, 0.5).unwrap();
        let a = residual_interacting(&psi, &v, &p).unwrap();
        let b = residual_interacting(&psi, &v.scaled(-1.0), &p).unwrap();
        assert!(a.relative_max() < 1e-6, "{a:?}");
        assert!(b.relative_max() < 1e-6, "{b:?}");
        // the source must actually matter: dropping it breaks the balance
        let wrong = residual_report(&psi, &v, &p, ResidualMode::Free, DivergenceScheme::Dealiased).unwrap();
        assert!(wrong.relative_max() > 1e-3);
        let s1 = purity_source_integral(&psi, &v, &p).unwrap();
        let s2 = purity_source_integral(&psi, &v.scaled(-1.0), &p).unwrap();
        assert!((s1 + s2).abs() <= 1e-14 * s1.abs().max(1e-300));
    }

    #[test]
    fn separable_rate_vanishes() {
        let g = make_grid(16, 12.0).unwrap();
        let psi = moving(g);
        let v = Potential::separable(g, |x| 0.5 * x * x, |y| 0.1 * y * y).unwrap();
        let r = purity_rate_check(&psi, &v, &PhysParams::default(), 1e-3).unwrap();
        assert_eq!(r.rhs, 0.0);
        assert!(r.lhs.abs() < 1e-8);
    }

    #[test]
    fn bilinear_rate_matches_source() {
        let g = make_grid(24, 14.0).unwrap();
        let psi = moving(g);
        let v = Potential::bilinear(g, 0.5).unwrap();
        let r = purity_rate_check(&psi, &v, &PhysParams::default(), 1e-3).unwrap();
        assert!(r.lhs.abs() > 1e-4);
        assert!(r.mismatch() < 1e-4, "{r:?}");
    }

    #[test]
    fn residual_field_matches_report() {
        let g = make_grid(12, 10.0).unwrap();
        let psi = moving(g);
        let p = PhysParams::default();
        let v = Potential::bilinear(g, 0.5).unwrap();
        let field = residual_field(&psi, &v, &p, StoragePolicy::Dense).unwrap();
        let report = residual_interacting(&psi, &v, &p).unwrap();
        assert!((field.linf_re() - report.linf_residual_re).abs() <= 1e-14 * report.reference_scale);
        assert!((field.linf_im() - report.linf_residual_im).abs() <= 1e-14 * report.reference_scale);
    }
}
