//! Time evolution of `ψ(x, y)` under
//! `H = -(ħ²/2m)∂²ₓ - (ħ²/2M)∂²ᵧ + V(x, y)`.
//!
//! [`SplitStepper`] is the production integrator (second-order Strang
//! splitting, kinetic factor applied in momentum space). [`CrankNicolson`]
//! is a dense reference built from the same discrete Hamiltonian and is
//! only meant for small grids.

use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{same_grid, Field2C};
use crate::grid::{Grid, PhysParams};
use crate::spectral::{fft2, ifft2, second_derivative_multiplier, spectral_laplacian, Axis};

/// Largest grid accepted by the dense Crank–Nicolson reference.
pub const CN_MAX_N: usize = 24;

/// Norm drift that aborts a trajectory.
pub const NORM_DRIFT_LIMIT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    None,
    Separable,
    Bilinear,
    GaussianCoupling,
    Custom,
}

/// Real, time-independent potential `V(x, y)` sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    grid: Grid,
    values: Array2<f64>,
    kind: PotentialKind,
}

impl Potential {
    pub fn new(grid: Grid, values: Array2<f64>, kind: PotentialKind) -> Result<Self> {
        let n = grid.n();
        if values.dim() != (n, n) {
            return Err(Error::GridMismatch(format!(
                "potential of shape {:?} on a grid with n = {n}",
                values.dim()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("Potential::new"));
        }
        Ok(Potential { grid, values, kind })
    }

    pub fn zero(grid: Grid) -> Self {
        Potential { grid, values: Array2::zeros((grid.n(), grid.n())), kind: PotentialKind::None }
    }

    /// `V(x, y) = f(x) + g(y)`.
    pub fn separable(grid: Grid, f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> Result<Self> {
        let c = grid.coords();
        let fx: Vec<f64> = c.iter().map(|&x| f(x)).collect();
        let gy: Vec<f64> = c.iter().map(|&y| g(y)).collect();
        let values = Array2::from_shape_fn((grid.n(), grid.n()), |(i, j)| fx[i] + gy[j]);
        Potential::new(grid, values, PotentialKind::Separable)
    }

    pub fn constant(grid: Grid, c: f64) -> Result<Self> {
        Potential::separable(grid, move |_| c, |_| 0.0)
    }

    /// `V(x, y) = κ·x·y`.
    pub fn bilinear(grid: Grid, kappa: f64) -> Result<Self> {
        let c = grid.coords();
        let values = Array2::from_shape_fn((grid.n(), grid.n()), |(i, j)| kappa * c[i] * c[j]);
        Potential::new(grid, values, PotentialKind::Bilinear)
    }

    /// `V(x, y) = v0·exp(-(x - y)²/width²)`.
    pub fn gaussian_coupling(grid: Grid, v0: f64, width: f64) -> Result<Self> {
        if width.is_nan() || width <= 0.0 {
            return Err(Error::InvalidArgument(format!("coupling width must be positive (got {width})")));
        }
        let c = grid.coords();
        let values = Array2::from_shape_fn((grid.n(), grid.n()), |(i, j)| {
            let d = c[i] - c[j];
            v0 * (-d * d / (width * width)).exp()
        });
        Potential::new(grid, values, PotentialKind::GaussianCoupling)
    }

    pub fn custom(grid: Grid, values: Array2<f64>) -> Result<Self> {
        Potential::new(grid, values, PotentialKind::Custom)
    }

    /// `c·V`, keeping the kind tag.
    pub fn scaled(&self, c: f64) -> Self {
        Potential { grid: self.grid, values: self.values.mapv(|v| c * v), kind: self.kind }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    /// True when the kind guarantees a vanishing interaction source.
    pub fn source_vanishes(&self) -> bool {
        matches!(self.kind, PotentialKind::None | PotentialKind::Separable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSpec {
    pub dt: f64,
    pub steps: usize,
    pub record_every: usize,
}

impl EvolutionSpec {
    pub fn new(dt: f64, steps: usize, record_every: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("evolution.dt must be positive (got {dt})")));
        }
        if record_every == 0 {
            return Err(Error::InvalidArgument("evolution.record_every must be at least 1".into()));
        }
        if steps > 0 && record_every > steps {
            return Err(Error::InvalidArgument(format!(
                "evolution.record_every ({record_every}) exceeds evolution.steps ({steps})"
            )));
        }
        Ok(EvolutionSpec { dt, steps, record_every })
    }

    pub fn total_time(&self) -> f64 {
        self.dt * self.steps as f64
    }
}

/// `Hψ` with spectral Laplacians.
pub fn apply_hamiltonian(psi: &Field2C, v: &Potential, p: &PhysParams) -> Result<Field2C> {
    same_grid(psi.grid(), v.grid(), "apply_hamiltonian")?;
    let dxx = spectral_laplacian(psi, Axis::First);
    let dyy = spectral_laplacian(psi, Axis::Second);
    let cx = -p.hbar * p.hbar / (2.0 * p.mass_x);
    let cy = -p.hbar * p.hbar / (2.0 * p.mass_y);
    let mut out = Array2::<Complex64>::zeros(psi.values().dim());
    ndarray::Zip::from(&mut out)
        .and(psi.values())
        .and(dxx.values())
        .and(dyy.values())
        .and(v.values())
        .for_each(|o, &s, &a, &b, &vv| *o = a * cx + b * cy + s * vv);
    Field2C::new(*psi.grid(), out)
}

/// Kinetic energy `ħ²kₓ²/2m + ħ²k_y²/2M` on the FFT-ordered momentum grid.
fn kinetic_symbol(grid: &Grid, p: &PhysParams) -> Array2<f64> {
    let k2 = second_derivative_multiplier(grid.n(), grid.length());
    let ax = p.hbar * p.hbar / (2.0 * p.mass_x);
    let ay = p.hbar * p.hbar / (2.0 * p.mass_y);
    Array2::from_shape_fn((grid.n(), grid.n()), |(i, j)| -(ax * k2[i].re + ay * k2[j].re))
}

/// A fixed-step propagator usable by [`evolve_with`].
pub trait Propagate {
    fn dt(&self) -> f64;
    fn step(&self, psi: &Field2C) -> Result<Field2C>;
}

/// Precomputed Strang splitting factors for a fixed `(V, dt)`.
#[derive(Debug, Clone)]
pub struct SplitStepper {
    grid: Grid,
    dt: f64,
    half_potential: Array2<Complex64>,
    kinetic: Array2<Complex64>,
}

impl SplitStepper {
    pub fn new(v: &Potential, p: &PhysParams, dt: f64) -> Result<Self> {
        if !dt.is_finite() || dt == 0.0 {
            return Err(Error::InvalidArgument(format!("time step must be finite and nonzero (got {dt})")));
        }
        let grid = *v.grid();
        let half_potential = v.values().mapv(|vv| Complex64::from_polar(1.0, -vv * dt / (2.0 * p.hbar)));
        let kinetic = kinetic_symbol(&grid, p).mapv(|t| Complex64::from_polar(1.0, -t * dt / p.hbar));
        Ok(SplitStepper { grid, dt, half_potential, kinetic })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, psi: &Field2C) -> Result<Field2C> {
        Propagate::step(self, psi)
    }
}

impl Propagate for SplitStepper {
    fn dt(&self) -> f64 {
        self.dt
    }

    fn step(&self, psi: &Field2C) -> Result<Field2C> {
        same_grid(psi.grid(), &self.grid, "SplitStepper::step")?;
        let mut work = psi.values() * &self.half_potential;
        work = fft2(&work);
        work *= &self.kinetic;
        work = ifft2(&work);
        work *= &self.half_potential;
        Field2C::new(self.grid, work)
    }
}

/// One Strang step `e^{-iV dt/2ħ} e^{-iT dt/ħ} e^{-iV dt/2ħ} ψ`. Negative
/// `dt` runs backwards in time.
pub fn step_split(psi: &Field2C, v: &Potential, p: &PhysParams, dt: f64) -> Result<Field2C> {
    same_grid(psi.grid(), v.grid(), "step_split")?;
    SplitStepper::new(v, p, dt)?.step(psi)
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub final_state: Field2C,
    pub final_time: f64,
    pub steps_taken: usize,
    pub records: usize,
    pub max_norm_drift: f64,
}

/// Runs `spec.steps` split steps, handing `(step, time, ψ)` to `observer`
/// at step 0 and every `record_every` steps after that.
pub fn evolve<F>(psi0: &Field2C, v: &Potential, p: &PhysParams, spec: &EvolutionSpec, observer: F) -> Result<Trajectory>
where
    F: FnMut(usize, f64, &Field2C) -> Result<()>,
{
    same_grid(psi0.grid(), v.grid(), "evolve")?;
    let stepper = SplitStepper::new(v, p, spec.dt)?;
    evolve_with(psi0, &stepper, spec, observer)
}

/// [`evolve`] with an arbitrary stepper; `spec.dt` is informational and the
/// stepper's own `dt` sets the clock.
pub fn evolve_with<S, F>(psi0: &Field2C, stepper: &S, spec: &EvolutionSpec, mut observer: F) -> Result<Trajectory>
where
    S: Propagate + ?Sized,
    F: FnMut(usize, f64, &Field2C) -> Result<()>,
{
    let dt = stepper.dt();
    let initial = psi0.norm();
    let mut psi = psi0.clone();
    let mut records = 0;
    let mut max_drift: f64 = 0.0;
    observer(0, 0.0, &psi)?;
    records += 1;
    for step in 1..=spec.steps {
        psi = stepper.step(&psi)?;
        let norm = psi.norm();
        let drift = (norm - initial).abs();
        max_drift = max_drift.max(drift);
        if drift > NORM_DRIFT_LIMIT {
            return Err(Error::NormDrift { step, norm, initial });
        }
        if step % spec.record_every == 0 {
            observer(step, step as f64 * dt, &psi)?;
            records += 1;
        }
    }
    Ok(Trajectory {
        final_state: psi,
        final_time: spec.steps as f64 * dt,
        steps_taken: spec.steps,
        records,
        max_norm_drift: max_drift,
    })
}

/// Dense matrix of the spectral second derivative on `n` points.
fn second_derivative_matrix(grid: &Grid) -> DMatrix<f64> {
    let n = grid.n();
    let mult = second_derivative_multiplier(n, grid.length());
    let mut m = DMatrix::<f64>::zeros(n, n);
    for c in 0..n {
        let mut e = ndarray::Array1::<Complex64>::zeros(n);
        e[c] = Complex64::new(1.0, 0.0);
        crate::spectral::apply_multiplier(&mut e, 0, &mult);
        for r in 0..n {
            m[(r, c)] = e[r].re;
        }
    }
    m
}

/// Discrete Hamiltonian as an `n² × n²` matrix acting on row-major `ψ[i, j]`.
pub fn dense_hamiltonian(v: &Potential, p: &PhysParams) -> Result<DMatrix<Complex64>> {
    let grid = *v.grid();
    let n = grid.n();
    if n > CN_MAX_N {
        return Err(Error::InvalidArgument(format!(
            "dense Hamiltonian refused for n = {n} (limit {CN_MAX_N})"
        )));
    }
    let d2 = second_derivative_matrix(&grid);
    let cx = -p.hbar * p.hbar / (2.0 * p.mass_x);
    let cy = -p.hbar * p.hbar / (2.0 * p.mass_y);
    let dim = n * n;
    let mut h = DMatrix::<Complex64>::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for k in 0..n {
                h[(row, k * n + j)] += Complex64::new(cx * d2[(i, k)], 0.0);
                h[(row, i * n + k)] += Complex64::new(cy * d2[(j, k)], 0.0);
            }
            h[(row, row)] += Complex64::new(v.values()[[i, j]], 0.0);
        }
    }
    Ok(h)
}

/// Crank–Nicolson propagator `(1 + iH dt/2ħ)⁻¹ (1 − iH dt/2ħ)`, formed once.
#[derive(Debug, Clone)]
pub struct CrankNicolson {
    grid: Grid,
    dt: f64,
    propagator: DMatrix<Complex64>,
}

impl CrankNicolson {
    pub fn new(v: &Potential, p: &PhysParams, dt: f64) -> Result<Self> {
        let grid = *v.grid();
        let h = dense_hamiltonian(v, p)?;
        let dim = h.nrows();
        let a = h * Complex64::new(0.0, dt / (2.0 * p.hbar));
        let id = DMatrix::<Complex64>::identity(dim, dim);
        let lhs = &id + &a;
        let rhs = &id - &a;
        let propagator = lhs
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidArgument("Crank–Nicolson system is singular".into()))?;
        Ok(CrankNicolson { grid, dt, propagator })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, psi: &Field2C) -> Result<Field2C> {
        Propagate::step(self, psi)
    }
}

impl Propagate for CrankNicolson {
    fn dt(&self) -> f64 {
        self.dt
    }

    fn step(&self, psi: &Field2C) -> Result<Field2C> {
        same_grid(psi.grid(), &self.grid, "CrankNicolson::step")?;
        let n = self.grid.n();
        let flat = nalgebra::DVector::from_iterator(n * n, psi.values().iter().copied());
        let next = &self.propagator * flat;
        let values = Array2::from_shape_vec((n, n), next.iter().copied().collect())
            .expect("propagator preserves the state dimension");
        Field2C::new(self.grid, values)
    }
}

/// One Crank–Nicolson step with the dense discretized Hamiltonian (n ≤ 24).
pub fn cn_reference_step(psi: &Field2C, v: &Potential, p: &PhysParams, dt: f64) -> Result<Field2C> {
    same_grid(psi.grid(), v.grid(), "cn_reference_step")?;
    CrankNicolson::new(v, p, dt)?.step(psi)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::field::integrate2;
    use crate::grid::make_grid;

    fn gaussian(grid: Grid, sigma: f64, x0: f64, y0: f64, kx: f64) -> Field2C {
        Field2C::from_fn(grid, |x, y| {
            let r = -((x - x0).powi(2) + (y - y0).powi(2)) / (4.0 * sigma * sigma);
            Complex64::from_polar(r.exp(), kx * x)
        })
        .unwrap()
        .normalized()
        .unwrap()
    }

    #[test]
    fn plane_wave_energy() {
        let g = make_grid(16, 2.0 * PI).unwrap();
        let p = PhysParams::new(1.3, 0.7, 2.0).unwrap();
        let (k1, k2) = (2.0, -3.0);
        let psi = Field2C::from_fn(g, |x, y| Complex64::from_polar(1.0, k1 * x + k2 * y)).unwrap();
        let h = apply_hamiltonian(&psi, &Potential::zero(g), &p).unwrap();
        let e = p.hbar.powi(2) * (k1 * k1 / (2.0 * p.mass_x) + k2 * k2 / (2.0 * p.mass_y));
        assert!(h.linf_distance(&psi.scale(Complex64::new(e, 0.0))).unwrap() < 1e-12 * e);
    }

    #[test]
    fn constant_potential_shifts_energy() {
        let g = make_grid(16, 8.0).unwrap();
        let p = PhysParams::default();
        let psi = gaussian(g, 0.7, 0.3, -0.2, 1.0);
        let h0 = apply_hamiltonian(&psi, &Potential::zero(g), &p).unwrap();
        let hc = apply_hamiltonian(&psi, &Potential::constant(g, 2.5).unwrap(), &p).unwrap();
        let shifted = Field2C::new(g, h0.values() + &psi.values().mapv(|z| z * 2.5)).unwrap();
        assert!(hc.linf_distance(&shifted).unwrap() < 1e-13);
    }

    #[test]
    fn harmonic_ground_state_energy() {
        // Oracle: separable oscillator ground state, E0 = ħω/2 per axis.
        let g = make_grid(48, 16.0).unwrap();
        let p = PhysParams::default();
        let (wx, wy) = (1.0, 1.5);
        let v = Potential::separable(g, |x| 0.5 * wx * wx * x * x, |y| 0.5 * wy * wy * y * y).unwrap();
        let psi = Field2C::from_fn(g, |x, y| Complex64::new((-(wx * x * x + wy * y * y) / 2.0).exp(), 0.0))
            .unwrap()
            .normalized()
            .unwrap();
        let h = apply_hamiltonian(&psi, &v, &p).unwrap();
        let e0 = 0.5 * (wx + wy);
        let projected = integrate2(&Field2C::new(g, psi.values().mapv(|z| z.conj()) * h.values()).unwrap());
        assert!((projected.re - e0).abs() < 1e-10);
        assert!(h.linf_distance(&psi.scale(Complex64::new(e0, 0.0))).unwrap() <= 1e-8);
    }

    #[test]
    fn split_step_phase_rotation_and_norm() {
        let g = make_grid(16, 2.0 * PI).unwrap();
        let p = PhysParams::default();
        let psi = Field2C::from_fn(g, |x, y| Complex64::from_polar(1.0, 2.0 * x - y))
            .unwrap()
            .normalized()
            .unwrap();
        let dt = 0.01;
        let next = step_split(&psi, &Potential::zero(g), &p, dt).unwrap();
        let e = 0.5 * 4.0 + 0.5;
        let expect = psi.scale(Complex64::from_polar(1.0, -e * dt));
        assert!(next.linf_distance(&expect).unwrap() < 1e-13);

        let v = Potential::bilinear(g, 0.5).unwrap();
        let psi = gaussian(make_grid(16, 2.0 * PI).unwrap(), 0.6, 0.0, 0.0, 1.0);
        let next = step_split(&psi, &v, &p, 0.05).unwrap();
        assert!((next.norm() - psi.norm()).abs() < 1e-13);
    }

    #[test]
    fn time_reversal_restores_state() {
        let g = make_grid(32, 12.0).unwrap();
        let p = PhysParams::default();
        let v = Potential::gaussian_coupling(g, 1.0, 2.0).unwrap();
        let psi = gaussian(g, 0.8, 0.5, -0.5, 0.7);
        let fwd = step_split(&psi, &v, &p, 0.01).unwrap();
        let back = step_split(&fwd, &v, &p, -0.01).unwrap();
        assert!(back.linf_distance(&psi).unwrap() < 1e-12);
    }

    #[test]
    fn coherent_state_follows_classical_orbit() {
        // Oracle: x(t) = x0 cos ωt for a displaced ground state with ω = 1.
        // For a quadratic Hamiltonian the V-T-V split maps ⟨x⟩, ⟨p⟩ exactly by
        // the kick-drift-kick Verlet step, whose phase lags the true orbit by
        // ω³dt²t/24. That lag, not the spatial grid, sets the deviation.
        let g = make_grid(48, 16.0).unwrap();
        let p = PhysParams::default();
        let v = Potential::separable(g, |x| 0.5 * x * x, |y| 0.5 * y * y).unwrap();
        let x0 = 1.5;
        let psi0 = Field2C::from_fn(g, |x, y| Complex64::new((-((x - x0).powi(2) + y * y) / 2.0).exp(), 0.0))
            .unwrap()
            .normalized()
            .unwrap();
        let period = 2.0 * PI;
        let steps = 1000;
        let dt = period / steps as f64;
        let record = 50;
        let spec = EvolutionSpec::new(dt, steps, record).unwrap();
        let coords = g.coords();
        let mut verlet = Vec::new();
        let (mut xc, mut pc) = (x0, 0.0);
        for s in 0..=steps {
            if s % record == 0 {
                verlet.push(xc);
            }
            pc -= 0.5 * dt * xc;
            xc += dt * pc;
            pc -= 0.5 * dt * xc;
        }
        let mut worst_classical: f64 = 0.0;
        let mut worst_verlet: f64 = 0.0;
        evolve(&psi0, &v, &p, &spec, |step, t, psi| {
            let h2 = g.spacing().powi(2);
            let mean: f64 = psi
                .values()
                .indexed_iter()
                .map(|((i, _), z)| coords[i] * z.norm_sqr() * h2)
                .sum();
            worst_classical = worst_classical.max((mean - x0 * t.cos()).abs());
            worst_verlet = worst_verlet.max((mean - verlet[step / record]).abs());
            Ok(())
        })
        .unwrap();
        assert!(worst_verlet < 1e-10, "deviation from the Verlet map {worst_verlet}");
        let lag_bound = x0 * dt * dt * period / 24.0;
        assert!(worst_classical <= 1.05 * lag_bound, "center deviation {worst_classical} vs {lag_bound}");
        assert!(worst_classical > 0.5 * lag_bound);
    }

    #[test]
    fn free_gaussian_spreading() {
        // Oracle: σ(t)² = σ0² + (ħt / 2mσ0)² for the |ψ|² standard deviation.
        let g = make_grid(64, 30.0).unwrap();
        let p = PhysParams::new(1.0, 1.0, 2.0).unwrap();
        let s0 = 1.0;
        let psi0 = gaussian(g, s0, 0.0, 0.0, 0.0);
        let spec = EvolutionSpec::new(1e-3, 1000, 250).unwrap();
        let coords = g.coords();
        let mut worst: f64 = 0.0;
        evolve(&psi0, &Potential::zero(g), &p, &spec, |_, t, psi| {
            let h2 = g.spacing().powi(2);
            let (mut vx, mut vy) = (0.0, 0.0);
            for ((i, j), z) in psi.values().indexed_iter() {
                vx += coords[i].powi(2) * z.norm_sqr() * h2;
                vy += coords[j].powi(2) * z.norm_sqr() * h2;
            }
            let ex = s0 * s0 + (p.hbar * t / (2.0 * p.mass_x * s0)).powi(2);
            let ey = s0 * s0 + (p.hbar * t / (2.0 * p.mass_y * s0)).powi(2);
            worst = worst.max(((vx - ex) / ex).abs()).max(((vy - ey) / ey).abs());
            Ok(())
        })
        .unwrap();
        assert!(worst <= 1e-6, "relative width error {worst}");
    }

    #[test]
    fn evolve_with_zero_steps_records_initial_state() {
        let g = make_grid(8, 4.0).unwrap();
        let psi = gaussian(g, 0.5, 0.0, 0.0, 0.0);
        let spec = EvolutionSpec { dt: 1e-3, steps: 0, record_every: 1 };
        let mut seen = Vec::new();
        let traj = evolve(&psi, &Potential::zero(g), &PhysParams::default(), &spec, |s, t, f| {
            seen.push((s, t, f.clone()));
            Ok(())
        })
        .unwrap();
        assert_eq!(seen.len(), 1);
        assert_eq!(seen[0].2, psi);
        assert_eq!(traj.records, 1);
    }

    struct Lossy(f64);

    impl Propagate for Lossy {
        fn dt(&self) -> f64 {
            1e-3
        }
        fn step(&self, psi: &Field2C) -> Result<Field2C> {
            Ok(psi.scale(Complex64::new(self.0, 0.0)))
        }
    }

    #[test]
    fn evolve_aborts_on_norm_drift() {
        let g = make_grid(8, 4.0).unwrap();
        let psi = gaussian(g, 0.5, 0.0, 0.0, 0.0);
        let spec = EvolutionSpec::new(1e-3, 10, 1).unwrap();
        let err = evolve_with(&psi, &Lossy(1.0 - 1e-6), &spec, |_, _, _| Ok(())).unwrap_err();
        assert!(matches!(err, Error::NormDrift { step: 1, .. }));
        let mut calls = 0;
        let traj = evolve_with(&psi, &Lossy(1.0 - 1e-12), &spec, |_, _, _| {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 11);
        assert!(traj.max_norm_drift > 0.0);
        assert!(EvolutionSpec::new(0.0, 3, 1).is_err());
        assert!(EvolutionSpec::new(1e-3, 3, 4).is_err());
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let a = make_grid(8, 4.0).unwrap();
        let b = make_grid(8, 5.0).unwrap();
        let psi = gaussian(a, 0.5, 0.0, 0.0, 0.0);
        let p = PhysParams::default();
        assert!(matches!(apply_hamiltonian(&psi, &Potential::zero(b), &p), Err(Error::GridMismatch(_))));
        assert!(step_split(&psi, &Potential::zero(b), &p, 0.1).is_err());
        assert!(cn_reference_step(&psi, &Potential::zero(b), &p, 0.1).is_err());
    }

    #[test]
    fn crank_nicolson_limits() {
        let g = make_grid(16, 8.0).unwrap();
        let p = PhysParams::default();
        let psi = gaussian(g, 0.8, 0.3, 0.0, 0.5);
        let v = Potential::bilinear(g, 0.5).unwrap();
        // dt -> 0: the step error shrinks linearly or faster.
        let e1 = cn_reference_step(&psi, &v, &p, 1e-3).unwrap().linf_distance(&psi).unwrap();
        let e2 = cn_reference_step(&psi, &v, &p, 1e-4).unwrap().linf_distance(&psi).unwrap();
        assert!(e2 < 0.2 * e1 && e2 < 1e-3);
        // Norm preserved to solver precision.
        let next = cn_reference_step(&psi, &v, &p, 0.05).unwrap();
        assert!((next.norm() - 1.0).abs() < 1e-12);
        assert!(cn_reference_step(&gaussian(make_grid(26, 8.0).unwrap(), 0.8, 0.0, 0.0, 0.0), &Potential::zero(make_grid(26, 8.0).unwrap()), &p, 1e-3).is_err());
    }

    #[test]
    fn crank_nicolson_constant_potential_is_scalar_cayley() {
        let g = make_grid(8, 6.0).unwrap();
        let p = PhysParams::default();
        let c = 3.0;
        let dt = 0.01;
        // A constant state is annihilated by the kinetic term, so H ψ = c ψ.
        let flat = Field2C::from_fn(g, |_, _| Complex64::new(1.0, 0.0)).unwrap().normalized().unwrap();
        let next = cn_reference_step(&flat, &Potential::constant(g, c).unwrap(), &p, dt).unwrap();
        let exact = flat.scale(Complex64::from_polar(1.0, -c * dt / p.hbar));
        let bound = (c * dt / (2.0 * p.hbar)).powi(3) * flat.linf();
        assert!(next.linf_distance(&exact).unwrap() <= bound);
    }

    #[test]
    fn crank_nicolson_vs_split_step_third_order_per_step() {
        // Oracle: the one-step difference falls as dt³ (ratio 8 under halving).
        let g = make_grid(16, 10.0).unwrap();
        let p = PhysParams::default();
        let v = Potential::zero(g);
        let psi = gaussian(g, 0.8, 0.0, 0.0, 0.0);
        let diff = |dt: f64| {
            let a = cn_reference_step(&psi, &v, &p, dt).unwrap();
            let b = step_split(&psi, &v, &p, dt).unwrap();
            a.linf_distance(&b).unwrap()
        };
        let d1 = diff(0.02);
        let d2 = diff(0.01);
        let ratio = d1 / d2;
        assert!((ratio - 8.0).abs() < 0.5, "ratio {ratio}");
    }
}
