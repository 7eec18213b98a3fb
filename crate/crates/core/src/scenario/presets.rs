//! Initial states and potentials built from config specs.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::Field2C;
use crate::grid::Grid;
use crate::propagator::Potential;
use crate::scenario::config::{InitialStateSpec, PotentialSpec, ScenarioConfig, DEFAULT_KAPPA, DEFAULT_SIGMA};

/// Edge amplitude (relative to the maximum) above which a warning is logged.
pub const EDGE_WARN: f64 = 1e-8;

/// Edge amplitude above which the state is rejected as not fitting the domain.
pub const EDGE_FAIL: f64 = 1e-4;

/// Oscillator eigenfunctions (unit frequency) of orders `0..count`, sampled
/// and then Gram–Schmidt orthonormalized on the grid.
pub fn hermite_modes(grid: &Grid, count: usize) -> Vec<Vec<f64>> {
    let x = grid.coords();
    let h = grid.spacing();
    let mut raw: Vec<Vec<f64>> = Vec::with_capacity(count);
    // Scaled recursion h_{k+1} = √(2/(k+1)) x h_k − √(k/(k+1)) h_{k−1} keeps values bounded.
    for k in 0..count {
        let v: Vec<f64> = match k {
            0 => x.iter().map(|&x| (-x * x / 2.0).exp()).collect(),
            1 => raw[0].iter().zip(&x).map(|(h0, &x)| 2f64.sqrt() * x * h0).collect(),
            _ => {
                let a = (2.0 / k as f64).sqrt();
                let b = ((k - 1) as f64 / k as f64).sqrt();
                (0..x.len()).map(|i| a * x[i] * raw[k - 1][i] - b * raw[k - 2][i]).collect()
            }
        };
        raw.push(v);
    }
    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(count);
    for v in raw {
        let mut v = v;
        for m in &modes {
            let dot: f64 = v.iter().zip(m).map(|(a, b)| a * b).sum::<f64>() * h;
            v.iter_mut().zip(m).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = (v.iter().map(|a| a * a).sum::<f64>() * h).sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        modes.push(v);
    }
    modes
}

fn sample(spec: &InitialStateSpec, grid: Grid, hbar: f64) -> Result<Field2C> {
    match *spec {
        InitialStateSpec::ProductGaussian { sigma_x, sigma_y, center_x, center_y, momentum_x, momentum_y } => {
            let (kx, ky) = (momentum_x / hbar, momentum_y / hbar);
            Field2C::from_fn(grid, |x, y| {
                let r = -(x - center_x).powi(2) / (4.0 * sigma_x * sigma_x)
                    - (y - center_y).powi(2) / (4.0 * sigma_y * sigma_y);
                Complex64::from_polar(r.exp(), kx * x + ky * y)
            })
        }
        InitialStateSpec::DoubleGaussian { a, b } => Field2C::from_fn(grid, |x, y| {
            Complex64::new((-(x + y).powi(2) / (4.0 * b * b) - (x - y).powi(2) / (4.0 * a * a)).exp(), 0.0)
        }),
        InitialStateSpec::SchmidtTwoTerm { lambda0, mode_indices: (p, q) } => {
            let modes = hermite_modes(&grid, p.max(q) + 1);
            let (hp, hq) = (&modes[p], &modes[q]);
            let (wp, wq) = (lambda0.sqrt(), (1.0 - lambda0).sqrt());
            let n = grid.n();
            let values = Array2::from_shape_fn((n, n), |(i, j)| {
                Complex64::new(wp * hp[i] * hp[j] + wq * hq[i] * hq[j], 0.0)
            });
            Field2C::new(grid, values)
        }
    }?
    .normalized()
}

/// Smallest domain length (same spacing growth factor 1.1) at which the
/// state's edge amplitude drops below [`EDGE_WARN`].
pub fn required_length(spec: &InitialStateSpec, grid: &Grid, hbar: f64) -> Option<f64> {
    let mut length = grid.length();
    for _ in 0..60 {
        length *= 1.1;
        // keep the spacing roughly fixed so the probe samples the same features
        let n = ((length / grid.spacing()).ceil() as usize).next_multiple_of(2);
        let probe = Grid::new(n, length).ok()?;
        if sample(spec, probe, hbar).ok()?.edge_ratio() <= EDGE_WARN {
            return Some(length);
        }
    }
    None
}

/// Normalized initial state. Rejects states whose edge amplitude exceeds
/// [`EDGE_FAIL`] of the maximum and warns above [`EDGE_WARN`].
pub fn build_initial_state(spec: &InitialStateSpec, grid: Grid, hbar: f64) -> Result<Field2C> {
    let psi = sample(spec, grid, hbar)?;
    let edge = psi.edge_ratio();
    if edge > EDGE_FAIL {
        let need = match required_length(spec, &grid, hbar) {
            Some(l) => format!("grid.length of at least {l:.2} (with proportionally more points)"),
            None => "a much larger domain".to_string(),
        };
        return Err(Error::Unresolved(format!(
            "{} has edge amplitude {edge:.2e} of its maximum on length {}; needs {need}",
            spec.tag(),
            grid.length()
        )));
    }
    if edge > EDGE_WARN {
        log::warn!(
            "{} edge amplitude {edge:.2e} exceeds {EDGE_WARN:e} of its maximum on length {}",
            spec.tag(),
            grid.length()
        );
    }
    Ok(psi)
}

pub fn build_potential(spec: &PotentialSpec, grid: Grid) -> Result<Potential> {
    match *spec {
        PotentialSpec::None => Ok(Potential::zero(grid)),
        PotentialSpec::Separable { f_kind, g_kind, f_param, g_param } => {
            Potential::separable(grid, |x| f_kind.eval(f_param, x), |y| g_kind.eval(g_param, y))
        }
        PotentialSpec::Bilinear { kappa } => Potential::bilinear(grid, kappa),
        PotentialSpec::GaussianCoupling { v0, width } => Potential::gaussian_coupling(grid, v0, width),
    }
}

/// Built-in scenarios used by `selftest` and the examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Separable Gaussian, no potential.
    Product,
    /// Statically entangled double Gaussian (a = 1, b = 2), free flow.
    DoubleGaussian,
    /// Equal-weight two-term Schmidt state in a separable oscillator.
    SchmidtTwoTerm,
    /// Product Gaussian with bilinear coupling, generating entanglement.
    Coupled,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Product, Preset::DoubleGaussian, Preset::SchmidtTwoTerm, Preset::Coupled];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Product => "product",
            Preset::DoubleGaussian => "double_gaussian",
            Preset::SchmidtTwoTerm => "schmidt_two_term",
            Preset::Coupled => "coupled",
        }
    }

    pub fn initial_state(self) -> InitialStateSpec {
        match self {
            Preset::Product | Preset::Coupled => InitialStateSpec::product_gaussian(DEFAULT_SIGMA),
            Preset::DoubleGaussian => InitialStateSpec::DoubleGaussian { a: 1.0, b: 2.0 },
            Preset::SchmidtTwoTerm => InitialStateSpec::SchmidtTwoTerm { lambda0: 0.5, mode_indices: (0, 1) },
        }
    }

    pub fn potential(self) -> PotentialSpec {
        use crate::scenario::config::TermKind;
        match self {
            Preset::Product | Preset::DoubleGaussian => PotentialSpec::None,
            Preset::SchmidtTwoTerm => PotentialSpec::Separable {
                f_kind: TermKind::Harmonic,
                g_kind: TermKind::Harmonic,
                f_param: 1.0,
                g_param: 1.0,
            },
            Preset::Coupled => PotentialSpec::Bilinear { kappa: DEFAULT_KAPPA },
        }
    }

    /// A 32-point grid whose domain holds the state well inside the edge
    /// tolerance and whose spacing resolves it to roundoff.
    pub fn grid(self) -> (usize, f64) {
        match self {
            Preset::Product | Preset::Coupled => (32, 16.0),
            Preset::DoubleGaussian => (32, 18.0),
            Preset::SchmidtTwoTerm => (32, 14.0),
        }
    }

    pub fn config(self, n: usize, length: f64, steps: usize) -> ScenarioConfig {
        ScenarioConfig::new(n, length, self.initial_state(), self.potential(), steps)
    }
}
