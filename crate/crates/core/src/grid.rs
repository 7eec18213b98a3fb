use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted number of points per axis.
pub const MIN_POINTS: usize = 8;

/// Uniform periodic lattice shared by every axis of the physical and
/// dynamical spaces. Coordinates run over `[-length/2, length/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    length: f64,
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("grid.n must be even (got {n})")));
        }
        if n < MIN_POINTS {
            return Err(Error::InvalidGrid(format!(
                "grid.n must be at least {MIN_POINTS} (got {n})"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "grid.length must be positive and finite (got {length})"
            )));
        }
        Ok(Grid { n, length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.length + i as f64 * self.spacing()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    /// Angular wavenumbers in FFT order: `0, 1, ..., n/2 - 1, -n/2, ..., -1`
    /// in units of `2π/length`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        wavenumbers(self.n, self.length)
    }
}

pub(crate) fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    let base = 2.0 * PI / length;
    (0..n)
        .map(|i| {
            let m = if i < n / 2 { i as isize } else { i as isize - n as isize };
            base * m as f64
        })
        .collect()
}

pub fn make_grid(n: usize, length: f64) -> Result<Grid> {
    Grid::new(n, length)
}

/// Physical constants ħ, m (first particle) and M (second particle).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    pub hbar: f64,
    pub mass_x: f64,
    pub mass_y: f64,
}

impl PhysParams {
    pub fn new(hbar: f64, mass_x: f64, mass_y: f64) -> Result<Self> {
        for (name, v) in [("hbar", hbar), ("mass_x", mass_x), ("mass_y", mass_y)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "phys.{name} must be strictly positive (got {v})"
                )));
            }
        }
        Ok(PhysParams { hbar, mass_x, mass_y })
    }
}

impl Default for PhysParams {
    fn default() -> Self {
        PhysParams { hbar: 1.0, mass_x: 1.0, mass_y: 1.0 }
    }
}
