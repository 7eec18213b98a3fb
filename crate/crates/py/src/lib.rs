//! Python bindings: grids, wavefunctions, potentials, purity measures,
//! continuity residuals and scenario runs.

use ndarray::Array2;
use num_complex::Complex64;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use entcont::scenario::{self, InitialStateSpec, RunOptions};
use entcont::{Error, Field2C};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidGrid(_) | Error::InvalidArgument(_) | Error::GridMismatch(_) => {
            PyValueError::new_err(e.to_string())
        }
        Error::Io { .. } | Error::Format { .. } => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Grid", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyGrid(entcont::Grid);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(n: usize, length: f64) -> PyResult<Self> {
        entcont::make_grid(n, length).map(PyGrid).map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn length(&self) -> f64 {
        self.0.length()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.0.spacing()
    }

    fn coords(&self) -> Vec<f64> {
        self.0.coords()
    }

    fn __repr__(&self) -> String {
        format!("Grid(n={}, length={})", self.0.n(), self.0.length())
    }
}

#[pyclass(name = "PhysParams", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyPhys(entcont::PhysParams);

#[pymethods]
impl PyPhys {
    #[new]
    #[pyo3(signature = (hbar = 1.0, mass_x = 1.0, mass_y = 1.0))]
    fn new(hbar: f64, mass_x: f64, mass_y: f64) -> PyResult<Self> {
        entcont::PhysParams::new(hbar, mass_x, mass_y).map(PyPhys).map_err(py_err)
    }

    #[getter]
    fn hbar(&self) -> f64 {
        self.0.hbar
    }

    #[getter]
    fn mass_x(&self) -> f64 {
        self.0.mass_x
    }

    #[getter]
    fn mass_y(&self) -> f64 {
        self.0.mass_y
    }
}

/// Two-particle wavefunction `ψ[i, j]` on a grid.
#[pyclass(name = "WaveFunction", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyWave(Field2C);

#[pymethods]
impl PyWave {
    #[new]
    fn new(grid: &PyGrid, values: Vec<Vec<Complex64>>) -> PyResult<Self> {
        let n = grid.0.n();
        if values.len() != n || values.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err(format!("values must be {n} x {n}")));
        }
        let flat: Vec<Complex64> = values.into_iter().flatten().collect();
        let a = Array2::from_shape_vec((n, n), flat).expect("shape checked");
        Field2C::new(grid.0, a).map(PyWave).map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (grid, sigma_x = 0.8, sigma_y = 0.8, center_x = 0.0, center_y = 0.0, momentum_x = 0.0, momentum_y = 0.0, hbar = 1.0))]
    #[allow(clippy::too_many_arguments)]
    fn product_gaussian(
        grid: &PyGrid,
        sigma_x: f64,
        sigma_y: f64,
        center_x: f64,
        center_y: f64,
        momentum_x: f64,
        momentum_y: f64,
        hbar: f64,
    ) -> PyResult<Self> {
        let spec = InitialStateSpec::ProductGaussian { sigma_x, sigma_y, center_x, center_y, momentum_x, momentum_y };
        scenario::build_initial_state(&spec, grid.0, hbar).map(PyWave).map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (grid, a = 1.0, b = 2.0))]
    fn double_gaussian(grid: &PyGrid, a: f64, b: f64) -> PyResult<Self> {
        scenario::build_initial_state(&InitialStateSpec::DoubleGaussian { a, b }, grid.0, 1.0)
            .map(PyWave)
            .map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (grid, lambda0 = 0.5, modes = (0, 1)))]
    fn schmidt_two_term(grid: &PyGrid, lambda0: f64, modes: (usize, usize)) -> PyResult<Self> {
        let spec = InitialStateSpec::SchmidtTwoTerm { lambda0, mode_indices: modes };
        scenario::build_initial_state(&spec, grid.0, 1.0).map(PyWave).map_err(py_err)
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(*self.0.grid())
    }

    fn values(&self) -> Vec<Vec<Complex64>> {
        self.0.values().rows().into_iter().map(|r| r.to_vec()).collect()
    }

    fn norm(&self) -> f64 {
        self.0.norm()
    }

    fn normalized(&self) -> PyResult<Self> {
        self.0.normalized().map(PyWave).map_err(py_err)
    }

    fn edge_ratio(&self) -> f64 {
        self.0.edge_ratio()
    }

    /// Writes a PURF dump of the amplitudes.
    fn dump(&self, path: std::path::PathBuf) -> PyResult<()> {
        scenario::write_field_dump(&self.0, &path).map_err(py_err)
    }

    #[staticmethod]
    fn load(grid: &PyGrid, path: std::path::PathBuf) -> PyResult<Self> {
        let d = scenario::read_dump(&path).map_err(py_err)?;
        d.to_field2(grid.0).map(PyWave).map_err(py_err)
    }
}

#[pyclass(name = "Potential", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPotential(entcont::Potential);

#[pymethods]
impl PyPotential {
    #[staticmethod]
    fn none(grid: &PyGrid) -> Self {
        PyPotential(entcont::Potential::zero(grid.0))
    }

    /// `½kₓx² + ½k_y y²`.
    #[staticmethod]
    #[pyo3(signature = (grid, kx = 1.0, ky = 1.0))]
    fn harmonic(grid: &PyGrid, kx: f64, ky: f64) -> PyResult<Self> {
        entcont::Potential::separable(grid.0, |x| 0.5 * kx * x * x, |y| 0.5 * ky * y * y)
            .map(PyPotential)
            .map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (grid, kappa = 0.5))]
    fn bilinear(grid: &PyGrid, kappa: f64) -> PyResult<Self> {
        entcont::Potential::bilinear(grid.0, kappa).map(PyPotential).map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (grid, v0 = 1.0, width = 2.0))]
    fn gaussian_coupling(grid: &PyGrid, v0: f64, width: f64) -> PyResult<Self> {
        entcont::Potential::gaussian_coupling(grid.0, v0, width).map(PyPotential).map_err(py_err)
    }

    #[staticmethod]
    fn custom(grid: &PyGrid, values: Vec<Vec<f64>>) -> PyResult<Self> {
        let n = grid.0.n();
        if values.len() != n || values.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err(format!("values must be {n} x {n}")));
        }
        let a = Array2::from_shape_vec((n, n), values.into_iter().flatten().collect()).expect("shape checked");
        entcont::Potential::custom(grid.0, a).map(PyPotential).map_err(py_err)
    }

    #[getter]
    fn kind(&self) -> String {
        format!("{:?}", self.0.kind()).to_lowercase()
    }

    fn values(&self) -> Vec<Vec<f64>> {
        self.0.values().rows().into_iter().map(|r| r.to_vec()).collect()
    }
}

fn phys_or_default(p: Option<&PyPhys>) -> entcont::PhysParams {
    p.map(|p| p.0).unwrap_or_default()
}

#[pyfunction]
fn purity(psi: &PyWave) -> f64 {
    entcont::purity(&psi.0)
}

#[pyfunction]
fn purity_report<'py>(py: Python<'py>, psi: &PyWave) -> PyResult<Bound<'py, PyAny>> {
    json(py, &entcont::purity_report(&psi.0).map_err(py_err)?)
}

#[pyfunction]
fn schmidt_spectrum(psi: &PyWave) -> Vec<f64> {
    entcont::schmidt_spectrum(&psi.0).coefficients
}

/// `∫ π` as a complex number.
#[pyfunction]
fn purity_integral(psi: &PyWave) -> Complex64 {
    entcont::purity_from_density(&entcont::purity_density(&psi.0))
}

#[pyfunction]
fn concurrence(purity: f64) -> PyResult<f64> {
    entcont::concurrence(purity).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (num_particles = 2, particle_dim = 1))]
fn dcp(num_particles: usize, particle_dim: usize) -> PyResult<f64> {
    entcont::dcp(num_particles, particle_dim).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (psi, potential, dt, params = None))]
fn step_split(psi: &PyWave, potential: &PyPotential, dt: f64, params: Option<&PyPhys>) -> PyResult<PyWave> {
    entcont::step_split(&psi.0, &potential.0, &phys_or_default(params), dt).map(PyWave).map_err(py_err)
}

/// Evolves `steps` split steps and returns `(final_state, [(t, purity), ...])`.
#[pyfunction]
#[pyo3(signature = (psi, potential, dt, steps, record_every = 1, params = None))]
fn evolve(
    py: Python<'_>,
    psi: &PyWave,
    potential: &PyPotential,
    dt: f64,
    steps: usize,
    record_every: usize,
    params: Option<&PyPhys>,
) -> PyResult<(PyWave, Vec<(f64, f64)>)> {
    let p = phys_or_default(params);
    let spec = entcont::EvolutionSpec::new(dt, steps, record_every).map_err(py_err)?;
    let (psi0, v) = (psi.0.clone(), potential.0.clone());
    py.detach(move || {
        let mut series = Vec::new();
        let traj = entcont::evolve(&psi0, &v, &p, &spec, |_, t, s| {
            series.push((t, entcont::purity(s)));
            Ok(())
        })?;
        Ok((PyWave(traj.final_state), series))
    })
    .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (psi, params = None))]
fn residual_free<'py>(py: Python<'py>, psi: &PyWave, params: Option<&PyPhys>) -> PyResult<Bound<'py, PyAny>> {
    let p = phys_or_default(params);
    let psi = psi.0.clone();
    let r = py.detach(move || entcont::residual_free(&psi, &p)).map_err(py_err)?;
    report_dict(py, &r)
}

#[pyfunction]
#[pyo3(signature = (psi, potential, params = None))]
fn residual_interacting<'py>(
    py: Python<'py>,
    psi: &PyWave,
    potential: &PyPotential,
    params: Option<&PyPhys>,
) -> PyResult<Bound<'py, PyAny>> {
    let p = phys_or_default(params);
    let (psi, v) = (psi.0.clone(), potential.0.clone());
    let r = py.detach(move || entcont::residual_interacting(&psi, &v, &p)).map_err(py_err)?;
    report_dict(py, &r)
}

fn report_dict<'py>(py: Python<'py>, r: &entcont::ContinuityReport) -> PyResult<Bound<'py, PyAny>> {
    let d = json(py, r)?;
    d.set_item("relative_re", r.relative_re())?;
    d.set_item("relative_im", r.relative_im())?;
    d.set_item("resolved", r.resolved())?;
    Ok(d)
}

/// `(lhs, rhs)`: centered-difference purity rate and `−(1/ħ)∫π_I U`.
#[pyfunction]
#[pyo3(signature = (psi, potential, dt, params = None))]
fn purity_rate_check(psi: &PyWave, potential: &PyPotential, dt: f64, params: Option<&PyPhys>) -> PyResult<(f64, f64)> {
    let r = entcont::purity_rate_check(&psi.0, &potential.0, &phys_or_default(params), dt).map_err(py_err)?;
    Ok((r.lhs, r.rhs))
}

/// Parses a scenario config and returns it as a dict (raises on errors).
#[pyfunction]
fn parse_config<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    json(py, &scenario::parse_config(text).map_err(py_err)?)
}

/// Runs a scenario given as config text; returns the run summary with its rows.
#[pyfunction]
#[pyo3(signature = (text, dt_refine = false, dense_oracle = false))]
fn run_config<'py>(py: Python<'py>, text: &str, dt_refine: bool, dense_oracle: bool) -> PyResult<Bound<'py, PyAny>> {
    let config = scenario::parse_config(text).map_err(py_err)?;
    let summary = py
        .detach(move || scenario::run_scenario(&config, RunOptions { dt_refine, dense_oracle }))
        .map_err(py_err)?;
    let d = json(py, &summary)?;
    d.set_item("rows", json(py, &summary.rows)?)?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "entcont")]
fn entcont_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyPhys>()?;
    m.add_class::<PyWave>()?;
    m.add_class::<PyPotential>()?;
    m.add_function(wrap_pyfunction!(purity, m)?)?;
    m.add_function(wrap_pyfunction!(purity_report, m)?)?;
    m.add_function(wrap_pyfunction!(schmidt_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(purity_integral, m)?)?;
    m.add_function(wrap_pyfunction!(concurrence, m)?)?;
    m.add_function(wrap_pyfunction!(dcp, m)?)?;
    m.add_function(wrap_pyfunction!(step_split, m)?)?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(residual_free, m)?)?;
    m.add_function(wrap_pyfunction!(residual_interacting, m)?)?;
    m.add_function(wrap_pyfunction!(purity_rate_check, m)?)?;
    m.add_function(wrap_pyfunction!(parse_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
