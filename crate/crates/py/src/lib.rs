//! Python bindings: grids, fields, time stepping and the audits.

use std::path::PathBuf;

use landau_spectral::functionals::{m_diff_norm, DiagnosticsRow};
use landau_spectral::io::{exit_code, parse_config, read_snapshot, run};
use landau_spectral::ops::{coercivity_scan, WeightOrder};
use landau_spectral::solver::{evolve, gaussian, InitialData, SchemeKind, StepScheme};
use landau_spectral::verification::{contraction_experiment, identity_residuals, w_equation_residual};
use landau_spectral::{Field, GridSpec, SpectralPlan};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn scheme_kind(name: &str) -> PyResult<SchemeKind> {
    match name {
        "explicit_rk2" => Ok(SchemeKind::ExplicitRk2),
        "imex_diffusion" => Ok(SchemeKind::ImexDiffusion),
        other => Err(value_err(format!(
            "unknown scheme {other:?}, expected \"explicit_rk2\" or \"imex_diffusion\""
        ))),
    }
}

fn same_grid(grid: &PyGrid, f: &PyField) -> PyResult<()> {
    grid.plan.grid().same_as(f.inner.grid()).map_err(value_err)
}

/// Uniform periodic grid on `[-L, L)^3` with its spectral plan.
#[pyclass(name = "Grid", module = "landau_spectral", frozen)]
struct PyGrid {
    plan: SpectralPlan,
}

impl PyGrid {
    fn spec(&self) -> GridSpec {
        *self.plan.grid()
    }

    fn wrap(&self, f: Field) -> PyField {
        PyField { inner: f }
    }
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (n, half_width = 8.0))]
    fn new(n: usize, half_width: f64) -> PyResult<Self> {
        let spec = GridSpec::new(n, half_width).map_err(value_err)?;
        Ok(PyGrid {
            plan: SpectralPlan::new(spec).map_err(value_err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.spec().n()
    }

    #[getter]
    fn half_width(&self) -> f64 {
        self.spec().half_width()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.spec().spacing()
    }

    /// Node coordinates along one axis.
    fn coords(&self) -> Vec<f64> {
        let g = self.spec();
        (0..g.n()).map(|i| g.coord(i)).collect()
    }

    /// Field from `n^3` values in C order.
    fn field(&self, values: Vec<f64>) -> PyResult<PyField> {
        Ok(self.wrap(Field::from_values(self.spec(), values).map_err(value_err)?))
    }

    #[pyo3(signature = (temperature = 1.0))]
    fn maxwellian(&self, temperature: f64) -> PyField {
        self.wrap(gaussian(self.spec(), [0.0; 3], [temperature; 3]))
    }

    fn gaussian(&self, center: [f64; 3], temperatures: [f64; 3]) -> PyField {
        self.wrap(gaussian(self.spec(), center, temperatures))
    }

    #[pyo3(signature = (shift = 1.5, temperature = 1.0))]
    fn two_bump(&self, shift: f64, temperature: f64) -> PyField {
        self.wrap(InitialData::TwoBump { shift, temperature }.build(self.spec(), 0))
    }

    #[pyo3(signature = (seed = 0, amplitude = 0.3, max_mode = 4))]
    fn band_limited(&self, seed: u64, amplitude: f64, max_mode: i32) -> PyField {
        self.wrap(InitialData::BandLimited { amplitude, max_mode }.build(self.spec(), seed))
    }

    fn __repr__(&self) -> String {
        format!("Grid(n={}, half_width={})", self.n(), self.half_width())
    }
}

/// Real field on a grid.
#[pyclass(name = "Field", module = "landau_spectral", frozen)]
struct PyField {
    inner: Field,
}

#[pymethods]
impl PyField {
    #[getter]
    fn n(&self) -> usize {
        self.inner.grid().n()
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        let n = self.n();
        (n, n, n)
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn integral(&self) -> f64 {
        self.inner.integral()
    }

    fn norm_l2(&self) -> f64 {
        self.inner.norm_l2()
    }

    fn min(&self) -> f64 {
        self.inner.min()
    }

    fn max(&self) -> f64 {
        self.inner.max()
    }

    /// `self + c * other`.
    fn axpy(&self, c: f64, other: PyRef<'_, PyField>) -> PyResult<PyField> {
        self.inner.grid().same_as(other.inner.grid()).map_err(value_err)?;
        Ok(PyField {
            inner: self.inner.axpy(c, &other.inner),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.values().len()
    }

    fn __repr__(&self) -> String {
        format!("Field(n={}, integral={:.6e})", self.n(), self.integral())
    }
}

/// Evolves `f0` to `t_end`; returns `(time, field, steps)`.
#[pyfunction]
#[pyo3(signature = (grid, f0, t_end, scheme = "explicit_rk2", cfl_safety = 0.25))]
fn solve(
    py: Python<'_>,
    grid: PyRef<'_, PyGrid>,
    f0: PyRef<'_, PyField>,
    t_end: f64,
    scheme: &str,
    cfl_safety: f64,
) -> PyResult<(f64, PyField, usize)> {
    same_grid(&grid, &f0)?;
    let scheme = StepScheme::new(scheme_kind(scheme)?, cfl_safety).map_err(value_err)?;
    let (plan, f) = (&grid.plan, f0.inner.clone());
    let end = py
        .detach(|| evolve(plan, f, t_end, &scheme, |_| Ok(())))
        .map_err(runtime_err)?;
    Ok((end.time, PyField { inner: end.f }, end.step_count))
}

/// Moments, entropy and weighted norms of one state.
#[pyfunction]
#[pyo3(signature = (grid, f, time = 0.0, k0 = 5.0))]
fn diagnostics<'py>(
    py: Python<'py>,
    grid: PyRef<'_, PyGrid>,
    f: PyRef<'_, PyField>,
    time: f64,
    k0: f64,
) -> PyResult<Bound<'py, PyDict>> {
    same_grid(&grid, &f)?;
    let k0 = WeightOrder::new(k0).map_err(value_err)?;
    let row = DiagnosticsRow::compute(&grid.plan, &f.inner, time, k0).map_err(value_err)?;
    let d = PyDict::new(py);
    for (key, v) in DiagnosticsRow::HEADER.split(',').zip(row.values()) {
        d.set_item(key, v)?;
    }
    Ok(d)
}

/// `min <v>^3 lambda_min(A[f])` and where it is attained.
#[pyfunction]
fn coercivity<'py>(
    py: Python<'py>,
    grid: PyRef<'_, PyGrid>,
    f: PyRef<'_, PyField>,
) -> PyResult<Bound<'py, PyDict>> {
    same_grid(&grid, &f)?;
    let r = coercivity_scan(&grid.plan, &f.inner).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("c0_hat", r.c0_hat)?;
    d.set_item("argmin_point", r.argmin_point)?;
    d.set_item("mass", r.mass)?;
    d.set_item("entropy", r.entropy)?;
    Ok(d)
}

/// Relative residuals of the six operator identities for `h`.
#[pyfunction]
#[pyo3(name = "identity_residuals")]
fn py_identity_residuals<'py>(
    py: Python<'py>,
    grid: PyRef<'_, PyGrid>,
    h: PyRef<'_, PyField>,
) -> PyResult<Bound<'py, PyDict>> {
    same_grid(&grid, &h)?;
    let r = identity_residuals(&grid.plan, &h.inner).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("bessel_inverse", r.bessel_inverse)?;
    d.set_item("trace", r.trace)?;
    d.set_item("a_split", r.a_split)?;
    d.set_item("a_times_v", r.a_times_v)?;
    d.set_item("div_a", r.div_a)?;
    d.set_item("div_split", r.div_split)?;
    Ok(d)
}

/// `(full, simplification)` residuals of the `w` equation.
#[pyfunction]
#[pyo3(name = "w_equation_residual")]
fn py_w_equation_residual(
    grid: PyRef<'_, PyGrid>,
    f: PyRef<'_, PyField>,
    g: PyRef<'_, PyField>,
) -> PyResult<(f64, f64)> {
    same_grid(&grid, &f)?;
    same_grid(&grid, &g)?;
    let r = w_equation_residual(&grid.plan, &f.inner, &g.inner).map_err(value_err)?;
    Ok((r.full, r.simplification))
}

/// `|| M(<v>^2 (f - g)) ||_2`.
#[pyfunction]
#[pyo3(name = "m_diff_norm")]
fn py_m_diff_norm(grid: PyRef<'_, PyGrid>, f: PyRef<'_, PyField>, g: PyRef<'_, PyField>) -> PyResult<f64> {
    same_grid(&grid, &f)?;
    m_diff_norm(&grid.plan, &f.inner, &g.inner).map_err(value_err)
}

/// Runs `f0` against `f0 + eps p` for each `eps` in the decreasing list.
#[pyfunction]
#[pyo3(signature = (grid, f0, eps_list, t_end, seed = 0, cfl_safety = 0.25))]
fn contraction<'py>(
    py: Python<'py>,
    grid: PyRef<'_, PyGrid>,
    f0: PyRef<'_, PyField>,
    eps_list: Vec<f64>,
    t_end: f64,
    seed: u64,
    cfl_safety: f64,
) -> PyResult<Bound<'py, PyDict>> {
    same_grid(&grid, &f0)?;
    let scheme = StepScheme::new(SchemeKind::ExplicitRk2, cfl_safety).map_err(value_err)?;
    let (plan, f) = (&grid.plan, &f0.inner);
    let r = py
        .detach(|| contraction_experiment(plan, f, &eps_list, t_end, &scheme, seed))
        .map_err(runtime_err)?;
    let d = PyDict::new(py);
    d.set_item("eps", r.eps)?;
    d.set_item("sup_mw", r.sup_mw)?;
    d.set_item("initial_mw", r.initial_mw)?;
    d.set_item("slope", r.slope)?;
    d.set_item("amplification", r.amplification)?;
    d.set_item("monotone", r.monotone)?;
    Ok(d)
}

/// Runs the experiment described by a TOML config; returns
/// `(exit_code, report, files)`.
#[pyfunction]
fn run_config(py: Python<'_>, text: &str) -> PyResult<(i32, String, Vec<PathBuf>)> {
    let config = parse_config(text).map_err(value_err)?;
    let result = py.detach(|| run(&config));
    let code = exit_code(&result);
    match result {
        Ok(o) => Ok((code, o.report.to_string(), o.files)),
        Err(e) => Err(runtime_err(e)),
    }
}

/// Writes an LCF1 snapshot.
#[pyfunction]
#[pyo3(name = "write_snapshot")]
fn py_write_snapshot(path: PathBuf, f: PyRef<'_, PyField>, time: f64) -> PyResult<()> {
    landau_spectral::io::write_snapshot(&path, &f.inner, time).map_err(|e| PyIOError::new_err(e.to_string()))
}

/// Reads an LCF1 snapshot; returns `(grid, time, field)`.
#[pyfunction]
#[pyo3(name = "read_snapshot")]
fn py_read_snapshot(path: PathBuf) -> PyResult<(PyGrid, f64, PyField)> {
    let s = read_snapshot(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
    let plan = SpectralPlan::new(*s.field.grid()).map_err(value_err)?;
    Ok((PyGrid { plan }, s.time, PyField { inner: s.field }))
}

#[pymodule]
fn landau_spectral_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(diagnostics, m)?)?;
    m.add_function(wrap_pyfunction!(coercivity, m)?)?;
    m.add_function(wrap_pyfunction!(py_identity_residuals, m)?)?;
    m.add_function(wrap_pyfunction!(py_w_equation_residual, m)?)?;
    m.add_function(wrap_pyfunction!(py_m_diff_norm, m)?)?;
    m.add_function(wrap_pyfunction!(contraction, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(py_write_snapshot, m)?)?;
    m.add_function(wrap_pyfunction!(py_read_snapshot, m)?)?;
    Ok(())
}
