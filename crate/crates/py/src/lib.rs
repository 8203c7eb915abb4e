//! Python bindings: special functions, evolution operators, null control and
//! the scenario runner.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use conformable::config::ScenarioConfig;
use conformable::control::{self, GramianSolve};
use conformable::evolution::{build_propagator, KernelRoute, OperatorFamily, PropagatorOptions, PropagatorTable};
use conformable::mild::{self, ControlProblem};
use conformable::scenario::{run_scenario, Pipeline, RunOptions};
use conformable::specfun::{self, SpecfunMethod, SpecfunParams};
use conformable::{FractionalOrder, GridFunction, TimeGrid};

create_exception!(conformable_py, ConformableError, PyException);

fn err(e: conformable::Error) -> PyErr {
    ConformableError::new_err(format!("[{}] {}", e.code(), e))
}

fn method(name: &str) -> PyResult<SpecfunMethod> {
    match name {
        "reduction" => Ok(SpecfunMethod::Reduction),
        "quadrature" => Ok(SpecfunMethod::Quadrature),
        other => Err(ConformableError::new_err(format!("[E_DOMAIN] unknown method {other:?}"))),
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(ConformableError::new_err("[E_DIMENSION] ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn values(f: &GridFunction) -> Vec<Vec<f64>> {
    f.values().iter().map(|v| v.iter().copied().collect()).collect()
}

#[pyfunction]
fn pochhammer(p: f64, n: u32, alpha: f64, k: f64) -> PyResult<f64> {
    Ok(specfun::pochhammer(p, n, SpecfunParams::new(alpha, k).map_err(err)?))
}

#[pyfunction]
#[pyo3(signature = (p, alpha, k = 1.0, method = "reduction"))]
fn conformable_gamma(p: f64, alpha: f64, k: f64, method: &str) -> PyResult<f64> {
    let params = SpecfunParams::new(alpha, k).map_err(err)?;
    specfun::conformable_gamma(p, params, self::method(method)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (x, y, alpha, k = 1.0, method = "reduction"))]
fn conformable_beta(x: f64, y: f64, alpha: f64, k: f64, method: &str) -> PyResult<f64> {
    let params = SpecfunParams::new(alpha, k).map_err(err)?;
    specfun::conformable_beta(x, y, params, self::method(method)?).map_err(err)
}

#[pyfunction]
fn n_constant(alpha: f64, t1: f64, t2: f64) -> f64 {
    mild::n_constant(alpha, t1, t2)
}

/// `Ψ_α(t_i, t_j)` tabulated on a uniform τ-grid.
#[pyclass(module = "conformable_py")]
struct Propagator {
    family: OperatorFamily,
    grid: TimeGrid,
    table: PropagatorTable,
}

impl Propagator {
    fn build(family: OperatorFamily, alpha: f64, tau0: f64, tau1: f64, n_nodes: usize, series: bool) -> PyResult<Self> {
        let order = FractionalOrder::new(alpha).map_err(err)?;
        let grid = TimeGrid::from_tau(order, tau0, tau1, n_nodes).map_err(err)?;
        let opts = PropagatorOptions {
            kernel_route: if series { KernelRoute::Series } else { KernelRoute::Direct },
            ..PropagatorOptions::default()
        };
        let table = build_propagator(&family, &grid, opts).map_err(err)?;
        Ok(Self { family, grid, table })
    }

    fn check_node(&self, i: usize) -> PyResult<()> {
        if i >= self.grid.n_nodes() {
            return Err(ConformableError::new_err(format!("[E_INDEX] node {i} out of range")));
        }
        Ok(())
    }
}

#[pymethods]
impl Propagator {
    /// Heat modes `n² + p` with a constant potential `p`.
    #[staticmethod]
    #[pyo3(signature = (alpha, n_modes, n_nodes, potential = 0.0, tau0 = 0.0, tau1 = 1.0))]
    fn heat(alpha: f64, n_modes: usize, n_nodes: usize, potential: f64, tau0: f64, tau1: f64) -> PyResult<Self> {
        let family = OperatorFamily::spectral_heat(move |_| potential, n_modes).map_err(err)?;
        Self::build(family, alpha, tau0, tau1, n_nodes, false)
    }

    /// Smooth random dense family of size `dim`.
    #[staticmethod]
    #[pyo3(signature = (alpha, dim, seed, n_nodes, tau0 = 0.0, tau1 = 1.0, series = false))]
    fn random_dense(
        alpha: f64,
        dim: usize,
        seed: u64,
        n_nodes: usize,
        tau0: f64,
        tau1: f64,
        series: bool,
    ) -> PyResult<Self> {
        let family = OperatorFamily::random_smooth(dim, seed).map_err(err)?;
        Self::build(family, alpha, tau0, tau1, n_nodes, series)
    }

    /// Time-independent generator `A`.
    #[staticmethod]
    #[pyo3(signature = (alpha, a, n_nodes, tau0 = 0.0, tau1 = 1.0))]
    fn constant(alpha: f64, a: Vec<Vec<f64>>, n_nodes: usize, tau0: f64, tau1: f64) -> PyResult<Self> {
        let family = OperatorFamily::constant(matrix(&a)?).map_err(err)?;
        Self::build(family, alpha, tau0, tau1, n_nodes, false)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.table.dim()
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.grid.n_nodes()
    }

    #[getter]
    fn tau(&self) -> Vec<f64> {
        self.grid.tau_nodes().to_vec()
    }

    #[getter]
    fn t(&self) -> Vec<f64> {
        self.grid.t_nodes().to_vec()
    }

    #[getter]
    fn m_est(&self) -> f64 {
        self.table.m_est()
    }

    fn composition_defect(&self) -> f64 {
        self.table.composition_defect()
    }

    /// `Ψ(t_i, t_j)` as a list of rows; needs `i >= j`.
    fn matrix(&self, i: usize, j: usize) -> PyResult<Vec<Vec<f64>>> {
        self.check_node(i)?;
        if j > i {
            return Err(ConformableError::new_err(format!("[E_INDEX] need i >= j, got ({i}, {j})")));
        }
        Ok(rows(&self.table.matrix(i, j)))
    }

    /// Mild trajectory from `x0` with optional forcing samples, one per node.
    #[pyo3(signature = (x0, forcing = None))]
    fn evolve(&self, x0: Vec<f64>, forcing: Option<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<f64>>> {
        let d = self.table.dim();
        let n = self.grid.n_nodes();
        if x0.len() != d {
            return Err(ConformableError::new_err(format!("[E_DIMENSION] x0 has length {}, expected {d}", x0.len())));
        }
        let g: Vec<DVector<f64>> = match forcing {
            Some(f) if f.len() != n || f.iter().any(|v| v.len() != d) => {
                return Err(ConformableError::new_err(format!("[E_DIMENSION] forcing must be {n} x {d}")));
            }
            Some(f) => f.into_iter().map(DVector::from_vec).collect(),
            None => vec![DVector::zeros(d); n],
        };
        let traj = mild::variation_of_constants(&self.table, &DVector::from_vec(x0), &g);
        Ok(traj.iter().map(|v| v.iter().copied().collect()).collect())
    }

    /// Controllability Gramian for the control matrix `b` (identity when omitted).
    #[pyo3(signature = (b = None))]
    fn gramian(&self, b: Option<Vec<Vec<f64>>>) -> PyResult<Gramian> {
        let d = self.table.dim();
        let b = match b {
            Some(rows) => matrix(&rows)?,
            None => DMatrix::identity(d, d),
        };
        let solve = control::build_gramian(&self.family, &b, &self.table).map_err(err)?;
        Ok(Gramian { family: self.family.clone(), grid: self.grid.clone(), solve })
    }

    fn __repr__(&self) -> String {
        format!(
            "Propagator(dim={}, n_nodes={}, alpha={}, backend={})",
            self.table.dim(),
            self.grid.n_nodes(),
            self.grid.alpha(),
            if self.table.is_spectral() { "spectral" } else { "dense" }
        )
    }
}

#[pyclass(module = "conformable_py")]
struct Gramian {
    family: OperatorFamily,
    grid: TimeGrid,
    solve: GramianSolve,
}

#[pymethods]
impl Gramian {
    fn matrix(&self) -> Vec<Vec<f64>> {
        rows(self.solve.w())
    }

    #[getter]
    fn jitter(&self) -> f64 {
        self.solve.jitter()
    }

    #[getter]
    fn h_norm(&self) -> f64 {
        self.solve.h_norm_est()
    }

    /// Minimum-norm control driving `x0` to zero with `F(t, x) = gain · x`.
    #[pyo3(signature = (x0, gain = 0.0, picard_tol = 1e-10, max_iter = 200, null_tol = 1e-6))]
    fn null_control<'py>(
        &self,
        py: Python<'py>,
        x0: Vec<f64>,
        gain: f64,
        picard_tol: f64,
        max_iter: usize,
        null_tol: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let problem = ControlProblem::new(
            self.family.clone(),
            self.grid.clone(),
            DVector::from_vec(x0),
            self.solve.b().clone(),
        )
        .map_err(err)?
        .with_linear_gain(gain)
        .with_tolerances(picard_tol, max_iter, null_tol);
        let out =
            control::exact_null_control_semilinear(&problem, &self.solve, self.solve.propagator()).map_err(err)?;
        let dict = PyDict::new(py);
        dict.set_item("final_state_norm", out.final_state_norm)?;
        dict.set_item("control_energy", out.control_energy)?;
        dict.set_item("iterations", out.iterations)?;
        dict.set_item("control", values(&out.control))?;
        dict.set_item("trajectory", values(&out.closed_loop_trajectory))?;
        Ok(dict)
    }

    /// `(gamma_emp, passes)` for the null-controllability inequality with horizon `t_final`.
    #[pyo3(signature = (t_final, trials = 500, seed = 0))]
    fn verify(&self, t_final: f64, trials: usize, seed: u64) -> PyResult<(f64, bool)> {
        control::verify_null_inequality(&self.solve, self.solve.propagator(), t_final, trials, seed).map_err(err)
    }
}

/// A parsed scenario file.
#[pyclass(module = "conformable_py")]
struct Scenario {
    config: ScenarioConfig,
}

#[pymethods]
impl Scenario {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self { config: ScenarioConfig::parse(text).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { config: ScenarioConfig::load(&path).map_err(err)? })
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.config.seed
    }

    /// Runs `evolve`, `solve`, `control` or `verify`, returning the summary entries.
    #[pyo3(signature = (command, out_dir, seed = None))]
    fn run<'py>(
        &self,
        py: Python<'py>,
        command: &str,
        out_dir: PathBuf,
        seed: Option<u64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let pipeline = match command {
            "evolve" => Pipeline::Evolve { dump_table: false },
            "solve" => Pipeline::Solve,
            "control" => Pipeline::Control,
            "verify" => Pipeline::Verify,
            other => return Err(ConformableError::new_err(format!("[E_CONFIG] unknown command {other:?}"))),
        };
        let opts = RunOptions { out_dir, seed: seed.unwrap_or(self.config.seed) };
        let summary = run_scenario(&self.config, pipeline, &opts).map_err(err)?;
        let dict = PyDict::new(py);
        for (k, v) in summary.entries() {
            dict.set_item(k, v)?;
        }
        Ok(dict)
    }
}

#[pymodule]
fn conformable_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ConformableError", m.py().get_type::<ConformableError>())?;
    m.add_function(wrap_pyfunction!(pochhammer, m)?)?;
    m.add_function(wrap_pyfunction!(conformable_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(conformable_beta, m)?)?;
    m.add_function(wrap_pyfunction!(n_constant, m)?)?;
    m.add_class::<Propagator>()?;
    m.add_class::<Gramian>()?;
    m.add_class::<Scenario>()?;
    Ok(())
}
