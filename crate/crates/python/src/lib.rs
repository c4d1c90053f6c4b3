//! Python bindings for the rubikroute solver.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rubikroute::cli::PlanDoc;
use rubikroute::grid::{Coord, Grid3D, ObstaclePattern};
use rubikroute::instance::{self, Instance, PatternKind, PatternSpec};
use rubikroute::solver::{self, Plan, SolverOptions};
use rubikroute::validate as audit;

type Xyz = (u16, u16, u16);

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_xyz(c: &Coord) -> Xyz {
    (c.x, c.y, c.z)
}

fn to_coord((x, y, z): Xyz) -> Coord {
    Coord::new(x, y, z)
}

fn make_grid(m1: usize, m2: usize, m3: usize, buildings: bool) -> PyResult<Grid3D> {
    let pattern = if buildings {
        ObstaclePattern::Buildings
    } else {
        ObstaclePattern::None
    };
    Grid3D::with_pattern(m1, m2, m3, pattern).map_err(err)
}

/// A 3D grid whose sides are multiples of 3, optionally with building columns.
#[pyclass(name = "Grid", module = "pyrubikroute", frozen)]
struct PyGrid {
    inner: Grid3D,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (m1, m2, m3, buildings = false))]
    fn new(m1: usize, m2: usize, m3: usize, buildings: bool) -> PyResult<Self> {
        Ok(PyGrid {
            inner: make_grid(m1, m2, m3, buildings)?,
        })
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        self.inner.dims()
    }

    #[getter]
    fn capacity(&self) -> usize {
        self.inner.capacity()
    }

    #[getter]
    fn num_vertices(&self) -> usize {
        self.inner.num_vertices()
    }

    fn is_free(&self, c: Xyz) -> bool {
        let c = to_coord(c);
        self.inner.in_bounds(c) && self.inner.is_free(c)
    }

    /// Shortest-path distance between two free cells.
    fn distance(&self, a: Xyz, b: Xyz) -> PyResult<usize> {
        let (a, b) = (to_coord(a), to_coord(b));
        if !self.is_free(to_xyz(&a)) || !self.is_free(to_xyz(&b)) {
            return Err(PyValueError::new_err("both cells must be free and in bounds"));
        }
        Ok(self.inner.distance(a, b))
    }

    fn __repr__(&self) -> String {
        let (m1, m2, m3) = self.inner.dims();
        format!("Grid({m1}, {m2}, {m3}, buildings={})", self.inner.has_buildings())
    }
}

/// A labeled routing instance: one start and one goal per robot.
#[pyclass(name = "Instance", module = "pyrubikroute", frozen)]
struct PyInstance {
    inner: Instance,
}

#[pymethods]
impl PyInstance {
    #[new]
    #[pyo3(signature = (grid, starts, goals, seed = 0))]
    fn new(grid: &PyGrid, starts: Vec<Xyz>, goals: Vec<Xyz>, seed: u64) -> PyResult<Self> {
        let starts = starts.into_iter().map(to_coord).collect();
        let goals = goals.into_iter().map(to_coord).collect();
        let inner = Instance::new(grid.inner.clone(), starts, goals, seed).map_err(err)?;
        Ok(PyInstance { inner })
    }

    /// Random instance; `pattern` is "uniform", "rings" or "blocks".
    #[staticmethod]
    #[pyo3(signature = (m1, m2, m3, density, seed = 0, pattern = "uniform", buildings = false))]
    fn generate(
        m1: usize,
        m2: usize,
        m3: usize,
        density: f64,
        seed: u64,
        pattern: &str,
        buildings: bool,
    ) -> PyResult<Self> {
        let kind = match pattern {
            "uniform" => PatternKind::UniformRandom,
            "rings" => PatternKind::Rings,
            "blocks" => PatternKind::Blocks,
            other => return Err(PyValueError::new_err(format!("unknown pattern {other:?}"))),
        };
        let grid = make_grid(m1, m2, m3, buildings)?;
        let inner = instance::generate(&grid, PatternSpec { kind, density }, seed).map_err(err)?;
        Ok(PyInstance { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = instance::load(text.as_bytes()).map_err(err)?;
        Ok(PyInstance { inner })
    }

    fn to_json(&self) -> String {
        String::from_utf8(instance::save(&self.inner)).expect("JSON is UTF-8")
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid {
            inner: self.inner.grid.clone(),
        }
    }

    #[getter]
    fn starts(&self) -> Vec<Xyz> {
        self.inner.starts[..self.inner.num_real()].iter().map(to_xyz).collect()
    }

    #[getter]
    fn goals(&self) -> Vec<Xyz> {
        self.inner.goals[..self.inner.num_real()].iter().map(to_xyz).collect()
    }

    #[getter]
    fn num_robots(&self) -> usize {
        self.inner.num_real()
    }

    /// Largest start-to-goal distance, a lower bound on any makespan.
    fn lower_bound(&self) -> usize {
        solver::lower_bound(&self.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.num_real()
    }
}

/// A collision-free plan for the real robots of an instance.
#[pyclass(name = "Plan", module = "pyrubikroute", frozen)]
struct PyPlan {
    inner: Plan,
}

#[pymethods]
impl PyPlan {
    #[getter]
    fn makespan(&self) -> usize {
        self.inner.makespan
    }

    #[getter]
    fn lower_bound(&self) -> usize {
        self.inner.lower_bound
    }

    #[getter]
    fn ratio(&self) -> f64 {
        self.inner.ratio
    }

    #[getter]
    fn paths(&self) -> Vec<Vec<Xyz>> {
        self.inner
            .paths
            .iter()
            .map(|p| p.iter().map(to_xyz).collect())
            .collect()
    }

    /// Stage durations, or None when they were not recorded.
    #[getter]
    fn phases<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyDict>>> {
        let Some(ph) = self.inner.phases else {
            return Ok(None);
        };
        let d = PyDict::new(py);
        d.set_item("unlabeled1", ph.unlabeled1)?;
        d.set_item("z1", ph.z1)?;
        d.set_item("xy", ph.xy)?;
        d.set_item("z2", ph.z2)?;
        d.set_item("unlabeled2", ph.unlabeled2)?;
        Ok(Some(d))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&PlanDoc::from(&self.inner)).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Plan(robots={}, makespan={}, lower_bound={}, ratio={:.4})",
            self.inner.paths.len(),
            self.inner.makespan,
            self.inner.lower_bound,
            self.inner.ratio
        )
    }
}

/// Solves an instance; `algo` is "rth3d" or "rth3d-lba".
#[pyfunction]
#[pyo3(signature = (instance, algo = "rth3d-lba"))]
fn solve(py: Python<'_>, instance: &PyInstance, algo: &str) -> PyResult<PyPlan> {
    let lba = match algo {
        "rth3d" => false,
        "rth3d-lba" => true,
        other => return Err(PyValueError::new_err(format!("unknown algorithm {other:?}"))),
    };
    let opts = SolverOptions {
        lba,
        record_phases: true,
    };
    let inst = &instance.inner;
    let inner = py.detach(|| solver::solve(inst, opts)).map_err(err)?;
    Ok(PyPlan { inner })
}

/// Audits paths against an instance. Returns a dict with keys ok, makespan,
/// lower_bound, ratio and violations (a list of (kind, timestep, robots)).
#[pyfunction]
fn validate<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    paths: Vec<Vec<Xyz>>,
) -> PyResult<Bound<'py, PyDict>> {
    let paths: Vec<Vec<Coord>> = paths
        .into_iter()
        .map(|p| p.into_iter().map(to_coord).collect())
        .collect();
    let report = audit::validate(&instance.inner, &paths);
    let d = PyDict::new(py);
    d.set_item("ok", report.ok)?;
    d.set_item("makespan", report.makespan)?;
    d.set_item("lower_bound", report.lower_bound)?;
    d.set_item("ratio", report.ratio)?;
    let violations: Vec<(String, usize, Vec<usize>)> = report
        .violations
        .iter()
        .map(|v| (format!("{:?}", v.kind), v.timestep, v.robots.clone()))
        .collect();
    d.set_item("violations", violations)?;
    Ok(d)
}

#[pymodule]
fn pyrubikroute(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyInstance>()?;
    m.add_class::<PyPlan>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
