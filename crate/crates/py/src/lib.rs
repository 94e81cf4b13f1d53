//! Python bindings. Node ids are 1-based on this side, as in the JSON files.

use popnet_core::bounds::{compute_bounds_with, BoundsOptions, LowerBoundOptions};
use popnet_core::model::{is_nash_with, nash_gap_with, SUPPORT_EPSILON};
use popnet_core::reduction::eventually_empty_nodes;
use popnet_core::scenarios::{self, Family};
use popnet_core::{
    reduce_graph, social_utility, solve_p1, ChoiceGraph, DynamicsKind, IntegratorConfig,
    NodePayoff, PayoffSpec, PopulationState,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_python<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (value.to_string(),))
}

fn zero_based(nodes: &[usize], n: usize) -> PyResult<Vec<usize>> {
    nodes
        .iter()
        .map(|&i| {
            if (1..=n).contains(&i) {
                Ok(i - 1)
            } else {
                Err(PyValueError::new_err(format!("node {i} is outside 1..={n}")))
            }
        })
        .collect()
}

/// A choice network with quadratic payoffs and an initial population.
#[pyclass(name = "Instance", module = "popnet", from_py_object)]
#[derive(Clone)]
pub struct PyInstance {
    inner: popnet_core::Instance,
}

impl PyInstance {
    fn state(&self, x: Option<Vec<f64>>) -> PyResult<PopulationState> {
        match x {
            None => Ok(self.inner.x0.clone()),
            Some(x) => {
                if x.len() != self.inner.node_count() {
                    return Err(PyValueError::new_err(format!(
                        "expected {} masses, got {}",
                        self.inner.node_count(),
                        x.len()
                    )));
                }
                PopulationState::from_fractions(x).map_err(value_err)
            }
        }
    }
}

#[pymethods]
impl PyInstance {
    #[new]
    fn new(edges: Vec<(usize, usize)>, a: Vec<f64>, c: Vec<f64>, x0: Vec<f64>) -> PyResult<Self> {
        let n = a.len();
        let edges = edges
            .into_iter()
            .map(|(i, j)| {
                let e = zero_based(&[i, j], n)?;
                Ok((e[0], e[1]))
            })
            .collect::<PyResult<Vec<_>>>()?;
        let graph = ChoiceGraph::new(n, edges).map_err(value_err)?;
        let payoffs = PayoffSpec::quadratic(&a, &c).map_err(value_err)?;
        let x0 = PopulationState::from_fractions(x0).map_err(value_err)?;
        let inner = popnet_core::Instance::new(graph, payoffs, x0).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = popnet_core::Instance::from_json(text).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = popnet_core::Instance::load(path).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// One of the bundled fixtures, see `scenario_names()`.
    #[staticmethod]
    fn scenario(name: &str) -> PyResult<Self> {
        let inner = scenarios::scenario(name).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn nodes(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.graph.edges().iter().map(|&(i, j)| (i + 1, j + 1)).collect()
    }

    #[getter]
    fn x0(&self) -> Vec<f64> {
        self.inner.x0.x().to_vec()
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.inner.x0.rho()
    }

    /// Payoff parameters as `(a, c)` pairs.
    #[getter]
    fn payoffs(&self) -> Vec<(f64, f64)> {
        self.inner
            .payoffs
            .nodes()
            .iter()
            .map(|p| match *p {
                NodePayoff::Quadratic { a, c } => (a, c),
            })
            .collect()
    }

    #[pyo3(signature = (x=None))]
    fn social_utility(&self, x: Option<Vec<f64>>) -> PyResult<f64> {
        Ok(social_utility(&self.state(x)?, &self.inner.payoffs))
    }

    #[pyo3(signature = (x=None, tol=1e-4, support_epsilon=SUPPORT_EPSILON))]
    fn is_nash(&self, x: Option<Vec<f64>>, tol: f64, support_epsilon: f64) -> PyResult<bool> {
        let x = self.state(x)?;
        Ok(is_nash_with(&x, &self.inner.graph, &self.inner.payoffs, tol, support_epsilon))
    }

    #[pyo3(signature = (x=None, support_epsilon=SUPPORT_EPSILON))]
    fn nash_gap(&self, x: Option<Vec<f64>>, support_epsilon: f64) -> PyResult<f64> {
        let x = self.state(x)?;
        Ok(nash_gap_with(&x, &self.inner.graph, &self.inner.payoffs, support_epsilon))
    }

    /// Best split of `rho` over `nodes`: dict with `x`, `level` and `value`.
    fn solve_p1<'py>(&self, py: Python<'py>, nodes: Vec<usize>, rho: f64) -> PyResult<Bound<'py, PyDict>> {
        let idx = zero_based(&nodes, self.inner.node_count())?;
        let r = solve_p1(&idx, &self.inner.payoffs, rho).map_err(value_err)?;
        let d = PyDict::new(py);
        d.set_item("nodes", nodes)?;
        d.set_item("x", r.x_star)?;
        d.set_item("level", r.level)?;
        d.set_item("value", r.value)?;
        Ok(d)
    }

    /// Integrate `"ssd"`, `"nbrd"` or `"nrpm"` from `x0`.
    #[pyo3(signature = (dynamics, step=1e-2, t_max=1e4, eq_tol=1e-8, record_every=10))]
    fn simulate(
        &self,
        py: Python<'_>,
        dynamics: &str,
        step: f64,
        t_max: f64,
        eq_tol: f64,
        record_every: usize,
    ) -> PyResult<Trajectory> {
        let kind: DynamicsKind = dynamics.parse().map_err(PyValueError::new_err)?;
        let config = IntegratorConfig {
            step,
            t_max,
            eq_tol,
            record_every,
            ..IntegratorConfig::default()
        };
        let inst = &self.inner;
        let flow = inst.flow();
        let tr = py
            .detach(|| popnet_core::simulate(kind, &inst.x0, &flow, &inst.payoffs, config))
            .map_err(runtime_err)?;
        Ok(Trajectory { inner: tr })
    }

    /// Bound report as a dict, same layout as the CLI's `bounds.json`.
    #[pyo3(signature = (enum_budget=None))]
    fn bounds<'py>(&self, py: Python<'py>, enum_budget: Option<u128>) -> PyResult<Bound<'py, PyAny>> {
        let mut opts = BoundsOptions::default();
        if let Some(budget) = enum_budget {
            opts.lower = LowerBoundOptions { budget, ..opts.lower };
        }
        let inst = &self.inner;
        let report = py
            .detach(|| compute_bounds_with(&inst.graph, &inst.x0, &inst.payoffs, opts))
            .map_err(runtime_err)?;
        to_python(py, &report.to_json())
    }

    /// Reduced graph: kept nodes, arcs, per-node caps `theta`, eventually empty nodes.
    fn reduce<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let red = reduce_graph(&self.inner.flow(), &self.inner.x0, &self.inner.payoffs);
        let d = PyDict::new(py);
        d.set_item("kept_nodes", red.kept_nodes.iter().map(|i| i + 1).collect::<Vec<_>>())?;
        d.set_item(
            "arcs",
            red.digraph.arcs().map(|(i, j)| (i + 1, j + 1)).collect::<Vec<_>>(),
        )?;
        d.set_item("theta", red.theta.clone())?;
        d.set_item(
            "eventually_empty",
            eventually_empty_nodes(&red).into_iter().map(|i| i + 1).collect::<Vec<_>>(),
        )?;
        d.set_item("dot", red.to_dot())?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(nodes={}, edges={}, rho={})",
            self.inner.node_count(),
            self.inner.graph.edges().len(),
            self.inner.x0.rho()
        )
    }
}

#[pyclass(module = "popnet", frozen)]
pub struct Trajectory {
    inner: popnet_core::Trajectory,
}

#[pymethods]
impl Trajectory {
    #[getter]
    fn dynamics(&self) -> String {
        self.inner.kind.to_string()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    #[getter]
    fn states(&self) -> Vec<Vec<f64>> {
        self.inner.states.clone()
    }

    #[getter]
    fn utilities(&self) -> Vec<f64> {
        self.inner.utilities.clone()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn final_time(&self) -> f64 {
        self.inner.final_time
    }

    #[getter]
    fn steady_state(&self) -> Vec<f64> {
        self.inner.steady_state.clone()
    }

    #[getter]
    fn utility(&self) -> f64 {
        self.inner.final_utility
    }

    #[getter]
    fn diagnostics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &serde_json::to_value(&self.inner.diagnostics).map_err(runtime_err)?)
    }

    fn __repr__(&self) -> String {
        format!(
            "Trajectory({}, U={:.6}, converged={}, t={})",
            self.inner.kind, self.inner.final_utility, self.inner.converged, self.inner.final_time
        )
    }
}

/// Seeded random instance; `family` is "random", "chain" or "qch".
#[pyfunction]
#[pyo3(signature = (seed, nodes, family="random"))]
fn generate(seed: u64, nodes: usize, family: &str) -> PyResult<PyInstance> {
    if nodes == 0 {
        return Err(PyValueError::new_err("nodes must be at least 1"));
    }
    let family: Family = family.parse().map_err(PyValueError::new_err)?;
    Ok(PyInstance {
        inner: scenarios::generate(seed, nodes, family),
    })
}

#[pyfunction]
fn scenario_names() -> Vec<&'static str> {
    scenarios::scenario_names().collect()
}

#[pymodule]
fn popnet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<Trajectory>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_names, m)?)?;
    Ok(())
}
