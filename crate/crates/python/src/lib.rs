//! Python bindings: models, curvature tables, rankings and the transport and
//! shortest-path primitives.

use std::path::PathBuf;

use neural_ricci::curvature::{
    orc_generic, solve_transport, CostMode, CurvatureConfig, GroundMetric, NeighborMode, WeightedDigraph,
};
use neural_ricci::data::Dataset;
use neural_ricci::graph::{layered_shortest_paths as shortest_paths, CostMatrixStack, DenseMatrix, NeuralGraph};
use neural_ricci::nn::forward::{forward, predict};
use neural_ricci::nn::io::{load_model, save_model};
use neural_ricci::nn::{accuracy, Activation, ModelSpec};
use neural_ricci::pruning::PruneMask;
use neural_ricci::ranking::{curvature_table as table, rank_by_curvature};
use neural_ricci::Error;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Dataset { .. } => PyIOError::new_err(e.to_string()),
        Error::InvalidInput(_)
        | Error::Precondition(_)
        | Error::Config(_)
        | Error::Format(_)
        | Error::Version { .. }
        | Error::Checksum { .. }
        | Error::Json(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(PyValueError::new_err)
}

fn row_major(rows: usize, cols: usize, m: &[Vec<f64>]) -> PyResult<Vec<f64>> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!("expected a {rows} x {cols} matrix")));
    }
    Ok(m.concat())
}

/// A feedforward network.
#[pyclass(name = "Model", module = "neural_ricci_py")]
struct PyModel {
    inner: ModelSpec,
}

#[pymethods]
impl PyModel {
    /// Dense network with the given widths and He-uniform initialization.
    #[staticmethod]
    #[pyo3(signature = (widths, activation = "relu", seed = 0))]
    fn mlp(widths: Vec<usize>, activation: &str, seed: u64) -> PyResult<Self> {
        let act: Activation = parse(activation)?;
        Ok(PyModel {
            inner: ModelSpec::mlp(&widths, act, seed).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: load_model(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_model(&self.inner, &path).map_err(py_err)
    }

    #[getter]
    fn weight_count(&self) -> usize {
        self.inner.weight_count()
    }

    #[getter]
    fn layer_sizes(&self) -> Vec<usize> {
        self.inner.layer_sizes()
    }

    #[getter]
    fn activation(&self) -> &'static str {
        self.inner.activation.name()
    }

    /// SHA-256 of the parameters, as hex.
    #[getter]
    fn hash(&self) -> String {
        self.inner.hash_hex()
    }

    /// All weights in parameter-id order.
    fn weights(&self) -> Vec<f64> {
        self.inner.flat_weights()
    }

    fn logits(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(forward(&self.inner, &x).map_err(py_err)?.0)
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<usize> {
        predict(&self.inner, &x).map_err(py_err)
    }

    fn accuracy(&self, py: Python<'_>, inputs: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
        let data = Dataset::new(inputs, labels, self.inner.output_dims).map_err(py_err)?;
        Ok(py.detach(|| accuracy(&self.inner, &data)))
    }

    /// Copy with the first `count` weights of `order` set to zero.
    fn pruned(&self, order: Vec<usize>, count: usize) -> PyResult<Self> {
        let n = self.inner.weight_count();
        if count > order.len() || order.iter().any(|&p| p >= n) {
            return Err(PyValueError::new_err(
                "order must hold weight ids and cover count entries",
            ));
        }
        Ok(PyModel {
            inner: PruneMask::from_order(n, &order, count).apply(&self.inner),
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(layers={:?}, activation='{}', weights={})",
            self.inner.layer_sizes(),
            self.inner.activation.name(),
            self.inner.weight_count()
        )
    }
}

fn curvature_config(alpha: f64, neighbors: &str, edge_cost: &str, ground_metric: &str) -> PyResult<CurvatureConfig> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(PyValueError::new_err("alpha must lie in (0, 1)"));
    }
    Ok(CurvatureConfig {
        alpha,
        neighbors: parse::<NeighborMode>(neighbors)?,
        cost: parse::<CostMode>(edge_cost)?,
        ground: parse::<GroundMetric>(ground_metric)?,
    })
}

fn calibration(model: &ModelSpec, inputs: Vec<Vec<f64>>) -> PyResult<Dataset> {
    let labels = vec![0; inputs.len()];
    Dataset::new(inputs, labels, model.output_dims.max(1)).map_err(py_err)
}

/// Per-weight curvature (minimum over examples and induced edges), in
/// parameter-id order, and whether each value is a sentinel.
#[pyfunction]
#[pyo3(signature = (model, inputs, alpha = 0.9, neighbors = "neural", edge_cost = "neural", ground_metric = "static-override"))]
fn curvature_table(
    py: Python<'_>,
    model: &PyModel,
    inputs: Vec<Vec<f64>>,
    alpha: f64,
    neighbors: &str,
    edge_cost: &str,
    ground_metric: &str,
) -> PyResult<(Vec<f64>, Vec<bool>)> {
    let cfg = curvature_config(alpha, neighbors, edge_cost, ground_metric)?;
    let calib = calibration(&model.inner, inputs)?;
    let m = &model.inner;
    let t = py
        .detach(|| {
            let graph = NeuralGraph::build(m)?;
            table(m, &graph, &calib, &cfg, false)
        })
        .map_err(py_err)?
        .0;
    Ok((
        t.entries.iter().map(|e| e.kappa_min).collect(),
        t.entries.iter().map(|e| e.sentinel).collect(),
    ))
}

/// Weight ids ordered for removal, highest curvature first.
#[pyfunction]
#[pyo3(signature = (model, inputs, alpha = 0.9, neighbors = "neural", edge_cost = "neural", ground_metric = "static-override"))]
fn rank(
    py: Python<'_>,
    model: &PyModel,
    inputs: Vec<Vec<f64>>,
    alpha: f64,
    neighbors: &str,
    edge_cost: &str,
    ground_metric: &str,
) -> PyResult<Vec<usize>> {
    let cfg = curvature_config(alpha, neighbors, edge_cost, ground_metric)?;
    let calib = calibration(&model.inner, inputs)?;
    let m = &model.inner;
    let (t, _) = py
        .detach(|| {
            let graph = NeuralGraph::build(m)?;
            table(m, &graph, &calib, &cfg, false)
        })
        .map_err(py_err)?;
    Ok(rank_by_curvature(&t, m).order)
}

/// Minimum transport cost between supply `a` and demand `b`.
#[pyfunction]
fn wasserstein(a: Vec<f64>, b: Vec<f64>, cost: Vec<Vec<f64>>) -> PyResult<f64> {
    let c = row_major(a.len(), b.len(), &cost)?;
    Ok(solve_transport(&a, &b, &c).map_err(py_err)?.cost)
}

/// Optimal plan as `(cost, [(row, col, flow), ...])` over the basic cells.
#[pyfunction]
fn transport_plan(a: Vec<f64>, b: Vec<f64>, cost: Vec<Vec<f64>>) -> PyResult<(f64, Vec<(usize, usize, f64)>)> {
    let c = row_major(a.len(), b.len(), &cost)?;
    let plan = solve_transport(&a, &b, &c).map_err(py_err)?;
    Ok((plan.cost, plan.flows))
}

/// Ollivier-Ricci curvature of edge `u -> v` on a weighted graph with
/// vertices `0..n`.
#[pyfunction]
#[pyo3(signature = (n, edges, u, v, alpha = 0.0, undirected = true))]
fn ollivier_ricci(
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    u: usize,
    v: usize,
    alpha: f64,
    undirected: bool,
) -> PyResult<f64> {
    let mut g = WeightedDigraph::new(n);
    for (a, b, w) in edges {
        if undirected {
            g.add_undirected(a, b, w)
        } else {
            g.add_edge(a, b, w)
        }
        .map_err(py_err)?;
    }
    Ok(orc_generic(&g, u, v, alpha).map_err(py_err)?.value)
}

/// Shortest distances from layer `k` to layer `l` through the cost
/// matrices (`matrices[i]` maps layer `i` to `i + 1`; `inf` for no edge).
#[pyfunction]
fn layered_shortest_paths(matrices: Vec<Vec<Vec<f64>>>, k: usize, l: usize) -> PyResult<Vec<Vec<f64>>> {
    let dense = matrices
        .iter()
        .map(|m| {
            let cols = m.first().map_or(0, |r| r.len());
            Ok(DenseMatrix {
                rows: m.len(),
                cols,
                data: row_major(m.len(), cols, m)?,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let stack = CostMatrixStack::from_matrices(dense).map_err(py_err)?;
    let d = shortest_paths(&stack, k, l, None).map_err(py_err)?;
    Ok((0..d.rows).map(|i| d.row(i).to_vec()).collect())
}

#[pymodule]
fn neural_ricci_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(curvature_table, m)?)?;
    m.add_function(wrap_pyfunction!(rank, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein, m)?)?;
    m.add_function(wrap_pyfunction!(transport_plan, m)?)?;
    m.add_function(wrap_pyfunction!(ollivier_ricci, m)?)?;
    m.add_function(wrap_pyfunction!(layered_shortest_paths, m)?)?;
    Ok(())
}
