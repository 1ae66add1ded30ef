//! Python bindings: datasets, splits, configuration, training and the
//! evaluation helpers. Structured results come back as plain dicts/lists.

use std::path::PathBuf;

use highway_core::dataio::{self, LoadOptions};
use highway_core::eval::{self, GridPoint};
use highway_core::synthetic::{self, SyntheticSpec};
use highway_core::{
    DataSplit, Hops, HighwayConfig, HighwayError, ModelOutput, PairSampling, PairStrategy, SparseGraph,
    TrainingMode,
};
use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict};

fn err(e: HighwayError) -> PyErr {
    match e {
        HighwayError::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Serializable value → Python object via the `json` module.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn hops_to_py(h: Hops) -> Option<u32> {
    h.finite()
}

#[pyclass(name = "Graph", module = "highway_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGraph {
    inner: SparseGraph,
}

#[pymethods]
impl PyGraph {
    #[new]
    fn new(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(PyGraph {
            inner: SparseGraph::from_edges(n, edges).map_err(err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    /// Undirected edges as `(i, j)` with `i < j`.
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().collect()
    }

    fn neighbors(&self, i: usize) -> PyResult<Vec<usize>> {
        if i >= self.inner.n() {
            return Err(err(HighwayError::IndexOutOfRange { index: i, n: self.inner.n() }));
        }
        Ok(self.inner.neighbors(i).to_vec())
    }

    fn add_edges(&self, additions: Vec<(usize, usize)>) -> PyResult<PyGraph> {
        Ok(PyGraph {
            inner: self.inner.add_edges(&additions).map_err(err)?,
        })
    }

    /// Dense `D^-1/2 (A + I) D^-1/2` as nested lists.
    fn normalized(&self) -> Vec<Vec<f64>> {
        self.inner.normalize().to_dense().outer_iter().map(|r| r.to_vec()).collect()
    }

    /// Hop counts from `source`; `None` for unreachable nodes.
    fn bfs(&self, source: usize) -> PyResult<Vec<Option<u32>>> {
        if source >= self.inner.n() {
            return Err(err(HighwayError::IndexOutOfRange { index: source, n: self.inner.n() }));
        }
        Ok(self.inner.bfs_from(source).into_iter().map(hops_to_py).collect())
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, edges={})", self.inner.n(), self.inner.num_edges())
    }
}

#[pyclass(name = "Dataset", module = "highway_py", frozen)]
struct PyDataset {
    inner: dataio::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Loads a canonical directory (`nodes.tsv`, `edges.tsv`).
    #[staticmethod]
    #[pyo3(signature = (path, normalize_features = true))]
    fn load(py: Python<'_>, path: PathBuf, normalize_features: bool) -> PyResult<Self> {
        let opts = LoadOptions { normalize_features };
        let inner = py.detach(|| dataio::load_canonical_with(&path, opts)).map_err(err)?;
        Ok(PyDataset { inner })
    }

    /// Seeded generator of ring-structured citation-like graphs.
    #[staticmethod]
    #[pyo3(signature = (classes = 4, nodes_per_class = 150, features = 400, homophily = 0.85, topic_prob = 0.3, seed = 0))]
    fn synthetic(
        classes: usize,
        nodes_per_class: usize,
        features: usize,
        homophily: f64,
        topic_prob: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let spec = SyntheticSpec {
            classes,
            nodes_per_class,
            features,
            homophily,
            topic_prob,
            seed,
            ..SyntheticSpec::default()
        };
        Ok(PyDataset {
            inner: synthetic::generate(&spec).map_err(err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn num_features(&self) -> usize {
        self.inner.num_features()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels.clone()
    }

    #[getter]
    fn label_names(&self) -> Vec<String> {
        self.inner.label_names.clone()
    }

    #[getter]
    fn node_ids(&self) -> Vec<String> {
        self.inner.node_ids.clone()
    }

    #[getter]
    fn graph(&self) -> PyGraph {
        PyGraph {
            inner: self.inner.graph.clone(),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, edges={}, classes={}, features={})",
            self.inner.n(),
            self.inner.graph.num_edges(),
            self.inner.num_classes(),
            self.inner.num_features()
        )
    }
}

#[pyclass(name = "Split", module = "highway_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySplit {
    inner: DataSplit,
}

#[pymethods]
impl PySplit {
    #[new]
    fn new(mut train: Vec<usize>, mut valid: Vec<usize>, mut test: Vec<usize>) -> Self {
        train.sort_unstable();
        valid.sort_unstable();
        test.sort_unstable();
        PySplit {
            inner: DataSplit {
                train,
                valid,
                test,
                seed: None,
            },
        }
    }

    #[getter]
    fn train(&self) -> Vec<usize> {
        self.inner.train.clone()
    }

    #[getter]
    fn valid(&self) -> Vec<usize> {
        self.inner.valid.clone()
    }

    #[getter]
    fn test(&self) -> Vec<usize> {
        self.inner.test.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Split(train={}, valid={}, test={})",
            self.inner.train.len(),
            self.inner.valid.len(),
            self.inner.test.len()
        )
    }
}

#[pyclass(name = "Config", module = "highway_py", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: HighwayConfig,
}

/// Text form of a Python value as the config parser expects it.
fn config_text(value: &Bound<'_, PyAny>) -> PyResult<String> {
    if value.is_none() {
        Ok("auto".into())
    } else if let Ok(b) = value.cast::<PyBool>() {
        Ok(b.is_true().to_string())
    } else {
        Ok(value.str()?.to_string())
    }
}

#[pymethods]
impl PyConfig {
    /// Defaults, overridden by keyword arguments (`lambda_` for `lambda`).
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut cfg = PyConfig {
            inner: HighwayConfig::default(),
        };
        if let Some(kwargs) = kwargs {
            for (k, v) in kwargs.iter() {
                let key: String = k.extract()?;
                cfg.set(key.trim_end_matches('_'), &v)?;
            }
        }
        cfg.inner.validate().map_err(err)?;
        Ok(cfg)
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Ok(PyConfig {
            inner: HighwayConfig::from_file(path).map_err(err)?,
        })
    }

    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        let text = match (key, value.is_none()) {
            ("max_edges_per_row", true) => "none".to_string(),
            _ => config_text(value)?,
        };
        self.inner.set(key, &text).map_err(err)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __getitem__<'py>(&self, py: Python<'py>, key: &str) -> PyResult<Bound<'py, PyAny>> {
        let d = self.to_dict(py)?;
        d.get_item(key)
    }

    fn __repr__(&self) -> String {
        format!("Config({:?})", self.inner)
    }
}

#[pyclass(name = "TrainResult", module = "highway_py", frozen)]
struct PyTrainResult {
    result: highway_core::HighwayResult,
    split: DataSplit,
}

#[pymethods]
impl PyTrainResult {
    #[getter]
    fn test_acc(&self) -> f64 {
        self.result.test_acc
    }

    #[getter]
    fn valid_acc(&self) -> f64 {
        self.result.valid_acc
    }

    #[getter]
    fn selected_iteration(&self) -> usize {
        self.result.selected_iteration
    }

    #[getter]
    fn iterations<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.result.iterations)
    }

    #[getter]
    fn predicted(&self) -> Vec<usize> {
        self.result.output.predicted.clone()
    }

    #[getter]
    fn confidence(&self) -> Vec<f64> {
        self.result.output.confidence.clone()
    }

    /// Pre-softmax outputs, one row per node.
    #[getter]
    fn logits(&self) -> Vec<Vec<f64>> {
        self.result.output.logits.outer_iter().map(|r| r.to_vec()).collect()
    }

    /// Graph the selected iteration was trained on.
    #[getter]
    fn graph(&self) -> PyGraph {
        PyGraph {
            inner: self.result.graph.clone(),
        }
    }

    /// Test accuracy per hop distance to the nearest same-category
    /// training node, measured on `dataset`'s original graph.
    fn hop_buckets<'py>(&self, py: Python<'py>, dataset: &PyDataset) -> PyResult<Bound<'py, PyAny>> {
        let ds = &dataset.inner;
        let hops = highway_core::hop_distances(&ds.graph, &ds.labels, &self.split.train).map_err(err)?;
        to_py(py, &eval::hop_bucket_accuracy(&self.result.output, &ds.labels, &self.split.test, &hops))
    }

    fn export_embeddings(&self, dataset: &PyDataset, path: PathBuf) -> PyResult<()> {
        eval::export_embeddings(&self.result.output, &dataset.inner.labels, path).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "TrainResult(test_acc={:.4}, valid_acc={:.4}, iterations={})",
            self.result.test_acc,
            self.result.valid_acc,
            self.result.iterations.len()
        )
    }
}

fn parse_mode(mode: &str) -> PyResult<TrainingMode> {
    mode.parse().map_err(err)
}

fn parse_sampling(sampling: Option<&str>, pair_count: usize) -> PyResult<PairSampling> {
    Ok(match sampling {
        None => PairSampling::FullGrid,
        Some(s) => PairSampling::Strategy {
            strategy: s.parse::<PairStrategy>().map_err(err)?,
            count: pair_count,
        },
    })
}

/// Converts `.content` / `.cites` files into a canonical directory and
/// returns the conversion counts.
#[pyfunction]
fn convert<'py>(py: Python<'py>, content: PathBuf, cites: PathBuf, out: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let summary = py
        .detach(|| dataio::convert_citation_files(&content, &cites, &out))
        .map_err(err)?;
    to_py(py, &summary)
}

#[pyfunction]
#[pyo3(signature = (dataset, seed = 0, train_per_class = 20))]
fn random_split(dataset: &PyDataset, seed: u64, train_per_class: usize) -> PyResult<PySplit> {
    Ok(PySplit {
        inner: dataio::random_split(&dataset.inner, seed, train_per_class).map_err(err)?,
    })
}

#[pyfunction]
fn standard_split(dataset: &PyDataset, path: PathBuf) -> PyResult<PySplit> {
    Ok(PySplit {
        inner: dataio::standard_split(&dataset.inner, path).map_err(err)?,
    })
}

/// Runs the outer loop. `mode` is one of typical, highway, no-joint,
/// no-explicit; `sampling` picks a pair strategy instead of the full grid.
#[pyfunction]
#[pyo3(signature = (dataset, split, config = None, mode = "highway", sampling = None, pair_count = 100_000))]
fn train(
    py: Python<'_>,
    dataset: &PyDataset,
    split: &PySplit,
    config: Option<&PyConfig>,
    mode: &str,
    sampling: Option<&str>,
    pair_count: usize,
) -> PyResult<PyTrainResult> {
    let base = config.map(|c| c.inner.clone()).unwrap_or_default();
    let cfg = parse_mode(mode)?.apply(&base);
    let sampling = parse_sampling(sampling, pair_count)?;
    let ds = &dataset.inner;
    let split = split.inner.clone();
    let result = py
        .detach(|| highway_core::highway_train(ds, &split, &cfg, sampling))
        .map_err(err)?;
    Ok(PyTrainResult { result, split })
}

/// Seed-matrix sweep. `grid` is a list of `(label, {key: value})`.
#[pyfunction]
#[pyo3(signature = (dataset, grid, config = None, mode = "highway", split_seeds = vec![0, 1, 2, 3, 4], init_seeds = vec![0, 1, 2], jobs = 1))]
#[allow(clippy::too_many_arguments)]
fn sweep<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    grid: Vec<(String, Bound<'py, PyDict>)>,
    config: Option<&PyConfig>,
    mode: &str,
    split_seeds: Vec<u64>,
    init_seeds: Vec<u64>,
    jobs: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let mode = parse_mode(mode)?;
    let base = config.map(|c| c.inner.clone()).unwrap_or_default();
    let mut points = Vec::with_capacity(grid.len());
    for (label, overrides) in &grid {
        let mut kv = Vec::new();
        for (k, v) in overrides.iter() {
            kv.push((k.extract::<String>()?, config_text(&v)?));
        }
        points.push(GridPoint::new(label.clone(), kv));
    }
    let ds = &dataset.inner;
    let result = py
        .detach(|| eval::run_matrix(ds, &base, mode, &split_seeds, &init_seeds, &points, jobs))
        .map_err(err)?;
    to_py(py, &result)
}

/// Distance from each node to the nearest same-category training node;
/// `None` when unreachable.
#[pyfunction]
fn hop_distances(dataset: &PyDataset, train: Vec<usize>) -> PyResult<Vec<Option<u32>>> {
    let ds = &dataset.inner;
    let map = highway_core::hop_distances(&ds.graph, &ds.labels, &train).map_err(err)?;
    Ok(map.as_slice().iter().copied().map(hops_to_py).collect())
}

#[pyfunction]
fn accuracy(predicted: Vec<usize>, labels: Vec<usize>, nodes: Vec<usize>) -> PyResult<f64> {
    if predicted.len() != labels.len() || nodes.iter().any(|&i| i >= labels.len()) {
        return Err(PyValueError::new_err("predicted/labels length mismatch or node out of range"));
    }
    let mut out = ModelOutput::from_logits(Array2::zeros((predicted.len(), 1)));
    out.predicted = predicted;
    eval::accuracy(&out, &labels, &nodes).map_err(err)
}

/// `sigmoid(y_i · y_j)` for each requested pair.
#[pyfunction]
fn pair_scores(logits: Vec<Vec<f64>>, pairs: Vec<(usize, usize)>) -> PyResult<Vec<f64>> {
    let cols = logits.first().map_or(0, Vec::len);
    if logits.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged logits"));
    }
    let flat: Vec<f64> = logits.iter().flatten().copied().collect();
    let y = Array2::from_shape_vec((logits.len(), cols), flat)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    highway_core::gcn::pair_scores(&y.view(), &pairs).map_err(err)
}

#[pymodule]
fn highway_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", highway_core::VERSION)?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PySplit>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyTrainResult>()?;
    m.add_function(wrap_pyfunction!(convert, m)?)?;
    m.add_function(wrap_pyfunction!(random_split, m)?)?;
    m.add_function(wrap_pyfunction!(standard_split, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(hop_distances, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(pair_scores, m)?)?;
    Ok(())
}
