//! Python bindings for `fincluster`.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use fincluster::cluster::{cut_dendrogram, hierarchical_complete, kmeans_dtw, ClusterAssignment, Dendrogram, KMeansConfig};
use fincluster::dtw::{self, DistanceMatrix, Normalization};
use fincluster::eval;
use fincluster::ingest::{self, CompanyPanel, Schema};
use fincluster::pipeline::{self, PipelineConfig, Stage};
use fincluster::ratios::{self, RatioTensor, ScalingMode};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn normalization(name: &str) -> PyResult<Normalization> {
    match name {
        "path_length" => Ok(Normalization::PathLength),
        "raw" => Ok(Normalization::Raw),
        other => Err(PyValueError::new_err(format!("unknown normalization `{other}`"))),
    }
}

fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

/// Loaded quarterly panel.
#[pyclass(name = "Panel", frozen)]
pub struct PyPanel {
    inner: CompanyPanel,
}

#[pymethods]
impl PyPanel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        ingest::load_panel(&path, &Schema::default()).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        ingest::parse_panel(text, &Schema::default()).map(|inner| Self { inner }).map_err(err)
    }

    #[getter]
    fn companies(&self) -> Vec<String> {
        self.inner.companies().to_vec()
    }

    #[getter]
    fn periods(&self) -> Vec<String> {
        self.inner.periods().iter().map(|p| p.to_string()).collect()
    }

    /// Ratio tensor in percent, optionally standardized (`"within_company"` or `"global"`).
    #[pyo3(signature = (scaling=None))]
    fn ratios(&self, scaling: Option<&str>) -> PyResult<PyRatios> {
        let raw = ratios::compute_ratios(&self.inner);
        let tensor = match scaling {
            None => raw,
            Some(s) => {
                let mode = match s {
                    "within_company" => ScalingMode::WithinCompany,
                    "global" => ScalingMode::Global,
                    other => return Err(PyValueError::new_err(format!("unknown scaling `{other}`"))),
                };
                ratios::apply_scaling(&raw, &ratios::fit_scaling(&raw, mode)).map_err(err)?
            }
        };
        Ok(PyRatios { inner: tensor })
    }

    fn __repr__(&self) -> String {
        format!("Panel(companies={}, periods={})", self.inner.n_companies(), self.inner.n_periods())
    }
}

#[pyclass(name = "Ratios", frozen)]
pub struct PyRatios {
    inner: RatioTensor,
}

#[pymethods]
impl PyRatios {
    #[getter]
    fn companies(&self) -> Vec<String> {
        self.inner.companies.clone()
    }

    #[getter]
    fn feature_names(&self) -> Vec<&'static str> {
        ratios::Feature::ALL.iter().map(|f| f.name()).collect()
    }

    /// Nested list indexed `[company][period][feature]`.
    fn values(&self) -> Vec<Vec<Vec<f64>>> {
        let f = ratios::Feature::COUNT;
        (0..self.inner.n_companies())
            .map(|c| self.inner.company_rows(c).chunks(f).map(<[f64]>::to_vec).collect())
            .collect()
    }
}

#[pyclass(name = "DistanceMatrix", frozen)]
pub struct PyDistanceMatrix {
    inner: DistanceMatrix,
}

#[pymethods]
impl PyDistanceMatrix {
    #[new]
    #[pyo3(signature = (rows, labels=None))]
    fn new(rows: Vec<Vec<f64>>, labels: Option<Vec<String>>) -> PyResult<Self> {
        let labels = labels.unwrap_or_else(|| default_labels(rows.len()));
        DistanceMatrix::from_rows(labels, &rows).map(|inner| Self { inner }).map_err(err)
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn get(&self, i: usize, j: usize) -> PyResult<f64> {
        let n = self.inner.len();
        if i >= n || j >= n {
            return Err(PyValueError::new_err(format!("index ({i}, {j}) out of range for {n} × {n}")));
        }
        Ok(self.inner.get(i, j))
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        let n = self.inner.len();
        (0..n).map(|i| (0..n).map(|j| self.inner.get(i, j)).collect()).collect()
    }
}

#[pyclass(name = "Dendrogram", frozen)]
pub struct PyDendrogram {
    inner: Dendrogram,
}

#[pymethods]
impl PyDendrogram {
    /// `(left, right, height, size)` per merge; merged node `s` gets id `n + s`.
    #[getter]
    fn merges(&self) -> Vec<(usize, usize, f64, usize)> {
        self.inner.merges.iter().map(|m| (m.left, m.right, m.height, m.size)).collect()
    }

    #[getter]
    fn leaf_order(&self) -> Vec<usize> {
        self.inner.leaf_order.clone()
    }

    fn cut(&self, m: usize) -> PyResult<Vec<usize>> {
        cut_dendrogram(&self.inner, m).map(|a| a.labels).map_err(err)
    }
}

/// DTW cost between two series, normalized by path length unless `normalization="raw"`.
#[pyfunction]
#[pyo3(signature = (a, b, normalization="path_length"))]
fn dtw_distance(a: Vec<f64>, b: Vec<f64>, normalization: &str) -> PyResult<f64> {
    dtw::distance(&a, &b, self::normalization(normalization)?).map_err(err)
}

/// Optimal warping path as `(i, j)` index pairs.
#[pyfunction]
fn dtw_path(a: Vec<f64>, b: Vec<f64>) -> PyResult<Vec<(usize, usize)>> {
    dtw::dtw_distance(&a, &b).map(|al| al.path.0).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (series, labels=None, normalization="path_length"))]
fn pairwise_distances(
    py: Python<'_>,
    series: Vec<Vec<f64>>,
    labels: Option<Vec<String>>,
    normalization: &str,
) -> PyResult<PyDistanceMatrix> {
    let norm = self::normalization(normalization)?;
    let labels = labels.unwrap_or_else(|| default_labels(series.len()));
    py.detach(|| dtw::pairwise_matrix(&labels, &series, norm))
        .map(|inner| PyDistanceMatrix { inner })
        .map_err(err)
}

/// Returns `(labels, barycenters, inertia, inertia_history)`.
#[pyfunction]
#[pyo3(signature = (series, m, seed=0, max_iter=50, barycenter_iters=10))]
fn kmeans(
    py: Python<'_>,
    series: Vec<Vec<f64>>,
    m: usize,
    seed: u64,
    max_iter: usize,
    barycenter_iters: usize,
) -> PyResult<(Vec<usize>, Vec<Vec<f64>>, f64, Vec<f64>)> {
    let cfg = KMeansConfig { m, seed, max_iter, barycenter_iters, ..KMeansConfig::default() };
    let r = py.detach(|| kmeans_dtw(&series, &cfg)).map_err(err)?;
    Ok((r.assignment.labels, r.barycenters, r.inertia, r.assignment.inertia_history))
}

#[pyfunction]
fn hierarchical(matrix: &PyDistanceMatrix) -> PyResult<PyDendrogram> {
    hierarchical_complete(&matrix.inner).map(|inner| PyDendrogram { inner }).map_err(err)
}

#[pyfunction]
fn silhouette_samples(matrix: &PyDistanceMatrix, labels: Vec<usize>) -> PyResult<Vec<f64>> {
    eval::silhouette_samples(&matrix.inner, &labels).map_err(err)
}

#[pyfunction]
fn silhouette(matrix: &PyDistanceMatrix, labels: Vec<usize>) -> PyResult<f64> {
    let m = labels.iter().max().map_or(0, |&l| l + 1);
    let assignment = ClusterAssignment {
        m,
        labels,
        method: fincluster::ClusterMethod::KmeansDtw,
        seed: None,
        inertia_history: Vec::new(),
    };
    assignment.validate().map_err(err)?;
    eval::silhouette_mean(&matrix.inner, &assignment).map_err(err)
}

#[pyfunction]
fn elbow_distortion(series: Vec<Vec<f64>>, labels: Vec<usize>, centers: Vec<Vec<f64>>) -> PyResult<f64> {
    eval::elbow_distortion(&series, &labels, &centers).map_err(err)
}

#[pyfunction]
fn adjusted_rand_index(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    if a.len() != b.len() {
        return Err(PyValueError::new_err(format!("label lengths differ: {} vs {}", a.len(), b.len())));
    }
    Ok(eval::adjusted_rand_index(&a, &b))
}

fn pipeline_config(config: Option<PathBuf>, workspace: Option<PathBuf>, seed: Option<u64>) -> PyResult<PipelineConfig> {
    let mut cfg = match config {
        Some(p) => PipelineConfig::load(&p).map_err(err)?,
        None => PipelineConfig::default(),
    };
    if let Some(w) = workspace {
        cfg.workspace = w;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// Runs one named stage; returns the workspace-relative output paths.
#[pyfunction]
#[pyo3(signature = (stage, config=None, workspace=None, seed=None))]
fn run_stage(
    py: Python<'_>,
    stage: &str,
    config: Option<PathBuf>,
    workspace: Option<PathBuf>,
    seed: Option<u64>,
) -> PyResult<Vec<String>> {
    let stage = Stage::from_name(stage).ok_or_else(|| PyValueError::new_err(format!("unknown stage `{stage}`")))?;
    let cfg = pipeline_config(config, workspace, seed)?;
    let m = py.detach(|| pipeline::run_stage(stage, &cfg)).map_err(err)?;
    Ok(m.outputs.into_iter().map(|a| a.path).collect())
}

/// Runs every stage; returns the stage names in order.
#[pyfunction]
#[pyo3(signature = (config=None, workspace=None, seed=None))]
fn run_all(
    py: Python<'_>,
    config: Option<PathBuf>,
    workspace: Option<PathBuf>,
    seed: Option<u64>,
) -> PyResult<Vec<String>> {
    let cfg = pipeline_config(config, workspace, seed)?;
    let ms = py.detach(|| pipeline::run_all(&cfg)).map_err(err)?;
    Ok(ms.into_iter().map(|m| m.stage.to_string()).collect())
}

#[pyfunction]
#[pyo3(signature = (companies=28, periods=41, seed=0))]
fn synthetic_panel(companies: usize, periods: usize, seed: u64) -> PyResult<String> {
    if companies == 0 || periods == 0 {
        return Err(PyValueError::new_err("companies and periods must be positive"));
    }
    Ok(fincluster::synth::synthetic_panel_csv(companies, periods, seed))
}

#[pymodule]
fn fincluster_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPanel>()?;
    m.add_class::<PyRatios>()?;
    m.add_class::<PyDistanceMatrix>()?;
    m.add_class::<PyDendrogram>()?;
    m.add_function(wrap_pyfunction!(dtw_distance, m)?)?;
    m.add_function(wrap_pyfunction!(dtw_path, m)?)?;
    m.add_function(wrap_pyfunction!(pairwise_distances, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(hierarchical, m)?)?;
    m.add_function(wrap_pyfunction!(silhouette_samples, m)?)?;
    m.add_function(wrap_pyfunction!(silhouette, m)?)?;
    m.add_function(wrap_pyfunction!(elbow_distortion, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_rand_index, m)?)?;
    m.add_function(wrap_pyfunction!(run_stage, m)?)?;
    m.add_function(wrap_pyfunction!(run_all, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_panel, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
