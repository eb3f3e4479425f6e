//! Python module `rgd`: manifolds, correlation metrics, the branching
//! generator and a compact training entry point.
//!
//! Matrices cross the boundary as lists of rows.

use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rgd_core::data::{generate_branching_diffusion, BranchingConfig, Dataset, OracleKind};
use rgd_core::manifold;
use rgd_core::metrics;
use rgd_core::noise::NoiseConfig;
use rgd_core::train::{self, Split, TrainConfig};
use rgd_core::ManifoldSpec;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must have equal length"));
    }
    Array2::from_shape_vec((n, d), rows.concat()).map_err(value_err)
}

fn to_rows(x: &Array2<f64>) -> Vec<Vec<f64>> {
    x.outer_iter().map(|r| r.to_vec()).collect()
}

/// A latent manifold.
#[pyclass(name = "Manifold", module = "rgd", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyManifold {
    spec: ManifoldSpec,
}

impl PyManifold {
    fn check(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.spec.ambient_dim() {
            return Err(PyValueError::new_err(format!(
                "expected {} coordinates, got {}",
                self.spec.ambient_dim(),
                x.len()
            )));
        }
        Ok(())
    }
}

#[pymethods]
impl PyManifold {
    #[staticmethod]
    fn euclidean(dim: usize) -> Self {
        PyManifold {
            spec: ManifoldSpec::euclidean(dim),
        }
    }

    #[staticmethod]
    fn sphere(dim: usize) -> Self {
        PyManifold {
            spec: ManifoldSpec::sphere(dim),
        }
    }

    /// Hyperboloid `<x, x>_L = -1/curvature`.
    #[staticmethod]
    #[pyo3(signature = (dim, curvature = 1.0))]
    fn lorentz(dim: usize, curvature: f64) -> PyResult<Self> {
        let spec = ManifoldSpec::lorentz(dim, curvature);
        spec.validate().map_err(value_err)?;
        Ok(PyManifold { spec })
    }

    #[staticmethod]
    fn torus() -> Self {
        PyManifold {
            spec: ManifoldSpec::torus(),
        }
    }

    #[getter]
    fn ambient_dim(&self) -> usize {
        self.spec.ambient_dim()
    }

    #[getter]
    fn intrinsic_dim(&self) -> usize {
        self.spec.intrinsic_dim()
    }

    #[getter]
    fn curvature(&self) -> Option<f64> {
        self.spec.curvature()
    }

    fn project(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&x)?;
        self.spec.project(&x).map_err(value_err)
    }

    fn exp_map(&self, x: Vec<f64>, v: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&x)?;
        self.check(&v)?;
        Ok(self.spec.exp_map(&x, &v))
    }

    fn log_map(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&x)?;
        self.check(&y)?;
        self.spec.log_map(&x, &y).map_err(value_err)
    }

    fn distance(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        self.check(&x)?;
        self.check(&y)?;
        Ok(self.spec.distance(&x, &y))
    }

    fn parallel_transport(&self, x: Vec<f64>, y: Vec<f64>, v: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&x)?;
        self.check(&y)?;
        self.check(&v)?;
        Ok(self.spec.parallel_transport(&x, &y, &v))
    }

    fn egrad2rgrad(&self, x: Vec<f64>, g: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&x)?;
        self.check(&g)?;
        Ok(self.spec.egrad2rgrad(&x, &g))
    }

    fn constraint_violation(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check(&x)?;
        Ok(self.spec.constraint_violation(&x))
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.spec).expect("serializable")
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec: ManifoldSpec = serde_json::from_str(text).map_err(value_err)?;
        spec.validate().map_err(value_err)?;
        Ok(PyManifold { spec })
    }

    fn __repr__(&self) -> String {
        format!("Manifold({})", self.to_json())
    }
}

#[pyfunction]
fn lorentz_to_poincare(x: Vec<f64>, curvature: f64) -> Vec<f64> {
    manifold::lorentz_to_poincare(&x, curvature)
}

#[pyfunction]
fn poincare_distance(u: Vec<f64>, v: Vec<f64>) -> f64 {
    manifold::poincare_distance(&u, &v)
}

#[pyfunction]
fn local_noise_std(sigma: f64, curvature: f64, norm_z: f64) -> f64 {
    manifold::local_noise_std(sigma, curvature, norm_z)
}

#[pyfunction]
fn pearson(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    metrics::pearson(&a, &b).map_err(value_err)
}

#[pyfunction]
fn spearman(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    metrics::spearman(&a, &b).map_err(value_err)
}

/// Branching-diffusion data: `(rows, node_of_row, parent_of_node)`.
/// Rows, generating node per row, and parent per node.
type Branching = (Vec<Vec<f64>>, Vec<usize>, Vec<Option<usize>>);

#[pyfunction]
#[pyo3(signature = (config_json = "{}"))]
fn generate_branching(config_json: &str) -> PyResult<Branching> {
    let cfg: BranchingConfig = serde_json::from_str(config_json).map_err(value_err)?;
    let (tree, data) = generate_branching_diffusion(&cfg).map_err(value_err)?;
    let nodes = match &data.truth {
        Some(rgd_core::data::GroundTruth::Tree { nodes, .. }) => nodes.clone(),
        None => unreachable!("generator attaches the tree"),
    };
    Ok((
        to_rows(&data.x),
        nodes,
        tree.nodes.iter().map(|n| n.parent).collect(),
    ))
}

/// Outcome of [`fit`].
#[pyclass(name = "FitResult", module = "rgd", frozen, get_all)]
pub struct PyFitResult {
    latents: Vec<Vec<f64>>,
    train_loss: Vec<f64>,
    val_loss: Vec<f64>,
    best_epoch: usize,
    mse: f64,
    /// Correlation with data-space distances, if defined.
    pearson: Option<f64>,
    spearman: Option<f64>,
}

/// Trains on `x` (rows) with the last tenth held out for early stopping and
/// returns the training latents and metrics. `config_json` holds any
/// training settings besides the manifold.
#[pyfunction]
#[pyo3(signature = (manifold, x, sigma = 0.0, max_epochs = 100, seed = 0, config_json = "{}"))]
fn fit(
    py: Python<'_>,
    manifold: &PyManifold,
    x: Vec<Vec<f64>>,
    sigma: f64,
    max_epochs: usize,
    seed: u64,
    config_json: &str,
) -> PyResult<PyFitResult> {
    let mut cfg: TrainConfig = serde_json::from_str(config_json).map_err(value_err)?;
    cfg.manifold = manifold.spec.clone();
    cfg.noise = NoiseConfig::new(sigma);
    cfg.max_epochs = max_epochs;
    cfg.seed = seed;
    let data = Dataset::from_matrix(to_matrix(&x)?);
    let n_val = data.len() / 10;
    let n_train = data.len() - n_val;
    let train_set = data.subset(&(0..n_train).collect::<Vec<_>>());
    let val_set = data.subset(&(n_train..data.len()).collect::<Vec<_>>());
    let (run, m) = py
        .detach(|| -> Result<_, train::TrainError> {
            let run = train::train(&cfg, &train_set, &val_set)?;
            let m = train::evaluate(
                &run.decoder,
                &run.train_latents,
                &train_set,
                cfg.loss,
                Split::Train,
                Some(OracleKind::DataSpace),
                metrics::DEFAULT_POINTS,
                seed,
            )?;
            Ok((run, m))
        })
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(PyFitResult {
        latents: to_rows(&run.train_latents.points().to_owned()),
        train_loss: run.history.iter().map(|r| r.train_loss).collect(),
        val_loss: run.history.iter().map(|r| r.val_loss).collect(),
        best_epoch: run.best_epoch,
        mse: m.mse,
        pearson: m.pearson,
        spearman: m.spearman,
    })
}

#[pymodule]
fn rgd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyManifold>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(lorentz_to_poincare, m)?)?;
    m.add_function(wrap_pyfunction!(poincare_distance, m)?)?;
    m.add_function(wrap_pyfunction!(local_noise_std, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(generate_branching, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    Ok(())
}
