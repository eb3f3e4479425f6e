//! The run configuration file.

use std::path::{Path, PathBuf};

use rgd_core::data::{
    generate_branching_diffusion, load_dataset, BranchingConfig, Dataset, Format, LoadOptions,
    OracleKind, DEFAULT_SPLIT,
};
use rgd_core::train::TrainConfig;
use rgd_core::ManifoldSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Branching,
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branching: Option<BranchingConfig>,
    /// Sidecar CSV `id,label[,phase]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar: Option<PathBuf>,
    /// Tree CSV; requires a sidecar whose labels are node indices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<PathBuf>,
    #[serde(default)]
    pub strict_binary: bool,
    /// Standardize columns before splitting. Defaults to true for MSE
    /// training and false for BCE.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardize: Option<bool>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Branching,
            path: None,
            branching: None,
            sidecar: None,
            tree: None,
            strict_binary: false,
            standardize: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldName {
    Euclidean,
    Sphere,
    Lorentz,
    Torus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldConfig {
    pub kind: ManifoldName,
    /// Intrinsic dimension.
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Lorentz only: the hyperboloid is `<x, x>_L = -1/curvature`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature: Option<f64>,
}

fn default_dim() -> usize {
    2
}

impl ManifoldConfig {
    pub fn to_spec(&self) -> Result<ManifoldSpec, CliError> {
        let cfg = |m: String| CliError::Config(format!("manifold: {m}"));
        if self.curvature.is_some() && self.kind != ManifoldName::Lorentz {
            return Err(cfg("curvature applies to lorentz only".into()));
        }
        let spec = match self.kind {
            ManifoldName::Euclidean => ManifoldSpec::euclidean(self.dim),
            ManifoldName::Sphere => ManifoldSpec::sphere(self.dim),
            ManifoldName::Lorentz => ManifoldSpec::lorentz(self.dim, self.curvature.unwrap_or(1.0)),
            ManifoldName::Torus => {
                if self.dim != 2 {
                    return Err(cfg("torus has dim 2".into()));
                }
                ManifoldSpec::torus()
            }
        };
        spec.validate().map_err(|e| cfg(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub oracle: Option<OracleKind>,
    pub n_points: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            oracle: Some(OracleKind::Hops),
            n_points: rgd_core::metrics::DEFAULT_POINTS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
    /// Defaults to the run seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratios: DEFAULT_SPLIT,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub dataset: DatasetConfig,
    pub manifold: ManifoldConfig,
    /// Training settings. `manifold` and `seed` are taken from the top level.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/latest")
}

impl RunConfig {
    /// Parses and validates a configuration document. Errors carry the path
    /// of the offending field.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
        if let Some(train) = value.get("train").and_then(|t| t.as_object()) {
            for key in ["manifold", "seed"] {
                if train.contains_key(key) {
                    return Err(CliError::Config(format!(
                        "train.{key}: set `{key}` at the top level"
                    )));
                }
            }
        }
        let mut cfg: RunConfig = serde_path_to_error::deserialize(value)
            .map_err(|e| CliError::Config(format!("{}: {}", e.path(), e.inner())))?;
        cfg.sync()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Copies the top-level manifold and seed into the training settings and
    /// validates everything.
    pub fn sync(&mut self) -> Result<(), CliError> {
        self.train.manifold = self.manifold.to_spec()?;
        if let Some(seed) = self.seed {
            self.train.seed = seed;
        }
        self.train
            .validate()
            .map_err(|e| CliError::Config(format!("train: {e}")))?;
        let r = self.split.ratios;
        if (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 || r.iter().any(|v| *v < 0.0) {
            return Err(CliError::Config(format!(
                "split.ratios: must be non-negative and sum to 1, got {r:?}"
            )));
        }
        if self.eval.n_points < 2 {
            return Err(CliError::Config("eval.n_points: must be >= 2".into()));
        }
        match self.dataset.kind {
            DatasetKind::Branching => {
                if self.dataset.path.is_some() {
                    return Err(CliError::Config(
                        "dataset.path: not used by branching data".into(),
                    ));
                }
                self.branching()
                    .validate()
                    .map_err(|e| CliError::Config(format!("dataset.branching: {e}")))?;
            }
            DatasetKind::Csv | DatasetKind::Binary => {
                if self.dataset.path.is_none() {
                    return Err(CliError::Config(
                        "dataset.path: required for file datasets".into(),
                    ));
                }
                if self.dataset.branching.is_some() {
                    return Err(CliError::Config(
                        "dataset.branching: only for branching data".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Fixes the seed, drawing one when absent, so the echoed config replays.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> u64 {
        let seed = flag.or(self.seed).unwrap_or_else(rand::random);
        self.seed = Some(seed);
        self.train.seed = seed;
        seed
    }

    pub fn branching(&self) -> BranchingConfig {
        self.dataset.branching.clone().unwrap_or_default()
    }

    pub fn split_seed(&self) -> u64 {
        self.split.seed.or(self.seed).unwrap_or(0)
    }

    pub fn standardize(&self) -> bool {
        self.dataset
            .standardize
            .unwrap_or(self.train.loss == rgd_core::decoder::LossKind::Mse)
    }

    /// Builds or loads the full dataset.
    pub fn dataset(&self, base: &Path) -> Result<Dataset, CliError> {
        let resolve = |p: &PathBuf| {
            if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        };
        match self.dataset.kind {
            DatasetKind::Branching => Ok(generate_branching_diffusion(&self.branching())?.1),
            kind => {
                let format = if kind == DatasetKind::Csv {
                    Format::Csv
                } else {
                    Format::Binary
                };
                let opts = LoadOptions {
                    strict_binary: self.dataset.strict_binary,
                    sidecar: self.dataset.sidecar.as_ref().map(resolve),
                    tree: self.dataset.tree.as_ref().map(resolve),
                };
                let path = resolve(self.dataset.path.as_ref().expect("validated"));
                Ok(load_dataset(&path, format, &opts)?)
            }
        }
    }
}
