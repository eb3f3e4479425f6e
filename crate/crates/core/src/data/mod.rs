//! Dataset containers, ground-truth distance oracles, standardization and
//! train/validation/test splits.

mod branching;
mod io;

pub use branching::{generate_branching_diffusion, BranchingConfig, Tree, TreeNode};
pub use io::{
    load_dataset, read_binary, read_csv, read_sidecar, save_matrix, write_binary, write_csv,
    write_sidecar, Format, LoadOptions, Sidecar, BINARY_MAGIC, BINARY_VERSION,
};

use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("sidecar join failed: {0}")]
    Join(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset has no {0} ground truth")]
    MissingTruth(&'static str),
    #[error("bad binary matrix: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ground truth attached to a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth {
    /// Generating tree node of every row.
    Tree { tree: Arc<Tree>, nodes: Vec<usize> },
}

/// Data matrix with optional labels, phases and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    /// Row ids, carried through subsets.
    pub ids: Vec<usize>,
    pub labels: Option<Vec<String>>,
    /// Circular phases in `[0, 1)`.
    pub phases: Option<Vec<f64>>,
    pub truth: Option<GroundTruth>,
}

impl Dataset {
    pub fn from_matrix(x: Array2<f64>) -> Self {
        let n = x.nrows();
        Dataset {
            x,
            ids: (0..n).collect(),
            labels: None,
            phases: None,
            truth: None,
        }
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if let Some(((r, c), _)) = self.x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(DataError::Parse {
                line: r as u64 + 2,
                msg: format!("non-finite entry in column {c}"),
            });
        }
        if let Some(p) = &self.phases {
            if let Some(bad) = p.iter().find(|v| !(0.0..1.0).contains(*v)) {
                return Err(DataError::InvalidConfig(format!(
                    "phase {bad} outside [0, 1)"
                )));
            }
        }
        Ok(())
    }

    /// Rows at `idx`, in order, with every attached field restricted alike.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), idx),
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i].clone()).collect()),
            phases: self
                .phases
                .as_ref()
                .map(|p| idx.iter().map(|&i| p[i]).collect()),
            truth: self.truth.as_ref().map(|t| match t {
                GroundTruth::Tree { tree, nodes } => GroundTruth::Tree {
                    tree: Arc::clone(tree),
                    nodes: idx.iter().map(|&i| nodes[i]).collect(),
                },
            }),
        }
    }

    /// Splits into train/validation/test with [`split_indices`].
    pub fn split(&self, ratios: [f64; 3], seed: u64) -> Result<[Dataset; 3], DataError> {
        let [a, b, c] = split_indices(self.len(), ratios, seed)?;
        Ok([self.subset(&a), self.subset(&b), self.subset(&c)])
    }

    /// Distance oracle of the given kind over this dataset's rows.
    pub fn oracle(&self, kind: OracleKind) -> Result<Oracle<'_>, DataError> {
        match kind {
            OracleKind::Hops | OracleKind::TreeLatent => match &self.truth {
                Some(GroundTruth::Tree { tree, nodes }) => Ok(if kind == OracleKind::Hops {
                    Oracle::Hops { tree, nodes }
                } else {
                    Oracle::TreeLatent { tree, nodes }
                }),
                None => Err(DataError::MissingTruth("tree")),
            },
            OracleKind::Phase => self
                .phases
                .as_deref()
                .map(Oracle::Phase)
                .ok_or(DataError::MissingTruth("phase")),
            OracleKind::DataSpace => Ok(Oracle::DataSpace(self.x.view())),
        }
    }
}

/// Which ground-truth distance to correlate latent geodesics against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// Hop count between generating tree nodes (0 for siblings).
    #[default]
    Hops,
    /// Euclidean distance between noiseless generating node latents.
    TreeLatent,
    /// Circular phase distance.
    Phase,
    /// Euclidean distance between data rows.
    DataSpace,
}

#[derive(Debug, Clone, Copy)]
pub enum Oracle<'a> {
    Hops { tree: &'a Tree, nodes: &'a [usize] },
    TreeLatent { tree: &'a Tree, nodes: &'a [usize] },
    Phase(&'a [f64]),
    DataSpace(ArrayView2<'a, f64>),
}

impl Oracle<'_> {
    pub fn len(&self) -> usize {
        match self {
            Oracle::Hops { nodes, .. } | Oracle::TreeLatent { nodes, .. } => nodes.len(),
            Oracle::Phase(p) => p.len(),
            Oracle::DataSpace(x) => x.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        match self {
            Oracle::Hops { tree, nodes } => tree.distance(nodes[i], nodes[j]) as f64,
            Oracle::TreeLatent { tree, nodes } => tree.latent_distance(nodes[i], nodes[j]),
            Oracle::Phase(p) => circular_distance(p[i], p[j]),
            Oracle::DataSpace(x) => x
                .row(i)
                .iter()
                .zip(x.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// Distance on the unit circle `[0, 1)`: `min(|a-b|, 1-|a-b|)`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(1.0 - d)
}

/// Per-column standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns with zero variance; their std is set to 1.
    pub constant_columns: Vec<usize>,
}

impl Standardizer {
    /// Column means and population standard deviations.
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut std = Vec::with_capacity(x.ncols());
        let mut constant_columns = Vec::new();
        for (j, col) in x.axis_iter(Axis(1)).enumerate() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = var.sqrt();
            mean.push(m);
            if s > 0.0 && s.is_finite() {
                std.push(s);
            } else {
                std.push(1.0);
                constant_columns.push(j);
            }
        }
        Standardizer {
            mean,
            std,
            constant_columns,
        }
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            if self.constant_columns.contains(&j) {
                continue;
            }
            col.mapv_inplace(|v| (v - self.mean[j]) / self.std[j]);
        }
        out
    }

    pub fn invert(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            if self.constant_columns.contains(&j) {
                continue;
            }
            col.mapv_inplace(|v| v * self.std[j] + self.mean[j]);
        }
        out
    }
}

/// Zero-mean, unit-variance columns. Constant columns are left unchanged and
/// listed in the returned statistics.
pub fn standardize(x: ArrayView2<f64>) -> (Array2<f64>, Standardizer) {
    let stats = Standardizer::fit(x);
    (stats.apply(x), stats)
}

/// Split sizes by largest-remainder rounding; ties go to the earlier split.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<[usize; 3], DataError> {
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 || ratios.iter().any(|r| *r < 0.0) {
        return Err(DataError::InvalidConfig(format!(
            "split ratios must be non-negative and sum to 1, got {ratios:?}"
        )));
    }
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        sizes[k] += 1;
        rest -= 1;
    }
    Ok([sizes[0], sizes[1], sizes[2]])
}

/// Disjoint, exhaustive, seeded split of `0..n`. Each part is sorted.
pub fn split_indices(n: usize, ratios: [f64; 3], seed: u64) -> Result<[Vec<usize>; 3], DataError> {
    let sizes = split_sizes(n, ratios)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut parts: [Vec<usize>; 3] = Default::default();
    let mut start = 0;
    for (k, part) in parts.iter_mut().enumerate() {
        *part = perm[start..start + sizes[k]].to_vec();
        part.sort_unstable();
        start += sizes[k];
    }
    Ok(parts)
}

pub const DEFAULT_SPLIT: [f64; 3] = [0.82, 0.09, 0.09];
