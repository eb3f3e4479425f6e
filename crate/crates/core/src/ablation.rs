//! Grids of training runs over noise scales, curvatures and seeds.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::OracleKind;
use crate::train::{
    evaluate, infer_for_run, train, Split, SplitMetrics, Splits, TrainConfig, TrainError,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub sigmas: Vec<f64>,
    /// Empty keeps the base manifold's curvature.
    pub curvatures: Vec<f64>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub split: Split,
    pub oracle: Option<OracleKind>,
    pub n_points: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            split: Split::Train,
            oracle: Some(OracleKind::Hops),
            n_points: crate::metrics::DEFAULT_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub sigma: f64,
    pub curvature: Option<f64>,
    pub seed: u64,
    pub epochs: usize,
    pub outcome: Result<SplitMetrics, String>,
}

/// Mean and standard deviation over the successful seeds of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct CellAggregate {
    pub sigma: f64,
    pub curvature: Option<f64>,
    pub n_ok: usize,
    pub n_total: usize,
    /// `(mean, std)` per metric, in [`METRIC_NAMES`] order; `None` if no seed
    /// produced the metric.
    pub stats: Vec<Option<(f64, f64)>>,
}

pub const METRIC_NAMES: [&str; 5] = ["pearson", "spearman", "mae", "mse", "mean_f1"];

fn metric_values(m: &SplitMetrics) -> [Option<f64>; 5] {
    [m.pearson, m.spearman, Some(m.mae), Some(m.mse), m.mean_f1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub cells: Vec<CellResult>,
}

/// Trains with `cfg` and evaluates the requested split.
pub fn run_and_evaluate(
    cfg: &TrainConfig,
    splits: &Splits,
    eval: &EvalSettings,
) -> Result<(crate::train::RunArtifacts, SplitMetrics), TrainError> {
    let mut run = train(cfg, &splits.train, &splits.val)?;
    let data = splits.get(eval.split);
    let latents = match eval.split {
        Split::Train => run.train_latents.clone(),
        Split::Val => run.val_latents.clone(),
        Split::Test => {
            let t = infer_for_run(cfg, &run.decoder, data)?;
            run.test_latents = Some(t.clone());
            t
        }
    };
    let m = evaluate(
        &run.decoder,
        &latents,
        data,
        cfg.loss,
        eval.split,
        eval.oracle,
        eval.n_points,
        cfg.seed,
    )?;
    run.metrics.push(m.clone());
    Ok((run, m))
}

/// Runs every `(sigma, curvature, seed)` cell on up to `jobs` threads. A
/// failing cell is recorded and does not stop the sweep.
pub fn ablation_sweep(
    base: &TrainConfig,
    splits: &Splits,
    grid: &AblationGrid,
    eval: &EvalSettings,
    jobs: usize,
) -> Result<AblationTable, TrainError> {
    if grid.sigmas.is_empty() || grid.seeds.is_empty() {
        return Err(TrainError::Config(
            "sigma and seed lists must be non-empty".into(),
        ));
    }
    if !grid.curvatures.is_empty() && base.manifold.curvature().is_none() {
        return Err(TrainError::Config(
            "curvatures given but the manifold has no curvature".into(),
        ));
    }
    let curvatures: Vec<Option<f64>> = if grid.curvatures.is_empty() {
        vec![base.manifold.curvature()]
    } else {
        grid.curvatures.iter().copied().map(Some).collect()
    };
    let mut jobs_list = Vec::new();
    for &sigma in &grid.sigmas {
        for &c in &curvatures {
            for &seed in &grid.seeds {
                jobs_list.push((sigma, c, seed));
            }
        }
    }
    let run_cell = |&(sigma, c, seed): &(f64, Option<f64>, u64)| {
        let mut cfg = base.clone();
        cfg.noise.sigma = sigma;
        cfg.seed = seed;
        if let Some(c) = c {
            cfg.manifold = cfg.manifold.with_curvature(c);
        }
        let (epochs, outcome) = match run_and_evaluate(&cfg, splits, eval) {
            Ok((run, m)) => (run.history.len(), Ok(m)),
            Err(e) => (0, Err(e.to_string())),
        };
        CellResult {
            sigma,
            curvature: c,
            seed,
            epochs,
            outcome,
        }
    };
    let cells = if jobs <= 1 {
        jobs_list.iter().map(run_cell).collect()
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| TrainError::Config(format!("thread pool: {e}")))?;
        pool.install(|| jobs_list.par_iter().map(run_cell).collect())
    };
    Ok(AblationTable { cells })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

impl AblationTable {
    /// Aggregates in grid order, one per `(sigma, curvature)`.
    pub fn aggregates(&self) -> Vec<CellAggregate> {
        let mut keys: Vec<(f64, Option<f64>)> = Vec::new();
        for c in &self.cells {
            if !keys.contains(&(c.sigma, c.curvature)) {
                keys.push((c.sigma, c.curvature));
            }
        }
        keys.into_iter()
            .map(|(sigma, curvature)| {
                let group: Vec<&CellResult> = self
                    .cells
                    .iter()
                    .filter(|c| c.sigma == sigma && c.curvature == curvature)
                    .collect();
                let ok: Vec<&SplitMetrics> = group
                    .iter()
                    .filter_map(|c| c.outcome.as_ref().ok())
                    .collect();
                let stats = (0..METRIC_NAMES.len())
                    .map(|k| {
                        let vals: Vec<f64> =
                            ok.iter().filter_map(|m| metric_values(m)[k]).collect();
                        (!vals.is_empty()).then(|| mean_std(&vals))
                    })
                    .collect();
                CellAggregate {
                    sigma,
                    curvature,
                    n_ok: ok.len(),
                    n_total: group.len(),
                    stats,
                }
            })
            .collect()
    }

    pub fn aggregate(&self, sigma: f64, curvature: Option<f64>) -> Option<CellAggregate> {
        self.aggregates()
            .into_iter()
            .find(|a| a.sigma == sigma && a.curvature == curvature)
    }

    /// One row per cell, then `mean` and `std` rows per grid point. The
    /// `status` column is `ok`, the cell's error, or `n_ok/n_total`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["row", "sigma", "curvature", "seed", "status", "epochs"];
        header.extend(METRIC_NAMES);
        wr.write_record(&header)?;
        for c in &self.cells {
            let mut rec = vec![
                "cell".to_string(),
                c.sigma.to_string(),
                fmt(c.curvature),
                c.seed.to_string(),
            ];
            match &c.outcome {
                Ok(m) => {
                    rec.push("ok".into());
                    rec.push(c.epochs.to_string());
                    rec.extend(metric_values(m).map(fmt));
                }
                Err(e) => {
                    rec.push(format!("error: {e}"));
                    rec.push(c.epochs.to_string());
                    rec.extend(std::iter::repeat_n(String::new(), METRIC_NAMES.len()));
                }
            }
            wr.write_record(&rec)?;
        }
        for a in self.aggregates() {
            for (which, pick) in [("mean", 0usize), ("std", 1)] {
                let mut rec = vec![
                    which.to_string(),
                    a.sigma.to_string(),
                    fmt(a.curvature),
                    String::new(),
                    format!("{}/{}", a.n_ok, a.n_total),
                    String::new(),
                ];
                rec.extend(
                    a.stats
                        .iter()
                        .map(|s| fmt(s.map(|(m, sd)| if pick == 0 { m } else { sd }))),
                );
                wr.write_record(&rec)?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}
