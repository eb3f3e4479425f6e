//! Correlation and reconstruction metrics.

use ndarray::ArrayView2;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Oracle;
use crate::decoder::{sigmoid, LossKind};
use crate::riemannian::LatentTable;

/// Pair count above which random pairs are drawn instead of all pairs.
pub const MAX_ALL_PAIRS: usize = 10_000_000;
/// Number of random pairs drawn when the cap applies.
pub const CAPPED_PAIRS: usize = 100_000;
pub const DEFAULT_POINTS: usize = 5000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
}

fn check(a: &[f64], b: &[f64]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::Length(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(MetricError::UndefinedCorrelation("fewer than two values"));
    }
    Ok(())
}

/// Product-moment correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    check(a, b)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(MetricError::UndefinedCorrelation("constant input"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share their mean rank.
pub fn average_ranks(a: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| a[i].total_cmp(&a[j]));
    let mut ranks = vec![0.0; a.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && a[order[end]] == a[order[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = r;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    check(a, b)?;
    pearson(&average_ranks(a), &average_ranks(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub mae: f64,
    pub mse: f64,
    /// Present for binary (`Bce`) targets.
    pub mean_f1: Option<f64>,
}

/// Binary F1 of one row; an empty target predicted empty scores 1.
pub fn f1_score(pred: &[bool], target: &[bool]) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fneg = 0usize;
    for (&p, &t) in pred.iter().zip(target) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    if tp + fp + fneg == 0 {
        return 1.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
}

/// MAE and MSE over all entries. For `Bce` the outputs are logits: errors are
/// taken on `sigmoid(output)` and `mean_f1` thresholds it at 0.5.
pub fn reconstruction_metrics(
    outputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    kind: LossKind,
) -> Result<Reconstruction, MetricError> {
    if outputs.dim() != targets.dim() {
        return Err(MetricError::Length(outputs.len(), targets.len()));
    }
    let n = outputs.len().max(1) as f64;
    let pred = |o: f64| match kind {
        LossKind::Mse => o,
        LossKind::Bce => sigmoid(o),
    };
    let (mut mae, mut mse) = (0.0, 0.0);
    for (o, t) in outputs.iter().zip(targets.iter()) {
        let e = pred(*o) - t;
        mae += e.abs();
        mse += e * e;
    }
    let mean_f1 = (kind == LossKind::Bce).then(|| {
        let rows = outputs.nrows().max(1) as f64;
        outputs
            .outer_iter()
            .zip(targets.outer_iter())
            .map(|(o, t)| {
                let p: Vec<bool> = o.iter().map(|v| sigmoid(*v) > 0.5).collect();
                let t: Vec<bool> = t.iter().map(|v| *v > 0.5).collect();
                f1_score(&p, &t)
            })
            .sum::<f64>()
            / rows
    });
    Ok(Reconstruction {
        mae: mae / n,
        mse: mse / n,
        mean_f1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceCorrelation {
    pub pearson: f64,
    pub spearman: f64,
    pub n_points: usize,
    pub n_pairs: usize,
    /// True when random pairs replaced the full pair set.
    pub pair_capped: bool,
}

/// Index pairs used for the sampled points: all pairs, or [`CAPPED_PAIRS`]
/// random distinct pairs when there are more than [`MAX_ALL_PAIRS`].
pub fn sample_pairs<R: Rng + ?Sized>(m: usize, rng: &mut R) -> (Vec<(usize, usize)>, bool) {
    let total = m * m.saturating_sub(1) / 2;
    if total <= MAX_ALL_PAIRS {
        let mut pairs = Vec::with_capacity(total);
        for i in 0..m {
            for j in i + 1..m {
                pairs.push((i, j));
            }
        }
        (pairs, false)
    } else {
        let pairs = (0..CAPPED_PAIRS)
            .map(|_| {
                let i = rng.random_range(0..m);
                let mut j = rng.random_range(0..m - 1);
                if j >= i {
                    j += 1;
                }
                (i.min(j), i.max(j))
            })
            .collect();
        (pairs, true)
    }
}

/// Correlates latent geodesic distances with oracle distances over pairs of
/// up to `n_points` sampled rows. Row `i` of `latents` must match row `i` of
/// the oracle.
pub fn distance_correlations(
    latents: &LatentTable,
    oracle: &Oracle<'_>,
    n_points: usize,
    seed: u64,
) -> Result<DistanceCorrelation, MetricError> {
    if latents.len() != oracle.len() {
        return Err(MetricError::Length(latents.len(), oracle.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = latents.len();
    let rows: Vec<usize> = if n_points >= n {
        (0..n).collect()
    } else {
        let mut r = index::sample(&mut rng, n, n_points).into_vec();
        r.sort_unstable();
        r
    };
    let (pairs, pair_capped) = sample_pairs(rows.len(), &mut rng);
    let spec = latents.spec();
    let mut geo = Vec::with_capacity(pairs.len());
    let mut truth = Vec::with_capacity(pairs.len());
    for &(a, b) in &pairs {
        let (i, j) = (rows[a], rows[b]);
        geo.push(spec.distance(latents.row(i), latents.row(j)));
        truth.push(oracle.distance(i, j));
    }
    Ok(DistanceCorrelation {
        pearson: pearson(&geo, &truth)?,
        spearman: spearman(&geo, &truth)?,
        n_points: rows.len(),
        n_pairs: pairs.len(),
        pair_capped,
    })
}
