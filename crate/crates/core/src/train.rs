//! Training loop, test-time latent inference, generation and evaluation.
//!
//! Each epoch shuffles the training rows into batches. Every batch perturbs
//! its latents with geometric noise, takes one decoder Adam step and
//! accumulates the Euclidean latent gradients; after the last batch the
//! latent table takes a single Riemannian Adam step. Validation rows keep a
//! table of their own that is fitted the same way but never feeds the decoder.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, OracleKind, Standardizer};
use crate::decoder::{lr_schedule, row_losses, Adam, AdamConfig, Decoder, DecoderError, LossKind};
use crate::manifold::{ManifoldError, ManifoldSpec};
use crate::metrics::{self, MetricError};
use crate::noise::{perturb_batch, NoiseConfig};
use crate::riemannian::{
    init_point, LatentError, LatentTable, RiemannianAdam, RiemannianAdamConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GradAccumulation {
    /// Latent gradients summed over the batches of an epoch.
    #[default]
    Sum,
    /// Summed gradients divided by the number of batches.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    /// Random initial candidates per sample; the lowest-loss one is refined.
    pub candidates: usize,
    /// Riemannian Adam steps with the decoder frozen.
    pub steps: usize,
    /// Peak step size, cosine-decayed to 0 over `steps`. Defaults to the
    /// training latent rate.
    pub lr: Option<f64>,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            candidates: 16,
            steps: 300,
            lr: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub manifold: ManifoldSpec,
    pub noise: NoiseConfig,
    pub loss: LossKind,
    pub hidden: Vec<usize>,
    /// Decoder optimizer; `None` picks the manifold-dependent default.
    pub decoder_optim: Option<AdamConfig>,
    /// Latent optimizer; `None` picks the manifold-dependent default.
    pub latent_optim: Option<RiemannianAdamConfig>,
    /// Warm-restart period of the decoder learning-rate schedule, in epochs.
    pub t0: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub grad_accumulation: GradAccumulation,
    pub infer: InferConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            manifold: ManifoldSpec::euclidean(2),
            noise: NoiseConfig::default(),
            loss: LossKind::Mse,
            hidden: crate::decoder::DEFAULT_HIDDEN.to_vec(),
            decoder_optim: None,
            latent_optim: None,
            t0: 40,
            patience: 85,
            batch_size: 256,
            max_epochs: 600,
            seed: 0,
            grad_accumulation: GradAccumulation::Sum,
            infer: InferConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn new(manifold: ManifoldSpec) -> Self {
        TrainConfig {
            manifold,
            ..Default::default()
        }
    }

    /// Adam settings for the decoder; sphere and torus use `betas = (0.7, 0.9)`.
    pub fn decoder_adam(&self) -> AdamConfig {
        self.decoder_optim.unwrap_or_else(|| {
            let mut c = AdamConfig::default();
            if self.manifold.is_spherical() {
                c.beta1 = 0.7;
                c.beta2 = 0.9;
            }
            c
        })
    }

    /// Riemannian Adam settings for latents; sphere and torus use `lr = 0.4`.
    pub fn latent_adam(&self) -> RiemannianAdamConfig {
        self.latent_optim.unwrap_or_else(|| {
            let mut c = RiemannianAdamConfig::default();
            if self.manifold.is_spherical() {
                c.lr = 0.4;
            }
            c
        })
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        self.manifold
            .validate()
            .map_err(|e| TrainError::Config(format!("manifold: {e}")))?;
        let d = self.decoder_adam();
        let l = self.latent_adam();
        for (name, v) in [
            ("decoder lr", d.lr),
            ("latent lr", l.lr),
            ("eps", d.eps),
            ("latent eps", l.eps),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, b) in [
            ("decoder beta1", d.beta1),
            ("decoder beta2", d.beta2),
            ("latent beta1", l.beta1),
            ("latent beta2", l.beta2),
        ] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if d.weight_decay.is_nan() || d.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative".into());
        }
        if !(self.noise.sigma >= 0.0 && self.noise.sigma.is_finite()) {
            return bad(format!(
                "noise sigma must be non-negative, got {}",
                self.noise.sigma
            ));
        }
        if self.patience == 0 {
            return bad("patience must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.t0 == 0 {
            return bad("t0 must be >= 1".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be >= 1".into());
        }
        if self.infer.candidates == 0 {
            return bad("infer.candidates must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        snapshot: Box<Snapshot>,
    },
    #[error(transparent)]
    Decoder(#[from] DecoderError),
    #[error(transparent)]
    Latent(#[from] LatentError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Last finite state before a numerical abort.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub decoder: Decoder,
    pub train_latents: LatentTable,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches, noise included.
    pub train_loss: f64,
    pub val_loss: f64,
    /// Decoder learning rate used during the epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Metrics of one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub split: Split,
    pub loss: f64,
    pub mae: f64,
    pub mse: f64,
    pub mean_f1: Option<f64>,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub n_points: usize,
    pub n_pairs: usize,
    pub pair_capped: bool,
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: TrainConfig,
    /// Decoder from the epoch with the lowest validation loss.
    pub decoder: Decoder,
    pub train_latents: LatentTable,
    pub val_latents: LatentTable,
    pub test_latents: Option<LatentTable>,
    pub history: Vec<EpochRecord>,
    pub metrics: Vec<SplitMetrics>,
    pub best_epoch: usize,
    pub stop: StopReason,
    pub decoder_steps: u64,
    pub latent_steps: u64,
}

impl RunArtifacts {
    pub fn latents(&self, split: Split) -> Option<&LatentTable> {
        match split {
            Split::Train => Some(&self.train_latents),
            Split::Val => Some(&self.val_latents),
            Split::Test => self.test_latents.as_ref(),
        }
    }
}

/// Indices of rng streams derived from the run seed.
mod stream {
    pub const INIT: u64 = 0;
    pub const SHUFFLE: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const INFER: u64 = 3;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_dataset(data: &Dataset, what: &str, out_dim: Option<usize>) -> Result<(), TrainError> {
    if let Some(d) = out_dim {
        if data.dim() != d {
            return Err(TrainError::Config(format!(
                "{what} has {} columns, expected {d}",
                data.dim()
            )));
        }
    }
    if data.x.iter().any(|v| !v.is_finite()) {
        return Err(TrainError::Config(format!(
            "{what} contains non-finite values"
        )));
    }
    Ok(())
}

/// Mean loss over rows and the Euclidean gradient for every latent, computed
/// in chunks so memory stays bounded.
fn full_input_gradient(
    decoder: &Decoder,
    z: ArrayView2<f64>,
    x: ArrayView2<f64>,
    kind: LossKind,
    chunk: usize,
) -> Result<(f64, Array2<f64>), DecoderError> {
    let n = z.nrows();
    let mut grads = Array2::zeros(z.raw_dim());
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let (l, g) = decoder.input_gradient(
            z.slice(ndarray::s![start..end, ..]),
            x.slice(ndarray::s![start..end, ..]),
            kind,
        )?;
        total += l * (end - start) as f64;
        grads.slice_mut(ndarray::s![start..end, ..]).assign(&g);
        start = end;
    }
    Ok((total / n.max(1) as f64, grads))
}

/// Trains decoder and latents on `train`, early-stopping on the validation
/// loss. An empty `val` makes the training loss the stopping signal.
pub fn train(
    cfg: &TrainConfig,
    train: &Dataset,
    val: &Dataset,
) -> Result<RunArtifacts, TrainError> {
    train_with_callback(cfg, train, val, |_| {})
}

/// [`train`] with a hook called after every epoch.
pub fn train_with_callback(
    cfg: &TrainConfig,
    train: &Dataset,
    val: &Dataset,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<RunArtifacts, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::Config("training set is empty".into()));
    }
    check_dataset(train, "training set", None)?;
    let out_dim = train.dim();
    check_dataset(val, "validation set", (!val.is_empty()).then_some(out_dim))?;

    let spec = &cfg.manifold;
    let mut init_rng = stream_rng(cfg.seed, stream::INIT);
    let mut shuffle_rng = stream_rng(cfg.seed, stream::SHUFFLE);
    let mut noise_rng = stream_rng(cfg.seed, stream::NOISE + cfg.noise.stream);

    let mut decoder = Decoder::new(spec.ambient_dim(), &cfg.hidden, out_dim, &mut init_rng);
    let mut train_z = LatentTable::init_with_ids(spec, train.ids.clone(), &mut init_rng);
    let mut val_z = LatentTable::init_with_ids(spec, val.ids.clone(), &mut init_rng);
    let mut adam = Adam::new(cfg.decoder_adam());
    let mut radam = RiemannianAdam::new(cfg.latent_adam(), &train_z);
    let mut radam_val = RiemannianAdam::new(cfg.latent_adam(), &val_z);
    let base_lr = adam.config.lr;
    let sigma = if cfg.noise.is_active() {
        cfg.noise.sigma
    } else {
        0.0
    };

    let n = train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::new();
    let mut best = (
        f64::INFINITY,
        0usize,
        decoder.clone(),
        train_z.clone(),
        val_z.clone(),
    );
    let mut stop = StopReason::MaxEpochs;

    for epoch in 0..cfg.max_epochs {
        let lr = lr_schedule(epoch, base_lr, cfg.t0);
        order.shuffle(&mut shuffle_rng);
        let mut latent_grad = Array2::<f64>::zeros((n, spec.ambient_dim()));
        let mut loss_sum = 0.0;
        let n_batches = n.div_ceil(cfg.batch_size);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let z = train_z.gather(idx);
            let z = perturb_batch(spec, z.view(), sigma, &mut noise_rng);
            let x = train.x.select(Axis(0), idx);
            let back = decoder.backward(z.view(), x.view(), cfg.loss)?;
            if !back.loss.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: b,
                    snapshot: Box::new(Snapshot {
                        decoder,
                        train_latents: train_z,
                        history,
                    }),
                });
            }
            adam.step_decoder(lr, &mut decoder, &back.params);
            for (k, &i) in idx.iter().enumerate() {
                let mut row = latent_grad.row_mut(i);
                row += &back.inputs.row(k);
            }
            loss_sum += back.loss * idx.len() as f64;
        }
        if cfg.grad_accumulation == GradAccumulation::Mean {
            latent_grad /= n_batches as f64;
        }
        radam.step(&mut train_z, latent_grad.view())?;
        let train_loss = loss_sum / n as f64;

        let val_loss = if val.is_empty() {
            train_loss
        } else {
            let (l, g) = full_input_gradient(
                &decoder,
                val_z.points(),
                val.x.view(),
                cfg.loss,
                cfg.batch_size.max(1024),
            )?;
            radam_val.step(&mut val_z, g.view())?;
            l
        };
        let rec = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
        };
        history.push(rec);
        on_epoch(&rec);
        if val_loss < best.0 {
            best = (
                val_loss,
                epoch,
                decoder.clone(),
                train_z.clone(),
                val_z.clone(),
            );
        } else if epoch - best.1 >= cfg.patience {
            stop = StopReason::EarlyStop;
            break;
        }
    }

    let (_, best_epoch, decoder_best, train_best, val_best) = best;
    Ok(RunArtifacts {
        config: cfg.clone(),
        decoder: decoder_best,
        train_latents: train_best,
        val_latents: val_best,
        test_latents: None,
        history,
        metrics: Vec::new(),
        best_epoch,
        stop,
        decoder_steps: adam.steps(),
        latent_steps: radam.steps(),
    })
}

/// Fits latents for `x` under a frozen decoder: the best of
/// `cfg.candidates` random initial points per row, refined by `cfg.steps`
/// Riemannian Adam steps on the reconstruction loss.
#[allow(clippy::too_many_arguments)]
pub fn infer_latents<R: Rng + ?Sized>(
    decoder: &Decoder,
    x: ArrayView2<f64>,
    ids: Vec<usize>,
    spec: &ManifoldSpec,
    loss: LossKind,
    cfg: &InferConfig,
    optim: RiemannianAdamConfig,
    rng: &mut R,
) -> Result<LatentTable, TrainError> {
    let n = x.nrows();
    if ids.len() != n {
        return Err(LatentError::IdCount {
            rows: n,
            ids: ids.len(),
        }
        .into());
    }
    let d = spec.ambient_dim();
    let mut best = Array2::<f64>::zeros((n, d));
    let mut best_loss = vec![f64::INFINITY; n];
    for _ in 0..cfg.candidates.max(1) {
        let mut cand = Array2::<f64>::zeros((n, d));
        for mut row in cand.outer_iter_mut() {
            let p = init_point(spec, rng);
            row.assign(&ndarray::ArrayView1::from(&p[..]));
        }
        let out = decoder.forward(cand.view())?;
        let losses = row_losses(out.view(), x, loss)?;
        for i in 0..n {
            if losses[i] < best_loss[i] {
                best_loss[i] = losses[i];
                best.row_mut(i).assign(&cand.row(i));
            }
        }
    }
    let mut table = LatentTable::new(spec.clone(), best, ids)?;
    if cfg.steps == 0 || n == 0 {
        return Ok(table);
    }
    let peak = cfg.lr.unwrap_or(optim.lr);
    let mut radam = RiemannianAdam::new(optim, &table);
    for t in 0..cfg.steps {
        let lr = peak * (1.0 + (std::f64::consts::PI * t as f64 / cfg.steps as f64).cos()) / 2.0;
        let (_, g) = full_input_gradient(decoder, table.points(), x, loss, 4096)?;
        radam.step_with_lr(&mut table, g.view(), lr)?;
    }
    table.stabilize();
    Ok(table)
}

/// [`infer_latents`] with the run's own settings and rng stream.
pub fn infer_for_run(
    cfg: &TrainConfig,
    decoder: &Decoder,
    data: &Dataset,
) -> Result<LatentTable, TrainError> {
    let mut rng = stream_rng(cfg.seed, stream::INFER);
    infer_latents(
        decoder,
        data.x.view(),
        data.ids.clone(),
        &cfg.manifold,
        cfg.loss,
        &cfg.infer,
        cfg.latent_adam(),
        &mut rng,
    )
}

/// Decodes `n` uniform samples from a compact manifold.
pub fn generate<R: Rng + ?Sized>(
    decoder: &Decoder,
    spec: &ManifoldSpec,
    n: usize,
    rng: &mut R,
) -> Result<Array2<f64>, TrainError> {
    if !spec.is_compact() {
        return Err(ManifoldError::UnsupportedSampling(spec.kind()).into());
    }
    let mut z = Array2::zeros((n, spec.ambient_dim()));
    for mut row in z.outer_iter_mut() {
        let p = spec.sample_uniform(rng)?;
        row.assign(&ndarray::ArrayView1::from(&p[..]));
    }
    Ok(decoder.forward(z.view())?)
}

/// Reconstruction and distance-correlation metrics of one split. Correlations
/// are `None` when the oracle is unavailable or the correlation is undefined.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    decoder: &Decoder,
    latents: &LatentTable,
    data: &Dataset,
    loss: LossKind,
    split: Split,
    oracle: Option<OracleKind>,
    n_points: usize,
    seed: u64,
) -> Result<SplitMetrics, TrainError> {
    if latents.len() != data.len() {
        return Err(LatentError::IdCount {
            rows: latents.len(),
            ids: data.len(),
        }
        .into());
    }
    let out = decoder.forward(latents.points())?;
    let l = crate::decoder::loss(out.view(), data.x.view(), loss)?;
    let rec = metrics::reconstruction_metrics(out.view(), data.x.view(), loss)?;
    let corr = match oracle.map(|k| data.oracle(k)) {
        Some(Ok(o)) => match metrics::distance_correlations(latents, &o, n_points, seed) {
            Ok(c) => Some(c),
            Err(MetricError::UndefinedCorrelation(_)) => None,
            Err(e) => return Err(e.into()),
        },
        Some(Err(DataError::MissingTruth(_))) | None => None,
        Some(Err(e)) => return Err(e.into()),
    };
    Ok(SplitMetrics {
        split,
        loss: l,
        mae: rec.mae,
        mse: rec.mse,
        mean_f1: rec.mean_f1,
        pearson: corr.map(|c| c.pearson),
        spearman: corr.map(|c| c.spearman),
        n_points: corr.map_or(0, |c| c.n_points),
        n_pairs: corr.map_or(0, |c| c.n_pairs),
        pair_capped: corr.is_some_and(|c| c.pair_capped),
    })
}

/// Train/validation/test parts of a dataset.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    /// Statistics used when the data were standardized before splitting.
    pub standardizer: Option<Standardizer>,
}

impl Splits {
    pub fn get(&self, split: Split) -> &Dataset {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Optionally standardizes the whole dataset, then splits it with `seed`.
pub fn prepare_splits(
    data: &Dataset,
    standardize: bool,
    ratios: [f64; 3],
    seed: u64,
) -> Result<Splits, DataError> {
    let (data, standardizer) = if standardize {
        let (x, s) = crate::data::standardize(data.x.view());
        let mut d = data.clone();
        d.x = x;
        (d, Some(s))
    } else {
        (data.clone(), None)
    };
    let [train, val, test] = data.split(ratios, seed)?;
    Ok(Splits {
        train,
        val,
        test,
        standardizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::from_matrix(Array2::from_shape_fn((n, d), |_| {
            rng.random_range(-1.0..1.0)
        }))
    }

    #[test]
    fn manifold_dependent_defaults() {
        let s = TrainConfig::new(ManifoldSpec::sphere(2));
        assert_eq!(s.latent_adam().lr, 0.4);
        assert_eq!((s.decoder_adam().beta1, s.decoder_adam().beta2), (0.7, 0.9));
        let t = TrainConfig::new(ManifoldSpec::torus());
        assert_eq!(t.latent_adam().lr, 0.4);
        let l = TrainConfig::new(ManifoldSpec::lorentz(2, 5.0));
        assert_eq!(l.latent_adam().lr, 0.1);
        assert_eq!(
            (l.decoder_adam().beta1, l.decoder_adam().beta2),
            (0.9, 0.995)
        );
        assert_eq!((l.patience, l.t0, l.batch_size), (85, 40, 256));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let ok: TrainConfig = serde_json::from_str(r#"{"patience": 3}"#).unwrap();
        assert_eq!(ok.patience, 3);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"patiense": 3}"#).is_err());
        let bad = TrainConfig {
            patience: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn step_counters_follow_loop_structure() {
        let data = toy(50, 4, 0);
        let mut cfg = TrainConfig::new(ManifoldSpec::lorentz(2, 1.0));
        cfg.hidden = vec![8];
        cfg.batch_size = 16;
        cfg.max_epochs = 7;
        cfg.noise = NoiseConfig::new(0.5);
        let run = train(&cfg, &data, &toy(5, 4, 1)).unwrap();
        assert_eq!(run.history.len(), 7);
        assert_eq!(run.latent_steps, 7);
        assert_eq!(run.decoder_steps, 7 * 4);
        run.train_latents.validate().unwrap();
        run.val_latents.validate().unwrap();
    }

    #[test]
    fn best_decoder_is_kept() {
        let data = toy(40, 3, 2);
        let mut cfg = TrainConfig::new(ManifoldSpec::euclidean(2));
        cfg.hidden = vec![8];
        cfg.max_epochs = 30;
        cfg.patience = 5;
        let run = train(&cfg, &data, &toy(10, 3, 3)).unwrap();
        let min = run
            .history
            .iter()
            .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss))
            .unwrap();
        assert_eq!(min.epoch, run.best_epoch);
    }

    #[test]
    fn generate_requires_compact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dec = Decoder::new(3, &[4], 2, &mut rng);
        assert!(matches!(
            generate(&dec, &ManifoldSpec::lorentz(2, 1.0), 5, &mut rng),
            Err(TrainError::Manifold(ManifoldError::UnsupportedSampling(_)))
        ));
        assert_eq!(
            generate(&dec, &ManifoldSpec::sphere(2), 0, &mut rng)
                .unwrap()
                .nrows(),
            0
        );
    }

    #[test]
    fn single_candidate_without_steps_is_the_initialization() {
        let spec = ManifoldSpec::sphere(2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dec = Decoder::new(3, &[4], 2, &mut rng);
        let x = Array2::zeros((6, 2));
        let cfg = InferConfig {
            candidates: 1,
            steps: 0,
            lr: None,
        };
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let t = infer_latents(
            &dec,
            x.view(),
            (0..6).collect(),
            &spec,
            LossKind::Mse,
            &cfg,
            Default::default(),
            &mut a,
        )
        .unwrap();
        let mut b = ChaCha8Rng::seed_from_u64(5);
        for i in 0..6 {
            assert_eq!(t.row(i), &init_point(&spec, &mut b)[..]);
        }
    }
}
