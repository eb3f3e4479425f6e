//! `rgd`: data generation, training, evaluation, export and ablation grids.
//!
//! Exit codes are 0 on success, 2 for I/O failures, 3 for invalid
//! configuration and 4 for a numerical abort.

pub mod config;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rgd_core::ablation::{ablation_sweep, AblationGrid, EvalSettings};
use rgd_core::checkpoint::{Checkpoint, CheckpointError};
use rgd_core::data::{generate_branching_diffusion, save_matrix, write_sidecar, DataError, Format};
use rgd_core::manifold::lorentz_to_poincare;
use rgd_core::riemannian::{LatentError, LatentTable};
use rgd_core::train::{
    evaluate, infer_for_run, prepare_splits, train_with_callback, EpochRecord, RunArtifacts, Split,
    SplitMetrics, Splits, TrainError,
};
use rgd_core::{ManifoldKind, ManifoldSpec};
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("I/O error: {0}")]
    Io(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical abort: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 2,
            CliError::Config(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidConfig(_) | DataError::MissingTruth(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<LatentError> for CliError {
    fn from(e: LatentError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            TrainError::Data(d) => d.into(),
            TrainError::Latent(l) => l.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rgd", version, about = "Riemannian generative decoder")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a branching-diffusion dataset with its tree.
    GenerateData(GenerateArgs),
    /// Train a decoder and latents; writes a run directory.
    Train(TrainArgs),
    /// Evaluate a run on one split.
    Eval(EvalArgs),
    /// Export latent coordinates of a run.
    Export(ExportArgs),
    /// Sweep noise scales, curvatures and seeds.
    Ablate(AblateArgs),
}

#[derive(Debug, clap::Args)]
pub struct GenerateArgs {
    /// Run configuration; its `dataset.branching` block supplies defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "csv")]
    pub format: String,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub children: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long)]
    pub siblings: Option<usize>,
    #[arg(long)]
    pub obs_noise_factor: Option<f64>,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Run directory; defaults to the config's `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Output CSV; defaults to `eval_<split>.csv` in the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, default_value = "csv")]
    pub format: String,
    /// Defaults to `export.csv` in the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub sigmas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub curvatures: Vec<f64>,
    /// Number of seeds, counted up from the run seed.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV; defaults to `ablation.csv` in the config's `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "train")]
    pub split: Split,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::GenerateData(a) => generate_data(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Eval(a) => eval_cmd(&a),
        Command::Export(a) => export_cmd(&a),
        Command::Ablate(a) => ablate_cmd(&a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn parse_format(s: &str) -> Result<Format, CliError> {
    s.parse()
        .map_err(|e: DataError| CliError::Config(e.to_string()))
}

fn generate_data(a: &GenerateArgs) -> Result<(), CliError> {
    let mut bc = match &a.config {
        Some(p) => RunConfig::load(p)?.branching(),
        None => Default::default(),
    };
    let overrides = [
        (a.dim, &mut bc.dim),
        (a.depth, &mut bc.depth),
        (a.children, &mut bc.children),
        (a.siblings, &mut bc.siblings),
    ];
    for (flag, field) in overrides {
        if let Some(v) = flag {
            *field = v;
        }
    }
    for (flag, field) in [
        (a.sigma, &mut bc.sigma),
        (a.decay, &mut bc.decay),
        (a.obs_noise_factor, &mut bc.obs_noise_factor),
    ] {
        if let Some(v) = flag {
            *field = v;
        }
    }
    if let Some(s) = a.seed {
        bc.seed = s;
    }
    let format = parse_format(&a.format)?;
    bc.validate()?;
    let (tree, data) = generate_branching_diffusion(&bc)?;
    create_dir(&a.out)?;
    let name = match format {
        Format::Csv => "data.csv",
        Format::Binary => "data.gdmx",
    };
    save_matrix(&a.out.join(name), format, &data)
        .map_err(|e| CliError::Io(format!("{}: {e}", a.out.join(name).display())))?;
    write_sidecar(create(&a.out.join("sidecar.csv"))?, &data)?;
    tree.write_csv(create(&a.out.join("tree.csv"))?)?;
    fs::write(
        a.out.join("branching.json"),
        serde_json::to_string_pretty(&bc).expect("serializable"),
    )?;
    println!("nodes={} observations={}", tree.len(), data.len());
    Ok(())
}

/// Makes dataset paths absolute so the echoed config works from any directory.
fn absolutize(cfg: &mut RunConfig, base: &Path) -> Result<(), CliError> {
    let fix = |p: &mut Option<PathBuf>| -> Result<(), CliError> {
        if let Some(path) = p {
            let joined = if path.is_absolute() {
                path.clone()
            } else {
                base.join(&*path)
            };
            *path = fs::canonicalize(&joined)
                .map_err(|e| CliError::Io(format!("{}: {e}", joined.display())))?;
        }
        Ok(())
    };
    fix(&mut cfg.dataset.path)?;
    fix(&mut cfg.dataset.sidecar)?;
    fix(&mut cfg.dataset.tree)
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn load_splits(cfg: &RunConfig, base: &Path) -> Result<Splits, CliError> {
    let data = cfg.dataset(base)?;
    data.validate()?;
    Ok(prepare_splits(
        &data,
        cfg.standardize(),
        cfg.split.ratios,
        cfg.split_seed(),
    )?)
}

fn echo_config(cfg: &RunConfig) -> String {
    let mut v = serde_json::to_value(cfg).expect("serializable");
    if let Some(train) = v.get_mut("train").and_then(|t| t.as_object_mut()) {
        train.remove("manifold");
        train.remove("seed");
    }
    serde_json::to_string_pretty(&v).expect("serializable") + "\n"
}

pub fn write_history<W: Write>(w: W, history: &[EpochRecord]) -> Result<(), CliError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["epoch", "train_loss", "val_loss", "lr"])?;
    for r in history {
        wr.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.val_loss.to_string(),
            r.lr.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub const METRIC_COLUMNS: [&str; 10] = [
    "split",
    "loss",
    "mae",
    "mse",
    "mean_f1",
    "pearson",
    "spearman",
    "n_points",
    "n_pairs",
    "pair_capped",
];

pub fn write_metrics<W: Write>(w: W, rows: &[SplitMetrics]) -> Result<(), CliError> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(METRIC_COLUMNS)?;
    for m in rows {
        wr.write_record([
            m.split.name().to_string(),
            m.loss.to_string(),
            m.mae.to_string(),
            m.mse.to_string(),
            opt(m.mean_f1),
            opt(m.pearson),
            opt(m.spearman),
            m.n_points.to_string(),
            m.n_pairs.to_string(),
            m.pair_capped.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

fn latents_file(split: Split) -> String {
    format!("latents_{}.csv", split.name())
}

fn train_cmd(a: &TrainArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(&a.config)?;
    let seed = cfg.resolve_seed(a.seed);
    let base = config_dir(&a.config);
    absolutize(&mut cfg, &base)?;
    let out = a.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let splits = load_splits(&cfg, &base)?;
    create_dir(&out)?;
    fs::write(out.join("config.json"), echo_config(&cfg))?;
    eprintln!(
        "seed={seed} train={} val={} test={} dim={}",
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        splits.train.dim()
    );

    let result = train_with_callback(&cfg.train, &splits.train, &splits.val, |r| {
        eprintln!(
            "epoch={} train_loss={:.6} val_loss={:.6} lr={:.6e}",
            r.epoch, r.train_loss, r.val_loss, r.lr
        );
    });
    let mut run = match result {
        Ok(r) => r,
        Err(TrainError::NonFinite {
            epoch,
            batch,
            snapshot,
        }) => {
            Checkpoint {
                decoder: snapshot.decoder.clone(),
                loss: cfg.train.loss,
                manifold: cfg.train.manifold.clone(),
            }
            .save(out.join("snapshot.ckpt"))?;
            snapshot
                .train_latents
                .save_csv(out.join("snapshot_latents_train.csv"))?;
            write_history(create(&out.join("history.csv"))?, &snapshot.history)?;
            return Err(CliError::Numeric(format!(
                "non-finite loss at epoch {epoch}, batch {batch}; last finite state in {}",
                out.join("snapshot.ckpt").display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    eprintln!(
        "stopped={:?} epochs={} best_epoch={}",
        run.stop,
        run.history.len(),
        run.best_epoch
    );
    run.test_latents = Some(infer_for_run(&cfg.train, &run.decoder, &splits.test)?);
    for split in Split::ALL {
        let latents = run.latents(split).expect("all splits present");
        let m = evaluate(
            &run.decoder,
            latents,
            splits.get(split),
            cfg.train.loss,
            split,
            cfg.eval.oracle,
            cfg.eval.n_points,
            seed,
        )?;
        run.metrics.push(m);
    }
    write_run(&out, &cfg, &run)?;
    write_metrics(std::io::stdout().lock(), &run.metrics)?;
    Ok(())
}

fn write_run(out: &Path, cfg: &RunConfig, run: &RunArtifacts) -> Result<(), CliError> {
    Checkpoint {
        decoder: run.decoder.clone(),
        loss: cfg.train.loss,
        manifold: cfg.train.manifold.clone(),
    }
    .save(out.join("decoder.ckpt"))?;
    for split in Split::ALL {
        if let Some(t) = run.latents(split) {
            t.save_csv(out.join(latents_file(split)))?;
        }
    }
    write_history(create(&out.join("history.csv"))?, &run.history)?;
    write_metrics(create(&out.join("metrics.csv"))?, &run.metrics)?;
    Ok(())
}

struct LoadedRun {
    cfg: RunConfig,
    checkpoint: Checkpoint,
}

fn load_run(dir: &Path) -> Result<LoadedRun, CliError> {
    let cfg = RunConfig::load(&dir.join("config.json"))?;
    let ck_path = dir.join("decoder.ckpt");
    let checkpoint = Checkpoint::load(&ck_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", ck_path.display())))?;
    if checkpoint.manifold != cfg.train.manifold {
        return Err(CliError::Config(
            "checkpoint manifold does not match config.json".into(),
        ));
    }
    Ok(LoadedRun { cfg, checkpoint })
}

fn load_latents(dir: &Path, spec: &ManifoldSpec, split: Split) -> Result<LatentTable, CliError> {
    let path = dir.join(latents_file(split));
    LatentTable::load_csv(spec, &path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn eval_cmd(a: &EvalArgs) -> Result<(), CliError> {
    let LoadedRun { cfg, checkpoint } = load_run(&a.run)?;
    let splits = load_splits(&cfg, &a.run)?;
    let data = splits.get(a.split);
    let latents = match a.split {
        Split::Test => infer_for_run(&cfg.train, &checkpoint.decoder, data)?,
        split => load_latents(&a.run, &cfg.train.manifold, split)?,
    };
    if latents.ids() != data.ids.as_slice() {
        return Err(CliError::Config(format!(
            "stored {} latents do not match the split rebuilt from config.json",
            a.split.name()
        )));
    }
    let m = evaluate(
        &checkpoint.decoder,
        &latents,
        data,
        checkpoint.loss,
        a.split,
        cfg.eval.oracle,
        cfg.eval.n_points,
        cfg.train.seed,
    )?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| a.run.join(format!("eval_{}.csv", a.split.name())));
    write_metrics(create(&out)?, std::slice::from_ref(&m))?;
    write_metrics(std::io::stdout().lock(), &[m])?;
    Ok(())
}

fn export_cmd(a: &ExportArgs) -> Result<(), CliError> {
    if a.format != "csv" {
        return Err(CliError::Config(format!(
            "export format {:?} not supported",
            a.format
        )));
    }
    let cfg = RunConfig::load(&a.run.join("config.json"))?;
    let spec = &cfg.train.manifold;
    let disk = match spec {
        ManifoldSpec::Lorentz { curvature, .. } if spec.kind() == ManifoldKind::Lorentz => {
            Some(*curvature)
        }
        _ => None,
    };
    let out = a.out.clone().unwrap_or_else(|| a.run.join("export.csv"));
    let mut wr = csv::Writer::from_writer(create(&out)?);
    let d = spec.ambient_dim();
    let mut header = vec!["id".to_string(), "split".into()];
    header.extend((0..d).map(|j| format!("x{j}")));
    if disk.is_some() {
        if d == 3 {
            header.extend(["disk_x".to_string(), "disk_y".into()]);
        } else {
            header.extend((0..d - 1).map(|j| format!("ball_{j}")));
        }
    }
    wr.write_record(&header)?;
    for split in Split::ALL {
        let t = load_latents(&a.run, spec, split)?;
        for i in 0..t.len() {
            let x = t.row(i);
            let mut rec = vec![t.ids()[i].to_string(), split.name().to_string()];
            rec.extend(x.iter().map(|v| v.to_string()));
            if let Some(c) = disk {
                rec.extend(lorentz_to_poincare(x, c).iter().map(|v| v.to_string()));
            }
            wr.write_record(&rec)?;
        }
    }
    wr.flush()?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn ablate_cmd(a: &AblateArgs) -> Result<(), CliError> {
    if a.sigmas.is_empty() {
        return Err(CliError::Config(
            "--sigmas must list at least one value".into(),
        ));
    }
    if a.seeds == 0 {
        return Err(CliError::Config("--seeds must be >= 1".into()));
    }
    let mut cfg = RunConfig::load(&a.config)?;
    let seed = cfg.resolve_seed(a.seed);
    let base = config_dir(&a.config);
    absolutize(&mut cfg, &base)?;
    let splits = load_splits(&cfg, &base)?;
    let grid = AblationGrid {
        sigmas: a.sigmas.clone(),
        curvatures: a.curvatures.clone(),
        seeds: (seed..seed + a.seeds).collect(),
    };
    let eval = EvalSettings {
        split: a.split,
        oracle: cfg.eval.oracle,
        n_points: cfg.eval.n_points,
    };
    eprintln!(
        "ablation: {} sigmas x {} curvatures x {} seeds",
        grid.sigmas.len(),
        grid.curvatures.len().max(1),
        grid.seeds.len()
    );
    let table = ablation_sweep(&cfg.train, &splits, &grid, &eval, a.jobs)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("ablation.csv"));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    table.write_csv(create(&out)?)?;
    table.write_csv(std::io::stdout().lock())?;
    Ok(())
}
