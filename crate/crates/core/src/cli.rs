//! Command-line front end: `train1d`, `train2d`, `eval` and `export`.
//!
//! Settings are layered: built-in defaults, then an optional TOML file,
//! then flags. The effective configuration is written to the run's
//! `manifest.json`, which is enough to reproduce every output.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::data::{Dataset, SignalSpec, SparseImageSpec, SparseSignalSpec, Split};
use crate::engine::{evaluate_with, score, train, EpochRecord, Model, SamplerKind, TauSchedule, TrainConfig, TrainSource};
use crate::error::Error;
use crate::metrics::Peak;
use crate::recon::ReconKind;
use crate::sampler::Extent;

pub const WORKERS_ENV: &str = "KSPACE_DPS_WORKERS";
pub const SOURCE_HASH: &str = env!("KSPACE_DPS_SOURCE_HASH");

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const PATTERN_FILE: &str = "pattern.txt";
pub const LOGITS_FILE: &str = "logits.csv";
pub const VAL_FILE: &str = "val.dataset";
pub const TEST_FILE: &str = "test.dataset";
pub const REPORT_FILE: &str = "report.csv";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Run(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

#[derive(Debug, Parser)]
#[command(name = "kspace-dps", version, about = "Learned Fourier subsampling with unrolled reconstruction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sparse 1D signals from partial Fourier measurements.
    Train1d(Train1dArgs),
    /// Sparse images from undersampled 2D spectra.
    Train2d(Train2dArgs),
    /// Score a checkpoint on a dataset file; writes a metrics report.
    Eval(EvalArgs),
    /// Dump a checkpoint's pattern, logits or reconstructions.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory; must not already hold a manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with `[experiment]` and `[train]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct Train1dArgs {
    /// dps-top1, dps-topM or random.
    #[arg(long)]
    pub sampler: Option<String>,
    /// mb (unrolled, model based) or fc (fully connected).
    #[arg(long)]
    pub recon: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, conflicts_with = "factor")]
    pub m: Option<usize>,
    /// Undersampling factor; sets `m = n / factor`.
    #[arg(long)]
    pub factor: Option<usize>,
    /// Only valid with dps-top1.
    #[arg(long)]
    pub entropy_weight: Option<f64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct Train2dArgs {
    /// dps-topM, random or lowpass.
    #[arg(long)]
    pub sampler: Option<String>,
    /// Image side length (power of two).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, conflicts_with = "factor")]
    pub m: Option<usize>,
    #[arg(long)]
    pub factor: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Report destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Pattern draws per example (defaults to the training setting).
    #[arg(long)]
    pub draws: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportWhat {
    Pattern,
    Logits,
    Reconstructions,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum)]
    pub what: ExportWhat,
    /// Input signals, required for reconstructions.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment1d {
    pub sampler: SamplerKind,
    pub recon: ReconKind,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub val_size: usize,
    pub test_size: usize,
}

impl Default for Experiment1d {
    fn default() -> Self {
        Self {
            sampler: SamplerKind::DpsTop1,
            recon: ReconKind::Lista,
            n: 128,
            m: 32,
            k: 5,
            val_size: 256,
            test_size: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment2d {
    pub sampler: SamplerKind,
    /// Side length of the square images.
    pub n: usize,
    pub factor: usize,
    pub k: usize,
    pub blur_sigma: f64,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
}

impl Default for Experiment2d {
    fn default() -> Self {
        Self {
            sampler: SamplerKind::DpsTopM,
            n: 64,
            factor: 16,
            k: 30,
            blur_sigma: 1.0,
            train_size: 800,
            val_size: 200,
            test_size: 300,
        }
    }
}

impl Experiment2d {
    pub fn m(&self) -> usize {
        (self.n * self.n) / self.factor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig<E> {
    pub experiment: E,
    pub train: TrainConfig,
}

/// Overlay `over` onto `base`, recursing into objects.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Defaults overlaid with the TOML file, if any. Also reports whether the
/// file pinned the temperature schedule.
fn layered<E>(defaults: RunConfig<E>, path: Option<&Path>) -> CliResult<(RunConfig<E>, bool)>
where
    E: Serialize + for<'de> Deserialize<'de>,
{
    let mut value = serde_json::to_value(&defaults)?;
    let mut pinned_tau = false;
    if let Some(path) = path {
        let text = fs::read_to_string(path)?;
        let file: toml::Table =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let file = serde_json::to_value(file)?;
        pinned_tau = file.pointer("/train/tau").is_some();
        merge(&mut value, file);
    }
    let config = serde_json::from_value(value).map_err(|e| CliError::Usage(format!("config: {e}")))?;
    Ok((config, pinned_tau))
}

fn workers_from_env() -> CliResult<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => usage(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")),
        },
        Err(_) => Ok(None),
    }
}

fn apply_common(train: &mut TrainConfig, common: &CommonArgs, pinned_tau: bool) -> CliResult<()> {
    if let Some(e) = common.epochs {
        train.max_epochs = e;
    }
    if let Some(s) = common.seed {
        train.seed = s;
    }
    if let Some(w) = workers_from_env()? {
        train.workers = w;
    }
    // the annealing horizon follows the epoch cap unless pinned explicitly
    if let (TauSchedule::Exponential { horizon, .. }, false) = (&mut train.tau, pinned_tau) {
        *horizon = train.max_epochs;
    }
    train.validate().map_err(|e| CliError::Usage(e.to_string()))
}

fn parse_sampler(s: &str) -> CliResult<SamplerKind> {
    s.parse().map_err(|e: Error| CliError::Usage(e.to_string()))
}

/// Effective 1D configuration after defaults, file and flags.
pub fn resolve_1d(args: &Train1dArgs) -> CliResult<RunConfig<Experiment1d>> {
    let defaults = RunConfig {
        experiment: Experiment1d::default(),
        train: TrainConfig::one_d(),
    };
    let (mut cfg, pinned_tau) = layered(defaults, args.common.config.as_deref())?;
    let ex = &mut cfg.experiment;
    if let Some(s) = &args.sampler {
        ex.sampler = parse_sampler(s)?;
    }
    if let Some(r) = &args.recon {
        ex.recon = match r.as_str() {
            "mb" | "lista" => ReconKind::Lista,
            "fc" => ReconKind::Fc,
            other => return usage(format!("--recon must be mb or fc, got {other:?}")),
        };
    }
    if let Some(n) = args.n {
        ex.n = n;
    }
    if let Some(m) = args.m {
        ex.m = m;
    }
    if let Some(f) = args.factor {
        if f == 0 || f > ex.n {
            return usage(format!("--factor must be in 1..={}, got {f}", ex.n));
        }
        ex.m = ex.n / f;
    }
    if ex.sampler == SamplerKind::LowPass {
        return usage("train1d supports dps-top1, dps-topM and random");
    }
    if ex.recon == ReconKind::Pg2d {
        return usage("train1d supports the mb and fc networks");
    }
    if !ex.n.is_power_of_two() {
        return usage(format!("--n must be a power of two, got {}", ex.n));
    }
    if ex.m == 0 || ex.m > ex.n {
        return usage(format!("--m must be in 1..={}, got {}", ex.n, ex.m));
    }
    if ex.k > ex.n || ex.val_size == 0 || ex.test_size == 0 {
        return usage("sparsity must not exceed n and split sizes must be positive");
    }
    if let Some(w) = args.entropy_weight {
        if ex.sampler != SamplerKind::DpsTop1 {
            return usage("--entropy-weight only applies to dps-top1 (no entropy penalty for top-M sampling)");
        }
        cfg.train.entropy_weight = w;
    }
    if cfg.experiment.sampler != SamplerKind::DpsTop1 {
        cfg.train.entropy_weight = 0.0;
    }
    apply_common(&mut cfg.train, &args.common, pinned_tau)?;
    Ok(cfg)
}

/// Effective 2D configuration after defaults, file and flags.
pub fn resolve_2d(args: &Train2dArgs) -> CliResult<RunConfig<Experiment2d>> {
    let defaults = RunConfig {
        experiment: Experiment2d::default(),
        train: TrainConfig::two_d(),
    };
    let (mut cfg, pinned_tau) = layered(defaults, args.common.config.as_deref())?;
    let ex = &mut cfg.experiment;
    if let Some(s) = &args.sampler {
        ex.sampler = parse_sampler(s)?;
    }
    if let Some(n) = args.n {
        ex.n = n;
    }
    if !ex.n.is_power_of_two() || ex.n < 8 {
        return usage(format!("--n must be a power of two of at least 8, got {}", ex.n));
    }
    let total = ex.n * ex.n;
    if let Some(m) = args.m {
        if m == 0 || m > total {
            return usage(format!("--m must be in 1..={total}, got {m}"));
        }
        ex.factor = total / m;
    }
    if let Some(f) = args.factor {
        ex.factor = f;
    }
    if ex.factor == 0 || ex.factor > total {
        return usage(format!("--factor must be in 1..={total}, got {}", ex.factor));
    }
    if ex.sampler == SamplerKind::DpsTop1 {
        return usage("train2d supports dps-topM, random and lowpass");
    }
    if ex.k > total || ex.train_size == 0 || ex.val_size == 0 || ex.test_size == 0 {
        return usage("sparsity must not exceed the pixel count and split sizes must be positive");
    }
    cfg.train.entropy_weight = 0.0;
    apply_common(&mut cfg.train, &args.common, pinned_tau)?;
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> CliResult<()> {
    if dir.join(MANIFEST_FILE).exists() {
        return usage(format!("{} already holds a run", dir.display()));
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

struct RunInputs<'a> {
    dir: &'a Path,
    command: &'a str,
    config: Value,
    train: &'a TrainConfig,
    model: Model<f64>,
    source: TrainSource<'a, f64>,
    val: &'a Dataset<f64>,
    test: &'a Dataset<f64>,
    peak: Peak,
    extra: Value,
    quiet: bool,
}

/// Shared tail of both training commands.
fn run_training(inp: RunInputs<'_>) -> CliResult<()> {
    let dir = inp.dir;
    let outputs = json!({
        "metrics": METRICS_FILE,
        "checkpoint": CHECKPOINT_FILE,
        "pattern": PATTERN_FILE,
        "logits": if inp.model.logits().is_some() { Value::from(LOGITS_FILE) } else { Value::Null },
        "val": VAL_FILE,
        "test": TEST_FILE,
        "report": REPORT_FILE,
    });
    let manifest = json!({
        "command": inp.command,
        "config": inp.config,
        "seed": inp.train.seed,
        "source_hash": SOURCE_HASH,
        "version": env!("CARGO_PKG_VERSION"),
        "outputs": outputs,
        "notes": inp.extra,
    });
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    inp.val.save(&dir.join(VAL_FILE))?;
    inp.test.save(&dir.join(TEST_FILE))?;

    let mut metrics = BufWriter::new(File::create(dir.join(METRICS_FILE))?);
    writeln!(metrics, "{}", EpochRecord::CSV_HEADER)?;
    let quiet = inp.quiet;
    let outcome = train(inp.train, inp.model, inp.source, inp.val, |r| {
        writeln!(metrics, "{}", r.csv_line())?;
        metrics.flush()?;
        if !quiet && (r.epoch % 10 == 0) {
            eprintln!("epoch {:>5}  train {:.6e}  val {:.6e}  tau {:.3}", r.epoch, r.train_loss, r.val_loss, r.tau);
        }
        Ok(())
    })?;
    let model = outcome.model;
    let meta = json!({ "command": inp.command, "config": inp.config });
    save_checkpoint(&dir.join(CHECKPOINT_FILE), &model, &meta)?;
    model.mode_pattern().write_to(BufWriter::new(File::create(dir.join(PATTERN_FILE))?))?;
    if let Some(bank) = model.logits() {
        bank.write_csv(BufWriter::new(File::create(dir.join(LOGITS_FILE))?))?;
    }
    let (report, mse) = score(&model, inp.test, inp.train.val_draws, inp.train.seed, inp.peak)?;
    report.write_csv(BufWriter::new(File::create(dir.join(REPORT_FILE))?))?;
    if !quiet {
        let last = outcome.history.last().expect("epoch 0 is always logged");
        eprintln!(
            "done after epoch {} (best val {:.6e} at epoch {}); test mse {:.6e}",
            last.epoch, outcome.best_val, outcome.best_epoch, mse
        );
    }
    Ok(())
}

pub fn cmd_train1d(args: &Train1dArgs) -> CliResult<()> {
    let cfg = resolve_1d(args)?;
    prepare_out(&args.common.out)?;
    let ex = &cfg.experiment;
    let spec = SignalSpec::Line(SparseSignalSpec { n: ex.n, k: ex.k });
    let seed = cfg.train.seed;
    let val = Dataset::generate(spec, seed, Split::Val, ex.val_size)?;
    let test = Dataset::generate(spec, seed, Split::Test, ex.test_size)?;
    let model = Model::build(ex.sampler, ex.recon, Extent::Line(ex.n), ex.m, seed)?;
    run_training(RunInputs {
        dir: &args.common.out,
        command: "train1d",
        config: serde_json::to_value(&cfg)?,
        train: &cfg.train,
        model,
        source: TrainSource::Generated(spec),
        val: &val,
        test: &test,
        peak: Peak::PerExample,
        extra: json!({ "epoch": format!("{} generated mini-batches", cfg.train.batches_per_epoch) }),
        quiet: args.common.quiet,
    })
}

pub fn cmd_train2d(args: &Train2dArgs) -> CliResult<()> {
    let cfg = resolve_2d(args)?;
    prepare_out(&args.common.out)?;
    let ex = &cfg.experiment;
    let spec = SignalSpec::Grid(SparseImageSpec {
        rows: ex.n,
        cols: ex.n,
        k: ex.k,
        blur_sigma: ex.blur_sigma,
    });
    let seed = cfg.train.seed;
    let train_set = Dataset::generate(spec, seed, Split::Train, ex.train_size)?;
    let val = Dataset::generate(spec, seed, Split::Val, ex.val_size)?;
    let test = Dataset::generate(spec, seed, Split::Test, ex.test_size)?;
    let model = Model::build(ex.sampler, ReconKind::Pg2d, spec.extent(), ex.m(), seed)?;
    run_training(RunInputs {
        dir: &args.common.out,
        command: "train2d",
        config: serde_json::to_value(&cfg)?,
        train: &cfg.train,
        model,
        source: TrainSource::Fixed(&train_set),
        val: &val,
        test: &test,
        peak: Peak::Fixed(1.0),
        extra: json!({
            "epoch": "one pass over the training split",
            "full_scale_setting": { "grid": "208x208", "factor": 80, "data": "knee MRI slices" },
            "measurements": ex.m(),
        }),
        quiet: args.common.quiet,
    })
}

fn checkpoint_settings(meta: &Value) -> (usize, u64) {
    let train = meta.pointer("/config/train");
    let draws = train.and_then(|t| t.get("val_draws")).and_then(Value::as_u64).unwrap_or(8) as usize;
    let seed = train.and_then(|t| t.get("seed")).and_then(Value::as_u64).unwrap_or(0);
    (draws, seed)
}

/// Evaluate with the checkpoint's own validation settings, so scoring the
/// run's validation file reproduces its logged loss. Returns the mean MSE.
pub fn cmd_eval(args: &EvalArgs) -> CliResult<f64> {
    let (model, meta) = load_checkpoint::<f64>(&args.checkpoint)?;
    let data = Dataset::<f64>::load(&args.dataset)?;
    let (draws, seed) = checkpoint_settings(&meta);
    let draws = args.draws.unwrap_or(draws);
    let peak = match model.extent {
        Extent::Grid { .. } => Peak::Fixed(1.0),
        Extent::Line(_) => Peak::PerExample,
    };
    let (report, mse) = score(&model, &data, draws, seed, peak)?;
    match &args.out {
        Some(path) => report.write_csv(BufWriter::new(File::create(path)?))?,
        None => report.write_csv(std::io::stdout().lock())?,
    }
    eprintln!("mse {mse}");
    Ok(mse)
}

pub fn cmd_export(args: &ExportArgs) -> CliResult<()> {
    let (model, meta) = load_checkpoint::<f64>(&args.checkpoint)?;
    match args.what {
        ExportWhat::Pattern => model.mode_pattern().write_to(BufWriter::new(File::create(&args.out)?))?,
        ExportWhat::Logits => match model.logits() {
            Some(bank) => bank.write_csv(BufWriter::new(File::create(&args.out)?))?,
            None => return usage("checkpoint uses a fixed pattern and has no logits"),
        },
        ExportWhat::Reconstructions => {
            let Some(path) = &args.dataset else {
                return usage("--dataset is required for reconstructions");
            };
            let data = Dataset::<f64>::load(path)?;
            let (_, seed) = checkpoint_settings(&meta);
            let mut ests = Vec::with_capacity(data.len());
            evaluate_with(&model, &data, 1, seed, 1, |_, _, e| ests.push(e.to_vec()))?;
            Dataset::from_signals(data.header.spec, data.header.seed, data.header.split, ests)?.save(&args.out)?;
        }
    }
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Train1d(a) => cmd_train1d(a),
        Command::Train2d(a) => cmd_train2d(a),
        Command::Eval(a) => cmd_eval(a).map(|_| ()),
        Command::Export(a) => cmd_export(a),
    }
}
