use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SignalSpec};
use crate::engine::adam::{adam_step, AdamConfig, AdamState};
use crate::engine::loss::total_loss;
use crate::engine::model::{Model, SamplerState};
use crate::engine::schedule::TauSchedule;
use crate::error::{Error, Result};
use crate::math::{ComplexVector, RngHandle, Scalar};
use crate::metrics::{MetricReport, Peak};
use crate::params::{accumulate, slice_norms};
use crate::recon::{self, ReconParams};
use crate::sampler::{backward_logits_factored, Extent, entropy_penalty, mean_entropy, SamplerMode, SamplingPattern, SoftSampleTape};

const TRAIN_NOISE_STREAM: u64 = 0x7EA1;
const TRAIN_DATA_STREAM: u64 = 0x7DA7;
const SHUFFLE_STREAM: u64 = 0x5AFF;
const EVAL_STREAM: u64 = 0xE7A1;
/// Examples per batched forward pass during evaluation.
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_sampler: f64,
    pub lr_recon: f64,
    pub adam: AdamConfig,
    /// How squared errors are reduced to the training objective. Logged
    /// losses are always per-element means.
    pub reduction: Reduction,
    /// Weight of the entropy penalty; only used by per-sample samplers.
    pub entropy_weight: f64,
    pub tau: TauSchedule,
    pub max_epochs: usize,
    /// Stop after this many epochs without a validation improvement larger
    /// than `min_delta`.
    pub patience: usize,
    pub min_delta: f64,
    /// Mini-batches per epoch when training data is generated on the fly.
    pub batches_per_epoch: usize,
    /// Noise draws averaged per validation example.
    pub val_draws: usize,
    pub seed: u64,
    /// Parallel workers per mini-batch; `1` guarantees bit-exact reruns.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::one_d()
    }
}

impl TrainConfig {
    /// Sparse-signal settings: annealed temperature, per-group learning rates.
    pub fn one_d() -> Self {
        Self {
            batch_size: 16,
            lr_sampler: 8e-2,
            lr_recon: 1e-3,
            adam: AdamConfig::default(),
            reduction: Reduction::Mean,
            entropy_weight: 1e-8,
            tau: TauSchedule::Exponential {
                start: 5.0,
                end: 0.5,
                horizon: 10_000,
            },
            max_epochs: 10_000,
            patience: 200,
            min_delta: 1e-6,
            batches_per_epoch: 100,
            val_draws: 8,
            seed: 0,
            workers: 1,
        }
    }

    /// Image settings: fixed temperature, no entropy penalty, squared error
    /// summed over pixels.
    pub fn two_d() -> Self {
        Self {
            reduction: Reduction::Sum,
            batch_size: 8,
            lr_sampler: 1e-2,
            lr_recon: 2e-4,
            entropy_weight: 0.0,
            tau: TauSchedule::Constant { value: 5.0 },
            max_epochs: 500,
            val_draws: 2,
            ..Self::one_d()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.lr_sampler >= 0.0 && self.lr_recon >= 0.0) {
            return bad("learning rates must be non-negative");
        }
        if !(self.entropy_weight >= 0.0) {
            return bad("entropy weight must be non-negative");
        }
        if !self.tau.is_valid() {
            return bad("temperature schedule needs start >= end > 0");
        }
        if self.val_draws == 0 || self.batches_per_epoch == 0 || self.workers == 0 {
            return bad("validation draws, batches per epoch and workers must be positive");
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return bad("ADAM needs beta in [0, 1) and eps > 0");
        }
        Ok(())
    }
}

/// Reduction of per-element squared errors to the training objective.
///
/// `Mean` averages over every element of the mini-batch. `Sum` adds up the
/// elements of each example and averages over examples, which scales the
/// gradient by the signal length. ADAM is invariant to that scale except
/// through `eps`, and on large images the per-element mean drives the logit
/// gradients below `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    Mean,
    Sum,
}

/// Where training examples come from.
#[derive(Debug, Clone, Copy)]
pub enum TrainSource<'a, T> {
    /// Fresh examples per mini-batch, keyed by `(seed, epoch, batch, slot)`.
    Generated(SignalSpec),
    /// A fixed set, reshuffled every epoch.
    Fixed(&'a Dataset<T>),
}

/// One row of the metrics log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub tau: f64,
    /// Mean per-row entropy of the logits; `NaN` for fixed patterns.
    pub entropy: f64,
}

impl EpochRecord {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_loss,tau,entropy";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch, self.train_loss, self.val_loss, self.tau, self.entropy
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let bad = || Error::Format {
            path: "<metrics>".into(),
            reason: format!("bad metrics row {line:?}"),
        };
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 5 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        Ok(Self {
            epoch: f[0].parse().map_err(|_| bad())?,
            train_loss: num(f[1])?,
            val_loss: num(f[2])?,
            tau: num(f[3])?,
            entropy: num(f[4])?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters after the last epoch run.
    pub model: Model<T>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub stopped_early: bool,
}

/// Thread pool wrapper: `None` runs everything on the caller's thread.
struct Workers(Option<rayon::ThreadPool>);

impl Workers {
    fn new(n: usize) -> Result<Self> {
        if n <= 1 {
            return Ok(Self(None));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|p| Self(Some(p)))
            .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))
    }

    fn count(&self) -> usize {
        self.0.as_ref().map_or(1, |p| p.current_num_threads())
    }

    /// Order-preserving map.
    fn map<I: Sync, R: Send>(&self, items: &[I], f: impl Fn(&I) -> R + Sync + Send) -> Vec<R> {
        use rayon::prelude::*;
        match &self.0 {
            None => items.iter().map(f).collect(),
            Some(pool) => pool.install(|| items.par_iter().map(f).collect()),
        }
    }
}

/// `(signal, spectrum)` pairs of one mini-batch.
type Batch<T> = Vec<(Vec<T>, ComplexVector<T>)>;

struct Example<T> {
    pattern: SamplingPattern,
    tape: Option<SoftSampleTape<T>>,
    spectrum: ComplexVector<T>,
    truth: Vec<T>,
}

/// Summed squared error and unnormalized-by-batch gradients of one chunk.
struct ChunkGrad<T> {
    sq_err: f64,
    recon: ReconParams<T>,
    logits: Option<Array2<T>>,
}

fn truth_matrix<T: Scalar>(examples: &[&Example<T>]) -> Array2<T> {
    let n = examples.first().map_or(0, |e| e.truth.len());
    Array2::from_shape_fn((n, examples.len()), |(i, b)| examples[b].truth[i])
}

fn forward_chunk<T: Scalar>(model: &Model<T>, examples: &[&Example<T>]) -> Result<(Array2<T>, recon::ReconTape<T>)> {
    let patterns: Vec<SamplingPattern> = examples.iter().map(|e| e.pattern.clone()).collect();
    let spectra: Vec<ComplexVector<T>> = examples.iter().map(|e| e.spectrum.clone()).collect();
    recon::forward(&model.recon, &patterns, &spectra)
}

fn squared_error<T: Scalar>(est: ArrayView2<T>, truth: ArrayView2<T>) -> f64 {
    est.iter().zip(truth).map(|(&a, &b)| (a - b).as_f64().powi(2)).sum()
}

/// Forward and backward over one chunk; `count` is the number of terms the
/// objective averages over in the whole mini-batch, so chunk gradients sum to
/// the batch gradient.
fn chunk_grad<T: Scalar>(model: &Model<T>, examples: &[&Example<T>], count: f64) -> Result<ChunkGrad<T>> {
    let (est, tape) = forward_chunk(model, examples)?;
    let truth = truth_matrix(examples);
    let sq_err = squared_error(est.view(), truth.view());
    let scale = T::lit(2.0 / count);
    let upstream = (&est - &truth).mapv(|d| d * scale);
    let learned = model.logits().is_some();
    let (recon_grad, selection) = recon::backward(&model.recon, &tape, upstream.view(), learned)?;
    let logits = match model.logits() {
        Some(bank) => {
            let mut g = Array2::zeros(bank.values.raw_dim());
            for (e, sel) in examples.iter().zip(&selection) {
                let tape = e.tape.as_ref().expect("learned samplers record a tape");
                g += &backward_logits_factored(tape, sel)?;
            }
            Some(g)
        }
        None => None,
    };
    Ok(ChunkGrad {
        sq_err,
        recon: recon_grad,
        logits,
    })
}

fn norm_report<T: Scalar>(model: &Model<T>) -> String {
    let mut norms = slice_norms(&model.recon);
    if let Some(bank) = model.logits() {
        norms.extend(slice_norms(&bank.values));
    }
    let parts: Vec<String> = norms.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Entropy term of the total loss, present for per-sample samplers only.
fn entropy_term<T: Scalar>(model: &Model<T>) -> Result<Option<(T, Array2<T>)>> {
    match model.logits() {
        Some(bank) if bank.mode() == SamplerMode::PerSample => entropy_penalty(bank).map(Some),
        _ => Ok(None),
    }
}

struct Trainer<'a, T> {
    config: &'a TrainConfig,
    source: TrainSource<'a, T>,
    root: RngHandle,
    workers: Workers,
}

impl<T: Scalar> Trainer<'_, T> {
    /// `(signal, spectrum)` pairs of every mini-batch of `epoch` (1-based).
    fn epoch_data(&self, epoch: usize) -> Result<Vec<Batch<T>>> {
        let bs = self.config.batch_size;
        match self.source {
            TrainSource::Generated(spec) => (0..self.config.batches_per_epoch)
                .map(|j| {
                    (0..bs)
                        .map(|b| {
                            let mut rng = self.root.derive(&[TRAIN_DATA_STREAM, epoch as u64, j as u64, b as u64]);
                            spec.generate_one(&mut rng)
                        })
                        .collect()
                })
                .collect(),
            TrainSource::Fixed(ds) => {
                if ds.is_empty() {
                    return Err(Error::InvalidParameter("empty training set".into()));
                }
                let mut order: Vec<usize> = (0..ds.len()).collect();
                order.shuffle(&mut self.root.derive(&[SHUFFLE_STREAM, epoch as u64]));
                Ok(order
                    .chunks(bs)
                    .map(|c| c.iter().map(|&i| (ds.signals[i].clone(), ds.spectra[i].clone())).collect())
                    .collect())
            }
        }
    }

    fn examples(
        &self,
        model: &Model<T>,
        epoch: usize,
        batch: usize,
        data: Batch<T>,
        tau: T,
    ) -> Result<Vec<Example<T>>> {
        data.into_iter()
            .enumerate()
            .map(|(b, (truth, spectrum))| {
                let mut rng = self.root.derive(&[TRAIN_NOISE_STREAM, epoch as u64, batch as u64, b as u64]);
                let (pattern, tape) = model.draw(&mut rng, tau)?;
                Ok(Example {
                    pattern,
                    tape,
                    spectrum,
                    truth,
                })
            })
            .collect()
    }

    fn split<'e>(&self, examples: &'e [Example<T>]) -> Vec<Vec<&'e Example<T>>> {
        let per = examples.len().div_ceil(self.workers.count()).max(1);
        examples.chunks(per).map(|c| c.iter().collect()).collect()
    }

    /// Mean training loss of the untouched model over the mini-batches of
    /// the first epoch (forward only).
    fn initial_train_loss(&self, model: &Model<T>, tau: T) -> Result<f64> {
        let entropy = entropy_term(model)?.map(|(h, _)| h);
        let mut total = 0.0;
        let batches = self.epoch_data(1)?;
        let nb = batches.len();
        for (j, data) in batches.into_iter().enumerate() {
            let examples = self.examples(model, 1, j, data, tau)?;
            let chunks = self.split(&examples);
            let sq: Vec<Result<f64>> = self.workers.map(&chunks, |c| {
                let (est, _) = forward_chunk(model, c)?;
                Ok(squared_error(est.view(), truth_matrix(c).view()))
            });
            let sq_err = sq.into_iter().sum::<Result<f64>>()?;
            let count = (examples.len() * model.n()) as f64;
            let mse = T::lit(sq_err / count);
            total += total_loss(mse, entropy, self.config.entropy_weight).as_f64();
        }
        Ok(total / nb as f64)
    }
}

/// Train `model`, validating on `val` after every epoch and calling
/// `on_epoch` with each metrics row (epoch 0 describes the initial model).
pub fn train<T: Scalar>(
    config: &TrainConfig,
    mut model: Model<T>,
    source: TrainSource<'_, T>,
    val: &Dataset<T>,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let trainer = Trainer {
        config,
        source,
        root: RngHandle::new(config.seed),
        workers: Workers::new(config.workers)?,
    };
    let entropy_of = |m: &Model<T>| m.logits().map_or(f64::NAN, |b| mean_entropy(b).as_f64());

    let mut recon_state = AdamState::new(&model.recon);
    let mut logit_state = model.logits().map(|b| AdamState::new(&b.values));

    let tau0 = config.tau.temperature(0);
    let first = EpochRecord {
        epoch: 0,
        train_loss: trainer.initial_train_loss(&model, T::lit(tau0))?,
        val_loss: evaluate_with(&model, val, config.val_draws, config.seed, config.workers, |_, _, _| {})?,
        tau: tau0,
        entropy: entropy_of(&model),
    };
    on_epoch(&first)?;
    let mut history = vec![first];
    let (mut best_val, mut best_epoch, mut stale) = (first.val_loss, 0, 0usize);
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        let tau_f = config.tau.temperature(epoch - 1);
        let tau = T::lit(tau_f);
        let mut loss_sum = 0.0;
        let batches = trainer.epoch_data(epoch)?;
        let nb = batches.len();
        for (j, data) in batches.into_iter().enumerate() {
            let examples = trainer.examples(&model, epoch, j, data, tau)?;
            let count = (examples.len() * model.n()) as f64;
            let terms = match config.reduction {
                Reduction::Mean => count,
                Reduction::Sum => examples.len() as f64,
            };
            let chunks = trainer.split(&examples);
            let grads: Vec<Result<ChunkGrad<T>>> = trainer.workers.map(&chunks, |c| chunk_grad(&model, c, terms));
            let mut grads = grads.into_iter();
            let mut acc = grads.next().expect("at least one chunk")?;
            for g in grads {
                let g = g?;
                acc.sq_err += g.sq_err;
                accumulate(&mut acc.recon, &g.recon);
                if let (Some(a), Some(b)) = (acc.logits.as_mut(), g.logits.as_ref()) {
                    *a += b;
                }
            }
            let entropy = entropy_term(&model)?;
            let mse = T::lit(acc.sq_err / count);
            let loss = total_loss(mse, entropy.as_ref().map(|e| e.0), config.entropy_weight);
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: j,
                    report: norm_report(&model),
                });
            }
            loss_sum += loss.as_f64();

            adam_step(&mut model.recon, &acc.recon, &mut recon_state, config.lr_recon, &config.adam)?;
            if let (SamplerState::Learned(bank), Some(state), Some(mut g)) =
                (&mut model.sampler, logit_state.as_mut(), acc.logits)
            {
                if let Some((_, dh)) = entropy {
                    g.scaled_add(T::lit(config.entropy_weight), &dh);
                }
                adam_step(&mut bank.values, &g, state, config.lr_sampler, &config.adam)?;
            }
        }

        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / nb as f64,
            val_loss: evaluate_with(&model, val, config.val_draws, config.seed, config.workers, |_, _, _| {})?,
            tau: tau_f,
            entropy: entropy_of(&model),
        };
        on_epoch(&record)?;
        history.push(record);
        if record.val_loss < best_val - config.min_delta {
            best_val = record.val_loss;
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_val,
        stopped_early,
    })
}

/// Mean squared error over `data`, averaged over `draws` hard patterns per
/// example. Pattern noise for draw `d` of example `i` is keyed by
/// `(seed, d, i)`, so the value is reproducible. Fixed patterns use a
/// single draw. `visit(draw, index, estimate)` sees every reconstruction in
/// order.
pub fn evaluate_with<T: Scalar>(
    model: &Model<T>,
    data: &Dataset<T>,
    draws: usize,
    seed: u64,
    workers: usize,
    mut visit: impl FnMut(usize, usize, &[T]),
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidParameter("empty evaluation set".into()));
    }
    if data.signal_len() != model.n() {
        return Err(Error::LengthMismatch {
            expected: model.n(),
            got: data.signal_len(),
        });
    }
    let draws = if model.logits().is_some() { draws.max(1) } else { 1 };
    let root = RngHandle::new(seed);
    let pool = Workers::new(workers)?;
    // tau only shapes the backward relaxation; hard draws ignore it
    let tau = T::one();
    let mut total = 0.0;
    for d in 0..draws {
        let starts: Vec<usize> = (0..data.len()).step_by(EVAL_CHUNK).collect();
        let outputs: Vec<Result<(Array2<T>, Vec<f64>)>> = pool.map(&starts, |&start| {
            let end = (start + EVAL_CHUNK).min(data.len());
            let mut patterns = Vec::with_capacity(end - start);
            for i in start..end {
                let mut rng = root.derive(&[EVAL_STREAM, d as u64, i as u64]);
                patterns.push(model.draw(&mut rng, tau)?.0);
            }
            let (est, _) = recon::forward(&model.recon, &patterns, &data.spectra[start..end])?;
            let per_example = (start..end)
                .enumerate()
                .map(|(b, i)| {
                    let col = est.column(b);
                    col.iter().zip(&data.signals[i]).map(|(&a, &s)| (a - s).as_f64().powi(2)).sum::<f64>()
                        / col.len() as f64
                })
                .collect();
            Ok((est, per_example))
        });
        for (start, out) in starts.iter().zip(outputs) {
            let (est, per_example) = out?;
            for (b, e) in per_example.iter().enumerate() {
                total += e;
                let col = est.column(b).to_vec();
                visit(d, start + b, &col);
            }
        }
    }
    Ok(total / (draws * data.len()) as f64)
}

/// [`evaluate_with`] without a visitor, single-threaded.
pub fn evaluate<T: Scalar>(model: &Model<T>, data: &Dataset<T>, draws: usize, seed: u64) -> Result<f64> {
    evaluate_with(model, data, draws, seed, 1, |_, _, _| {})
}

/// Per-example metrics averaged over `draws` hard patterns, with the overall
/// mean MSE. Noise keys match [`evaluate_with`]; SSIM is computed for grids.
pub fn score<T: Scalar>(
    model: &Model<T>,
    data: &Dataset<T>,
    draws: usize,
    seed: u64,
    peak: Peak,
) -> Result<(MetricReport, f64)> {
    let grid = match model.extent {
        Extent::Grid { rows, cols } => Some((rows, cols)),
        Extent::Line(_) => None,
    };
    let mut per_draw: Vec<Vec<Vec<T>>> = Vec::new();
    let mse = evaluate_with(model, data, draws, seed, 1, |d, _, est| {
        if per_draw.len() <= d {
            per_draw.push(Vec::with_capacity(data.len()));
        }
        per_draw[d].push(est.to_vec());
    })?;
    let reports = per_draw
        .iter()
        .map(|ests| MetricReport::compute(ests, &data.signals, grid, peak))
        .collect::<Result<Vec<_>>>()?;
    let k = reports.len() as f64;
    let avg = |pick: &dyn Fn(&MetricReport) -> &[f64]| -> Vec<f64> {
        (0..data.len()).map(|i| reports.iter().map(|r| pick(r)[i]).sum::<f64>() / k).collect()
    };
    let report = MetricReport {
        mse: avg(&|r| &r.mse),
        psnr: avg(&|r| &r.psnr),
        ssim: grid.map(|_| avg(&|r| r.ssim.as_deref().unwrap_or(&[]))),
        peak,
    };
    Ok((report, mse))
}
