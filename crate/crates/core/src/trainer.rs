//! Per-genome training: the bridge from architectures to fitness.
//!
//! [`train_individual`] builds the model a genome describes, trains it with
//! RMSProp (per-epoch shuffle, per-epoch learning-rate decay, dropout on the
//! fully-connected stages) and reports the best validation accuracy seen over
//! the epochs — that number is the genome's fitness. Training that produces a
//! non-finite loss is recorded with fitness 0 and a divergence flag instead of
//! aborting, so a search never loses a population slot to a blowup.

use std::fs;
use std::fs::OpenOptions;
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::genome::{Genome, NetworkTemplate};
use crate::model::{build_model, MultiColumnModel};
use crate::nn::layers::Mode;
use crate::nn::loss::{cross_entropy_with_grad, one_hot};
use crate::optim::{OptimConfig, RmsPropState};
use crate::rng::{stream_rng, Stream};

/// Training hyperparameters for one individual's evaluation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Epochs trained per evaluation.
    pub epochs: usize,
    /// Mini-batch size for training and evaluation.
    pub batch_size: usize,
    /// Optimizer settings.
    pub optim: OptimConfig,
    /// Dropout rate applied to the fully-connected stages.
    pub dropout_rate: f64,
    /// Where best-epoch model checkpoints go; `None` skips writing them.
    pub checkpoint_dir: Option<PathBuf>,
    /// Seed used when the caller does not supply a per-evaluation seed
    /// (fixed-kernel baselines and standalone runs).
    pub eval_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 100,
            batch_size: 250,
            optim: OptimConfig::default(),
            dropout_rate: 0.5,
            checkpoint_dir: None,
            eval_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(format!(
                "dropout_rate must be in [0,1), got {}",
                self.dropout_rate
            )));
        }
        self.optim.validate()
    }
}

/// Everything observed while evaluating one genome.
///
/// Serialized one-per-line into the evaluation log. `wall_clock_seconds` is
/// the only field that varies between identical seeded runs; determinism
/// comparisons go through [`EvaluationRecord::without_wall_clock`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvaluationRecord {
    /// Genome in text form.
    pub genome: String,
    /// Best validation accuracy over the epochs — the fitness. Forced to 0
    /// when training diverged.
    pub fitness: f64,
    /// Epoch index (0-based) the best accuracy was observed at; ties keep the
    /// earliest epoch.
    pub best_epoch: usize,
    /// Mean training loss per completed epoch. Truncated at the epoch that
    /// diverged, so the length is `epochs` exactly on the normal path.
    pub train_loss: Vec<f64>,
    /// Validation accuracy per completed epoch.
    pub val_accuracy: Vec<f64>,
    /// True when a non-finite loss or gradient ended training early.
    pub diverged: bool,
    /// Seed this evaluation ran under.
    pub seed: u64,
    /// Wall-clock duration of the evaluation.
    pub wall_clock_seconds: f64,
}

impl EvaluationRecord {
    /// Copy with the wall clock zeroed, for field-for-field determinism
    /// comparisons.
    pub fn without_wall_clock(&self) -> EvaluationRecord {
        EvaluationRecord { wall_clock_seconds: 0.0, ..self.clone() }
    }
}

/// Path of the best-epoch checkpoint for a genome under `dir`.
pub fn checkpoint_path(dir: &Path, genome: &Genome) -> PathBuf {
    dir.join(format!("genome-{genome}.kga1"))
}

/// Appends one record to a JSON-lines evaluation log, creating the file if
/// needed.
pub fn append_to_log(path: &Path, record: &EvaluationRecord) -> Result<()> {
    let line = serde_json::to_string(record)
        .map_err(|e| Error::data(format!("serializing evaluation record: {e}")))?;
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(file, "{line}")?;
    Ok(())
}

/// Outcome of one epoch of gradient steps.
enum EpochOutcome {
    /// Mean training loss over the epoch.
    Completed(f64),
    /// A non-finite loss or gradient appeared.
    Diverged,
}

fn train_one_epoch(
    model: &mut MultiColumnModel,
    optimizer: &mut RmsPropState,
    train: &Dataset,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<EpochOutcome> {
    let mut shuffle_rng = stream_rng(seed, Stream::Shuffle(epoch as u64));
    let batches = crate::data::epoch_batches(train.len(), batch_size, &mut shuffle_rng);
    let mut loss_sum = 0.0;
    let mut sample_count = 0usize;
    for indices in &batches {
        let batch = train.gather(indices)?;
        let targets = one_hot(batch.labels(), batch.num_classes())?;
        let logits = model.forward(batch.images(), Mode::Train)?;
        let (loss, grad_logits) = cross_entropy_with_grad(&logits, &targets)?;
        if !loss.is_finite() {
            return Ok(EpochOutcome::Diverged);
        }
        loss_sum += loss * indices.len() as f64;
        sample_count += indices.len();
        model.backward(&grad_logits)?;
        let step = model.for_each_parameter(|slot, param, grad, site| {
            optimizer.rmsprop_step(slot, param, grad, site)
        });
        match step {
            Ok(()) => {}
            // A non-finite gradient is the same blowup as a non-finite loss,
            // caught one step later; fold it into the divergence path.
            Err(Error::Numeric { .. }) => return Ok(EpochOutcome::Diverged),
            Err(e) => return Err(e),
        }
    }
    Ok(EpochOutcome::Completed(loss_sum / sample_count as f64))
}

/// Trains one genome and returns its evaluation record. Deterministic in
/// `seed`: model init, dropout masks and epoch shuffles are all derived from
/// it through fixed streams. The learning rate starts fresh for every call.
pub fn train_individual(
    genome: &Genome,
    template: &NetworkTemplate,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<EvaluationRecord> {
    cfg.validate()?;
    let started = Instant::now();

    let mut init_rng = stream_rng(seed, Stream::ModelInit);
    let dropout_rng = stream_rng(seed, Stream::Dropout);
    let mut model = build_model(genome, template, cfg.dropout_rate, &mut init_rng, dropout_rng)?;
    let mut optimizer = RmsPropState::new(cfg.optim)?;

    let checkpoint = cfg.checkpoint_dir.as_deref().map(|dir| checkpoint_path(dir, genome));
    if let Some(dir) = cfg.checkpoint_dir.as_deref() {
        fs::create_dir_all(dir)?;
    }

    let mut train_loss = Vec::with_capacity(cfg.epochs);
    let mut val_accuracy = Vec::with_capacity(cfg.epochs);
    let mut best = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut diverged = false;

    for epoch in 0..cfg.epochs {
        match train_one_epoch(&mut model, &mut optimizer, train, cfg.batch_size, seed, epoch)? {
            EpochOutcome::Diverged => {
                diverged = true;
                break;
            }
            EpochOutcome::Completed(mean_loss) => {
                train_loss.push(mean_loss);
                let accuracy =
                    model.evaluate_accuracy(val.images(), val.labels(), cfg.batch_size)?;
                val_accuracy.push(accuracy);
                if accuracy > best {
                    best = accuracy;
                    best_epoch = epoch;
                    if let Some(path) = &checkpoint {
                        model.save_checkpoint(path)?;
                    }
                }
                optimizer.decay_learning_rate();
            }
        }
    }

    if diverged {
        // A checkpoint from a pre-divergence epoch would advertise a fitness
        // the record no longer claims; drop it.
        if let Some(path) = &checkpoint {
            match fs::remove_file(path) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    Ok(EvaluationRecord {
        genome: genome.to_string(),
        fitness: if diverged { 0.0 } else { best },
        best_epoch: if diverged { 0 } else { best_epoch },
        train_loss,
        val_accuracy,
        diverged,
        seed,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Builds the evaluation closure handed to the search: seeds come from the
/// caller per evaluation, everything else is captured. The closure is `Sync`
/// so evaluations can run on worker threads over disjoint models.
pub fn make_evaluator<'a>(
    template: &'a NetworkTemplate,
    train: &'a Dataset,
    val: &'a Dataset,
    cfg: &'a TrainConfig,
) -> impl Fn(&Genome, u64) -> Result<EvaluationRecord> + Sync + 'a {
    move |genome, seed| train_individual(genome, template, train, val, cfg, seed)
}

/// Trains the homogeneous genome `[k] × genome_len` — the fixed-kernel
/// baselines the comparison report sets against the evolved result.
pub fn fixed_kernel_run(
    k: u8,
    template: &NetworkTemplate,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<EvaluationRecord> {
    let genome = Genome::homogeneous(k, template.genome_len())?;
    train_individual(&genome, template, train, val, cfg, cfg.eval_seed)
}
