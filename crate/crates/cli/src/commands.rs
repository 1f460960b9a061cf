//! The five subcommands, each a thin orchestration over the engine crate.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use kernelga::data::Dataset;
use kernelga::ga::{self, SearchError, SearchReport};
use kernelga::genome::{Genome, ALLOWED_KERNELS};
use kernelga::trainer::{self, EvaluationRecord};
use kernelga::{Error, Result};

use crate::artifacts::{
    append_stamped_record, baseline_file, read_json, render_table, write_json, ComparisonReport,
    ComparisonRow, StampedRecord, StampedReport, BEST_MODEL_FILE, COMPARISON_FILE,
    EVALUATION_LOG_FILE, SEARCH_REPORT_FILE,
};
use crate::config::RunConfig;

/// Runs the evolutionary search and writes the report, the per-generation
/// checkpoints, the evaluation log and the best model into the run directory.
pub fn search(config: &RunConfig) -> Result<()> {
    let (train, val) = prepare_run(config)?;
    let outcome = run_search_with_logging(config, &train, &val, None);
    finish_search(config, outcome)
}

/// Trains one fixed-kernel configuration and writes its artifact.
pub fn baseline(config: &RunConfig, k: u8) -> Result<()> {
    if !ALLOWED_KERNELS.contains(&k) {
        return Err(Error::config(format!(
            "--k must be one of 3, 5, 7 (got {k})"
        )));
    }
    let (train, val) = prepare_run(config)?;
    let record = trainer::fixed_kernel_run(k, &config.template, &train, &val, &config.train)?;
    let fingerprint = fingerprint_of(config);
    append_stamped_record(
        &config.out_dir.join(EVALUATION_LOG_FILE),
        &StampedRecord { config_fingerprint: fingerprint.clone(), record: record.clone() },
    )?;
    // The artifact keeps only the deterministic fields; wall-clock time stays
    // in the evaluation log.
    let artifact = config.out_dir.join(baseline_file(k));
    write_json(
        &artifact,
        &StampedRecord { config_fingerprint: fingerprint, record: record.without_wall_clock() },
    )?;
    println!(
        "fixed {k}x{k}: fitness {:.4} at epoch {} ({} epochs trained)",
        record.fitness,
        record.best_epoch,
        record.val_accuracy.len()
    );
    println!("artifact {}", artifact.display());
    Ok(())
}

/// Combines a run directory's search report and baselines into one table,
/// printed and written as `comparison.json`.
pub fn report(run_dir: &Path) -> Result<()> {
    if !run_dir.is_dir() {
        return Err(Error::data(format!(
            "run directory not found: {}",
            run_dir.display()
        )));
    }
    let mut fingerprint: Option<String> = None;
    let mut rows = Vec::new();

    let report_path = run_dir.join(SEARCH_REPORT_FILE);
    if report_path.exists() {
        let stamped: StampedReport = read_json(&report_path)?;
        rows.push(ComparisonRow {
            label: "evolved".to_string(),
            genome: stamped.report.best_genome.clone(),
            fitness: stamped.report.best_fitness,
        });
        fingerprint.get_or_insert(stamped.config_fingerprint);
    }
    for k in ALLOWED_KERNELS {
        let path = run_dir.join(baseline_file(k));
        if !path.exists() {
            continue;
        }
        let stamped: StampedRecord = read_json(&path)?;
        rows.push(ComparisonRow {
            label: format!("fixed {k}x{k}"),
            genome: stamped.record.genome.clone(),
            fitness: stamped.record.fitness,
        });
        fingerprint.get_or_insert(stamped.config_fingerprint);
    }
    if rows.is_empty() {
        return Err(Error::data(format!(
            "no search report or baselines in {}",
            run_dir.display()
        )));
    }
    let comparison = ComparisonReport {
        config_fingerprint: fingerprint.unwrap_or_default(),
        rows,
    };
    write_json(&run_dir.join(COMPARISON_FILE), &comparison)?;
    print!("{}", render_table(&comparison.rows));
    Ok(())
}

/// Continues a checkpointed search to completion. A checkpoint of a finished
/// run resumes into zero remaining generations and simply rewrites the report.
pub fn resume(checkpoint_path: &Path) -> Result<()> {
    if !checkpoint_path.exists() {
        return Err(Error::data(format!(
            "checkpoint not found: {}",
            checkpoint_path.display()
        )));
    }
    let run_dir = checkpoint_path
        .parent()
        .and_then(Path::parent)
        .ok_or_else(|| {
            Error::usage(format!(
                "checkpoint {} must live under <run directory>/checkpoints/",
                checkpoint_path.display()
            ))
        })?;
    let config = RunConfig::load_resolved(run_dir)?;
    let checkpoint = ga::SearchCheckpoint::load(checkpoint_path)?;
    let (train, val) = prepare_data(&config)?;
    let outcome = run_search_with_logging(&config, &train, &val, Some(checkpoint));
    finish_search(&config, outcome)
}

/// Builds the preprocessed dataset cache and reports what it holds.
pub fn preprocess(config: &RunConfig) -> Result<()> {
    fs::create_dir_all(&config.out_dir)
        .map_err(|e| Error::data(format!("cannot create {}: {e}", config.out_dir.display())))?;
    config.write_resolved()?;
    let dataset = config.load_dataset()?;
    let mut counts = vec![0usize; dataset.num_classes()];
    for &label in dataset.labels() {
        counts[label] += 1;
    }
    println!(
        "cached {} samples ({}x{}, {} classes) at {}",
        dataset.len(),
        dataset.side(),
        dataset.side(),
        dataset.num_classes(),
        config.dataset_cache_path().display()
    );
    println!("class counts: {counts:?}");
    Ok(())
}

/// Creates the run directory, writes the resolved configuration and loads the
/// split data.
fn prepare_run(config: &RunConfig) -> Result<(Dataset, Dataset)> {
    fs::create_dir_all(&config.out_dir)
        .map_err(|e| Error::data(format!("cannot create {}: {e}", config.out_dir.display())))?;
    config.write_resolved()?;
    prepare_data(config)
}

fn prepare_data(config: &RunConfig) -> Result<(Dataset, Dataset)> {
    if let Some(dir) = &config.train.checkpoint_dir {
        fs::create_dir_all(dir)
            .map_err(|e| Error::data(format!("cannot create {}: {e}", dir.display())))?;
    }
    let dataset = config.load_dataset()?;
    let (train, val) = config.split(&dataset)?;
    log::info!(
        "dataset ready: {} training / {} validation samples, {} classes",
        train.len(),
        val.len(),
        train.num_classes()
    );
    Ok((train, val))
}

/// Drives a fresh or resumed search with every evaluation appended to the
/// run's log file.
fn run_search_with_logging(
    config: &RunConfig,
    train: &Dataset,
    val: &Dataset,
    checkpoint: Option<ga::SearchCheckpoint>,
) -> std::result::Result<SearchReport, SearchError> {
    let evaluator = trainer::make_evaluator(&config.template, train, val, &config.train);
    let log_path = config.out_dir.join(EVALUATION_LOG_FILE);
    let log_lock: Mutex<PathBuf> = Mutex::new(log_path);
    let fingerprint = fingerprint_of(config);
    let fitness = |genome: &Genome, seed: u64| -> Result<f64> {
        let record: EvaluationRecord = evaluator(genome, seed)?;
        let path = log_lock.lock().expect("log lock is never poisoned");
        append_stamped_record(
            &path,
            &StampedRecord { config_fingerprint: fingerprint.clone(), record: record.clone() },
        )?;
        drop(path);
        Ok(record.fitness)
    };
    match checkpoint {
        None => ga::run_search(&config.ga, &config.template, fitness),
        Some(checkpoint) => ga::resume_search(checkpoint, &config.template, fitness),
    }
}

/// Writes the search report (complete or partial), copies the winning model
/// and prints the outcome. A failed search still leaves its partial report
/// behind before the error propagates.
fn finish_search(
    config: &RunConfig,
    outcome: std::result::Result<SearchReport, SearchError>,
) -> Result<()> {
    match outcome {
        Ok(report) => {
            write_report(config, &report)?;
            promote_best_model(config, &report)?;
            println!("best genome  {}", report.best_genome);
            println!("best fitness {:.4}", report.best_fitness);
            println!("evaluations  {}", report.evaluations);
            println!(
                "report       {}",
                config.out_dir.join(SEARCH_REPORT_FILE).display()
            );
            Ok(())
        }
        Err(SearchError { partial, source }) => {
            if let Err(write_error) = write_report(config, &partial) {
                log::error!("could not write partial report: {write_error}");
            }
            Err(source)
        }
    }
}

fn write_report(config: &RunConfig, report: &SearchReport) -> Result<()> {
    write_json(
        &config.out_dir.join(SEARCH_REPORT_FILE),
        &StampedReport { config_fingerprint: fingerprint_of(config), report: report.clone() },
    )
}

/// Copies the best genome's training checkpoint to a stable name. The file is
/// absent when every epoch of the winner diverged; that is not an error worth
/// failing the whole run for.
fn promote_best_model(config: &RunConfig, report: &SearchReport) -> Result<()> {
    let Some(models_dir) = &config.train.checkpoint_dir else {
        return Ok(());
    };
    if report.best_genome.is_empty() {
        return Ok(());
    }
    let genome = Genome::from_str(&report.best_genome)?;
    let source = trainer::checkpoint_path(models_dir, &genome);
    if !source.exists() {
        log::warn!(
            "no checkpoint for best genome [{}]; model copy skipped",
            report.best_genome
        );
        return Ok(());
    }
    let target = config.out_dir.join(BEST_MODEL_FILE);
    fs::copy(&source, &target)
        .map_err(|e| Error::data(format!("cannot copy {}: {e}", source.display())))?;
    Ok(())
}

fn fingerprint_of(config: &RunConfig) -> String {
    config.config_fingerprint.clone().unwrap_or_default()
}
