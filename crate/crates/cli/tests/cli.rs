//! End-to-end tests of the `kernelga` binary: exit codes, artifact layout,
//! determinism and the resume contract.
//!
//! Runs are shrunk well below the desk-scale profile with `--set` so the
//! whole suite stays fast; the full profile is exercised by the acceptance
//! suite.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kernelga_cli::artifacts::{ComparisonReport, StampedRecord, StampedReport};

fn kernelga(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kernelga"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("process exits normally")
}

/// Shrunk tiny run: 90 samples, 2 epochs — a few seconds end to end.
fn quick_search_args<'a>(out: &'a str, seed: &'a str) -> Vec<&'a str> {
    vec![
        "search",
        "--tiny",
        "--seed",
        seed,
        "--out",
        out,
        "--set",
        "data.n_samples=90",
        "--set",
        "data.validation_size=30",
        "--set",
        "train.epochs=2",
    ]
}

fn quick_baseline_args<'a>(out: &'a str, k: &'a str) -> Vec<&'a str> {
    vec![
        "baseline",
        "--k",
        k,
        "--tiny",
        "--seed",
        "7",
        "--out",
        out,
        "--set",
        "data.n_samples=90",
        "--set",
        "data.validation_size=30",
        "--set",
        "train.epochs=2",
    ]
}

fn read_report(dir: &Path) -> StampedReport {
    let text = fs::read_to_string(dir.join("search-report.json")).expect("report exists");
    serde_json::from_str(&text).expect("report parses")
}

#[test]
fn same_seed_same_config_writes_byte_identical_reports() {
    let root = tempfile::tempdir().unwrap();
    let dir_a = root.path().join("a");
    let dir_b = root.path().join("b");
    let a = kernelga(&quick_search_args(dir_a.to_str().unwrap(), "7"));
    assert_eq!(exit_code(&a), 0, "stderr: {}", stderr_of(&a));
    let b = kernelga(&quick_search_args(dir_b.to_str().unwrap(), "7"));
    assert_eq!(exit_code(&b), 0, "stderr: {}", stderr_of(&b));

    let report_a = fs::read(dir_a.join("search-report.json")).unwrap();
    let report_b = fs::read(dir_b.join("search-report.json")).unwrap();
    assert_eq!(report_a, report_b, "reports of identical runs differ");

    // A different seed must change the outcome bytes' seed field at minimum.
    let dir_c = root.path().join("c");
    let c = kernelga(&quick_search_args(dir_c.to_str().unwrap(), "8"));
    assert_eq!(exit_code(&c), 0, "stderr: {}", stderr_of(&c));
    let report_c = fs::read(dir_c.join("search-report.json")).unwrap();
    assert_ne!(report_a, report_c);
}

#[test]
fn jobs_flag_does_not_change_the_report() {
    let root = tempfile::tempdir().unwrap();
    let dir_a = root.path().join("a");
    let dir_b = root.path().join("b");
    let mut args_a = quick_search_args(dir_a.to_str().unwrap(), "3");
    args_a.extend(["--jobs", "1"]);
    let mut args_b = quick_search_args(dir_b.to_str().unwrap(), "3");
    args_b.extend(["--jobs", "2"]);
    let a = kernelga(&args_a);
    assert_eq!(exit_code(&a), 0, "stderr: {}", stderr_of(&a));
    let b = kernelga(&args_b);
    assert_eq!(exit_code(&b), 0, "stderr: {}", stderr_of(&b));
    assert_eq!(
        fs::read(dir_a.join("search-report.json")).unwrap(),
        fs::read(dir_b.join("search-report.json")).unwrap()
    );
}

#[test]
fn search_writes_the_full_artifact_set() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("run");
    let output = kernelga(&quick_search_args(dir.to_str().unwrap(), "7"));
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));

    assert!(dir.join("run-config.toml").exists());
    assert!(dir.join("search-report.json").exists());
    assert!(dir.join("evaluations.jsonl").exists());
    assert!(dir.join("best-model.kga1").exists());
    for generation in 0..3 {
        assert!(
            dir.join(format!("checkpoints/checkpoint-gen{generation:03}.json")).exists(),
            "missing checkpoint for generation {generation}"
        );
    }

    // Every artifact carries the same fingerprint.
    let report = read_report(&dir);
    assert_eq!(report.config_fingerprint.len(), 16);
    let log = fs::read_to_string(dir.join("evaluations.jsonl")).unwrap();
    for line in log.lines() {
        let stamped: StampedRecord = serde_json::from_str(line).unwrap();
        assert_eq!(stamped.config_fingerprint, report.config_fingerprint);
    }
    let checkpoint = fs::read_to_string(dir.join("checkpoints/checkpoint-gen000.json")).unwrap();
    assert!(
        checkpoint.contains(&report.config_fingerprint),
        "checkpoint does not embed the fingerprint"
    );
    let config_text = fs::read_to_string(dir.join("run-config.toml")).unwrap();
    assert!(config_text.contains(&report.config_fingerprint));

    // The stdout summary names the winner.
    let stdout = stdout_of(&output);
    assert!(stdout.contains("best genome"), "stdout: {stdout}");
    assert!(stdout.contains(&report.report.best_genome));
}

#[test]
fn missing_data_path_exits_2_and_names_the_path() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("run");
    let output = kernelga(&[
        "search",
        "--tiny",
        "--out",
        dir.to_str().unwrap(),
        "--set",
        "data.source=idx",
        "--set",
        "data.images=/no/such/images.idx",
        "--set",
        "data.labels=/no/such/labels.idx",
    ]);
    assert_eq!(exit_code(&output), 2);
    assert!(
        stderr_of(&output).contains("/no/such/images.idx"),
        "stderr does not name the missing path: {}",
        stderr_of(&output)
    );
}

#[test]
fn baseline_rejects_a_kernel_size_outside_the_alphabet() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("run");
    let output = kernelga(&["baseline", "--k", "4", "--tiny", "--out", dir.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 1);
    assert!(stderr_of(&output).contains("3, 5, 7"), "stderr: {}", stderr_of(&output));
}

#[test]
fn unknown_config_key_exits_1() {
    let root = tempfile::tempdir().unwrap();
    let config = root.path().join("bad.toml");
    fs::write(&config, "[ga]\npopulation_sizee = 5\n").unwrap();
    let output = kernelga(&[
        "search",
        "--tiny",
        "--config",
        config.to_str().unwrap(),
        "--out",
        root.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 1);
    assert!(
        stderr_of(&output).contains("population_sizee"),
        "stderr: {}",
        stderr_of(&output)
    );
}

#[test]
fn report_builds_a_four_row_table_and_regenerates_identically() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("run");
    let dir_str = dir.to_str().unwrap();
    let search = kernelga(&quick_search_args(dir_str, "7"));
    assert_eq!(exit_code(&search), 0, "stderr: {}", stderr_of(&search));
    for k in ["3", "5", "7"] {
        let baseline = kernelga(&quick_baseline_args(dir_str, k));
        assert_eq!(exit_code(&baseline), 0, "stderr: {}", stderr_of(&baseline));
        assert!(dir.join(format!("baseline-k{k}.json")).exists());
    }

    let first = kernelga(&["report", dir_str]);
    assert_eq!(exit_code(&first), 0, "stderr: {}", stderr_of(&first));
    let stdout = stdout_of(&first);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 5, "header + four rows, got: {stdout}");
    assert!(lines[1].starts_with("evolved"));
    assert!(lines[2].starts_with("fixed 3x3"));
    assert!(lines[3].starts_with("fixed 5x5"));
    assert!(lines[4].starts_with("fixed 7x7"));

    let comparison = fs::read(dir.join("comparison.json")).unwrap();
    let parsed: ComparisonReport = serde_json::from_str(
        std::str::from_utf8(&comparison).unwrap(),
    )
    .unwrap();
    assert_eq!(parsed.rows.len(), 4);

    let second = kernelga(&["report", dir_str]);
    assert_eq!(exit_code(&second), 0);
    assert_eq!(
        comparison,
        fs::read(dir.join("comparison.json")).unwrap(),
        "regenerated comparison differs"
    );
    assert_eq!(stdout, stdout_of(&second));
}

#[test]
fn report_on_an_empty_directory_exits_2() {
    let root = tempfile::tempdir().unwrap();
    let empty = root.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let output = kernelga(&["report", empty.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 2);
    let missing = root.path().join("never-created");
    let output = kernelga(&["report", missing.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn resume_replays_the_tail_and_a_finished_run_is_a_no_op() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("run");
    let dir_str = dir.to_str().unwrap();
    let search = kernelga(&quick_search_args(dir_str, "7"));
    assert_eq!(exit_code(&search), 0, "stderr: {}", stderr_of(&search));
    let final_report = fs::read(dir.join("search-report.json")).unwrap();

    // Rewind: delete the report and resume from the middle checkpoint. The
    // replayed tail must land on the identical report.
    fs::remove_file(dir.join("search-report.json")).unwrap();
    let midway: PathBuf = dir.join("checkpoints/checkpoint-gen000.json");
    let resumed = kernelga(&["resume", midway.to_str().unwrap()]);
    assert_eq!(exit_code(&resumed), 0, "stderr: {}", stderr_of(&resumed));
    assert_eq!(final_report, fs::read(dir.join("search-report.json")).unwrap());

    // Resuming the final checkpoint finds nothing left to do and exits 0
    // with the report unchanged.
    let last: PathBuf = dir.join("checkpoints/checkpoint-gen002.json");
    let finished = kernelga(&["resume", last.to_str().unwrap()]);
    assert_eq!(exit_code(&finished), 0, "stderr: {}", stderr_of(&finished));
    assert_eq!(final_report, fs::read(dir.join("search-report.json")).unwrap());
}

#[test]
fn resume_with_a_corrupt_checkpoint_exits_2() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("run");
    let dir_str = dir.to_str().unwrap();
    let search = kernelga(&quick_search_args(dir_str, "7"));
    assert_eq!(exit_code(&search), 0, "stderr: {}", stderr_of(&search));

    let checkpoint = dir.join("checkpoints/checkpoint-gen001.json");
    fs::write(&checkpoint, "{ not json").unwrap();
    let output = kernelga(&["resume", checkpoint.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 2);
    assert!(stderr_of(&output).contains("checkpoint"), "stderr: {}", stderr_of(&output));

    let missing = dir.join("checkpoints/checkpoint-gen099.json");
    let output = kernelga(&["resume", missing.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn resume_with_a_mismatched_template_exits_1() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("run");
    let dir_str = dir.to_str().unwrap();
    let search = kernelga(&quick_search_args(dir_str, "7"));
    assert_eq!(exit_code(&search), 0, "stderr: {}", stderr_of(&search));

    // Rewrite the stored template so its hash no longer matches the
    // checkpoint's.
    let config_path = dir.join("run-config.toml");
    let text = fs::read_to_string(&config_path).unwrap();
    let tampered = text.replace("fc_width = 64", "fc_width = 32");
    assert_ne!(text, tampered, "expected to find the template width");
    fs::write(&config_path, tampered).unwrap();

    let checkpoint = dir.join("checkpoints/checkpoint-gen001.json");
    let output = kernelga(&["resume", checkpoint.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 1);
    assert!(stderr_of(&output).contains("template"), "stderr: {}", stderr_of(&output));
}

#[test]
fn preprocess_builds_the_dataset_cache_that_search_reuses() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("run");
    let output = kernelga(&[
        "preprocess",
        "--tiny",
        "--out",
        dir.to_str().unwrap(),
        "--set",
        "data.n_samples=30",
        "--set",
        "data.validation_size=9",
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr_of(&output));
    assert!(stdout_of(&output).contains("cached 30 samples"));
    assert!(stdout_of(&output).contains("class counts: [10, 10, 10]"));

    let caches: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .filter_map(|entry| {
            let name = entry.unwrap().file_name().into_string().unwrap();
            name.starts_with("dataset-").then_some(name)
        })
        .collect();
    assert_eq!(caches.len(), 1, "expected one cache file, got {caches:?}");
}

#[test]
fn version_prints_build_metadata() {
    let output = kernelga(&["--version"]);
    assert_eq!(exit_code(&output), 0);
    assert!(stdout_of(&output).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn bad_usage_exits_1() {
    let output = kernelga(&["search", "--no-such-flag"]);
    assert_eq!(exit_code(&output), 1);
    let output = kernelga(&["no-such-command"]);
    assert_eq!(exit_code(&output), 1);
}
