//! `kernelga`: evolve per-layer kernel sizes of a multi-column CNN.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 data or I/O
//! error, 3 evaluation failure (a partial report is still written).

use std::path::PathBuf;
use std::process;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use kernelga::Result;
use kernelga_cli::commands;
use kernelga_cli::config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "kernelga",
    version,
    long_version = long_version(),
    about = "Genetic kernel-size search for multi-column convolutional networks"
)]
struct Cli {
    /// TOML configuration file merged over the base profile.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Start from the desk-scale profile (population 6, 3 generations,
    /// 5 epochs) instead of the published one.
    #[arg(long, global = true)]
    tiny: bool,

    /// Master seed; every stream of randomness derives from it.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Run directory that receives all artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Dotted-path configuration override, e.g. --set ga.population_size=30.
    /// May be given multiple times; applied after the configuration file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve kernel sizes and write the search report.
    Search,
    /// Train one fixed-kernel configuration as a baseline.
    Baseline {
        /// Kernel size used in every conv layer (3, 5 or 7).
        #[arg(long, value_name = "K")]
        k: u8,
    },
    /// Combine a run's search report and baselines into a comparison table.
    Report {
        /// Run directory holding the artifacts.
        run_dir: PathBuf,
    },
    /// Continue a checkpointed search to completion.
    Resume {
        /// Checkpoint file under `<run directory>/checkpoints/`.
        checkpoint: PathBuf,
    },
    /// Build and cache the preprocessed dataset.
    Preprocess,
}

fn long_version() -> &'static str {
    static VERSION: std::sync::OnceLock<String> = std::sync::OnceLock::new();
    VERSION.get_or_init(|| {
        let profile = if cfg!(debug_assertions) { "debug" } else { "optimized" };
        format!(
            "{}\nbuild: {profile}, self-contained engine (no external ML framework)",
            env!("CARGO_PKG_VERSION")
        )
    })
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are successful outputs; everything else is a
            // usage problem and exits like one.
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            process::exit(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        process::exit(i32::from(err.exit_code()));
    }
}

fn run(cli: Cli) -> Result<()> {
    let Cli { config, tiny, seed, out, jobs, set, command } = cli;
    if let Some(jobs) = jobs {
        if jobs == 0 {
            return Err(kernelga::Error::usage("--jobs must be at least 1"));
        }
        if let Err(err) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not configure {jobs} worker threads: {err}");
        }
    }
    let overrides = Overrides { config, tiny, seed, out, set };
    match command {
        Command::Search => commands::search(&RunConfig::from_overrides(&overrides)?),
        Command::Baseline { k } => commands::baseline(&RunConfig::from_overrides(&overrides)?, k),
        Command::Report { run_dir } => commands::report(&run_dir),
        Command::Resume { checkpoint } => commands::resume(&checkpoint),
        Command::Preprocess => commands::preprocess(&RunConfig::from_overrides(&overrides)?),
    }
}
