use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hst_cli::commands::{self, EvaluateArgs, Mode, TrainArgs};
use hst_cli::config::DATA_DIR_ENV;
use hst_cli::CliResult;
use hst_core::eval::ErrorModel;

/// Staged training of linked networks for Wi-Fi fingerprint localization.
///
/// Exit codes: 0 success, 1 other failure, 2 usage, 3 configuration,
/// 4 data or archive, 5 numeric failure during training.
#[derive(Parser)]
#[command(name = "hst", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Hst,
    Reference,
}

#[derive(Clone, Copy, ValueEnum)]
enum ErrorModelArg {
    Penalized,
    Euclidean3d,
}

#[derive(Subcommand)]
enum Command {
    /// Parse UJIIndoorLoc CSV files into a prepared data cache.
    PrepareData {
        #[arg(long)]
        train_csv: PathBuf,
        #[arg(long)]
        test_csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replace an existing cache.
        #[arg(long)]
        force: bool,
    },
    /// Print where to download UJIIndoorLoc and check local copies.
    FetchData {
        /// JSON file listing expected SHA-256 digests per file name.
        #[arg(long)]
        checksums: Option<PathBuf>,
        /// Directory holding the downloaded files.
        #[arg(long, env = DATA_DIR_ENV, default_value = ".")]
        dir: PathBuf,
    },
    /// Generate a synthetic site in the prepared cache format.
    Synth {
        /// JSON site description; the built-in two-building site if omitted.
        #[arg(long)]
        site: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Train one model from a JSON run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Must agree with the configured model kind.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Prepared cache directory; overrides the config and the environment.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate a trained model directory on a prepared cache.
    Evaluate {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, env = DATA_DIR_ENV)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "penalized")]
        error_model: ErrorModelArg,
        #[arg(long, default_value_t = 50.0)]
        building_penalty: f64,
        /// Meters per floor of difference (penalized model).
        #[arg(long, default_value_t = 4.0)]
        floor_penalty: f64,
        /// Floor height in meters (euclidean3d model).
        #[arg(long, default_value_t = 4.0)]
        floor_height: f64,
        /// Score the training split instead of the test split.
        #[arg(long)]
        train_split: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate finished runs into accuracy and training-time tables.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Also write summary.json and summary.txt here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::PrepareData { train_csv, test_csv, out, force } => {
            let (train, test) = commands::prepare_data(&train_csv, &test_csv, &out, force)?;
            println!("train={train} test={test}");
        }
        Command::FetchData { checksums, dir } => {
            println!("UJIIndoorLoc source: {}", commands::UJI_SOURCE);
            println!("download and unpack trainingData.csv and validationData.csv, then run prepare-data");
            if let Some(cfg) = checksums {
                for (name, digest) in commands::verify_checksums(&dir, &cfg)? {
                    println!("ok {name} {digest}");
                }
            }
        }
        Command::Synth { site, seed, out, force } => {
            let (train, test) = commands::synth(site.as_deref(), seed, &out, force)?;
            println!("train={train} test={test}");
        }
        Command::Train { config, mode, seed, out, data } => {
            let mode = mode.map(|m| match m {
                ModeArg::Hst => Mode::Hst,
                ModeArg::Reference => Mode::Reference,
            });
            let s = commands::train(&TrainArgs {
                config: &config,
                mode,
                seed,
                out: out.as_deref(),
                data: data.as_deref(),
            })?;
            print!("{}", hst_core::eval::format_table(std::slice::from_ref(&s.report)));
            println!("training time {:.1} s, outputs in {}", s.timing.total_seconds, s.out.display());
        }
        Command::Evaluate {
            weights,
            data,
            error_model,
            building_penalty,
            floor_penalty,
            floor_height,
            train_split,
            out,
        } => {
            let error_model = match error_model {
                ErrorModelArg::Penalized => ErrorModel::Penalized { building_penalty, floor_penalty },
                ErrorModelArg::Euclidean3d => ErrorModel::Euclidean3d { building_penalty, floor_height },
            };
            let report = commands::evaluate_bundle(&EvaluateArgs {
                weights: &weights,
                data: Some(&data),
                error_model,
                out: &out,
                use_train_split: train_split,
            })?;
            print!("{}", hst_core::eval::format_table(std::slice::from_ref(&report)));
        }
        Command::Report { runs, out } => {
            let summaries = commands::report(&runs)?;
            print!("{}", commands::format_summary(&summaries));
            if let Some(out) = out {
                commands::write_summary(&out, &summaries)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
