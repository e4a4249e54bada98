//! `rydeff`: batch runner for dissipative Rydberg-gas experiments.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

mod config;
mod presets;
mod run;
mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rydeff_core::exec::Execution;

use crate::config::{ConfigError, ExperimentConfig};
use crate::table::{format_value, Table};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "rydeff",
    version,
    about = "Effective dynamics of dissipative Rydberg gases"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config (or a preset name).
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Runs ensembles and scans on the calling thread only.
        #[arg(long)]
        sequential: bool,
    },
    /// Per-column max and mean absolute deviation between two result CSVs.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Linearly interpolate the second table onto the first one's sample times.
        #[arg(long)]
        interpolate: bool,
    },
    /// Inspect the bundled preset configs.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// List preset names.
    List,
    /// Print a preset config to stdout.
    Show { name: String },
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("RYDEFF_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("RYDEFF_THREADS: `{raw}` is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("RYDEFF_THREADS: {e}"))
}

fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    if !path.exists() {
        if let Some(text) = path.to_str().and_then(presets::find) {
            return ExperimentConfig::from_json(text);
        }
    }
    ExperimentConfig::load(path)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_CONFIG);
    }
    match cli.command {
        Command::Run {
            config,
            out,
            sequential,
        } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let exec = if sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            };
            match run::run(&cfg, &dir, exec) {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) if e.is_config_error() => {
                    eprintln!("config error: {e}");
                    ExitCode::from(EXIT_CONFIG)
                }
                Err(e) => {
                    eprintln!("numerical failure: {e}");
                    ExitCode::from(EXIT_NUMERICAL)
                }
            }
        }
        Command::Compare { a, b, interpolate } => {
            let result = Table::read(&a).and_then(|ta| {
                Table::read(&b).and_then(|tb| table::compare(&ta, &tb, interpolate))
            });
            match result {
                Ok(devs) => {
                    println!("observable,max_abs_deviation,mean_abs_deviation");
                    for d in devs {
                        println!(
                            "{},{},{}",
                            d.name,
                            format_value(d.max_abs),
                            format_value(d.mean_abs)
                        );
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_CONFIG)
                }
            }
        }
        Command::Presets { action } => match action {
            PresetAction::List => {
                for (name, _) in presets::PRESETS {
                    println!("{name}.json");
                }
                ExitCode::SUCCESS
            }
            PresetAction::Show { name } => match presets::find(&name) {
                Some(text) => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
                None => {
                    eprintln!("error: no preset named `{name}`");
                    ExitCode::from(EXIT_CONFIG)
                }
            },
        },
    }
}
