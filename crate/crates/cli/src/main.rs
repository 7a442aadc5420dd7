use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand, ValueEnum};

use datacollab::config::ExperimentConfig;
use datacollab::distill::TreeFormat;
use datacollab_cli::commands;

/// Collaborative data analysis over partitioned datasets: compare
/// centralized, individual, and collaborative analyses, and distill
/// interpretable trees per institution.
#[derive(Parser)]
#[command(name = "datacollab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Text,
    Dot,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the artificial benchmark as CSV files plus a cuts file.
    Synth {
        /// Output directory.
        #[arg(long, default_value = "synth_data")]
        out: PathBuf,
        /// Training samples (multiple of 4).
        #[arg(long, default_value_t = 1600)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.3)]
        blob_std: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_range: f64,
    },
    /// Run a full comparison experiment from a config file or preset.
    Run {
        /// TOML experiment config.
        #[arg(required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Built-in configuration (`artificial`).
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stratified k-fold cross-validation of a CSV dataset.
    Crossval {
        config: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render a stored collaborative tree from a run directory.
    Export {
        run_dir: PathBuf,
        /// Institution index (0-based).
        #[arg(long)]
        tree: usize,
        #[arg(long, value_enum, default_value = "text")]
        format: ExportFormat,
        /// Trial index; defaults to the last trial.
        #[arg(long)]
        trial: Option<usize>,
    },
}

fn resolve_config(config: Option<PathBuf>, preset: Option<String>) -> Result<ExperimentConfig> {
    match (config, preset) {
        (Some(path), None) => commands::load_config(&path),
        (None, Some(name)) => match name.as_str() {
            "artificial" => Ok(ExperimentConfig::artificial_preset()),
            other => bail!("unknown preset `{other}` (available: artificial)"),
        },
        _ => bail!("exactly one of <CONFIG> or --preset is required"),
    }
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth {
            out,
            n,
            seed,
            blob_std,
            noise_range,
        } => {
            let dir = commands::cmd_synth(&out, n, seed, blob_std, noise_range)?;
            println!(
                "wrote train.csv, test.csv, cuts.toml under {}",
                dir.display()
            );
            Ok(true)
        }
        Command::Run {
            config,
            preset,
            out,
        } => {
            let cfg = resolve_config(config, preset)?;
            let outcome = commands::cmd_run(&cfg, out.as_deref())?;
            print!("{}", outcome.report.to_table());
            println!("run artifacts: {}", outcome.dir.display());
            if !outcome.audits_passed {
                eprintln!("audit FAILED; see audit.txt in the trial directories");
            }
            Ok(outcome.audits_passed)
        }
        Command::Crossval { config, folds, out } => {
            let cfg = commands::load_config(&config)?;
            let outcome = commands::cmd_crossval(&cfg, folds, out.as_deref())?;
            print!("{}", outcome.report.to_table());
            println!("run artifacts: {}", outcome.dir.display());
            Ok(outcome.audits_passed)
        }
        Command::Export {
            run_dir,
            tree,
            format,
            trial,
        } => {
            let fmt = match format {
                ExportFormat::Text => TreeFormat::IndentedText,
                ExportFormat::Dot => TreeFormat::Dot,
            };
            let path = commands::cmd_export(&run_dir, tree, fmt, trial)?;
            println!("wrote {}", path.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2), // audit failure
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
