use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use skillrep_cli::commands::{
    cmd_adapt, cmd_coverage, cmd_export_plotdata, cmd_train, CliError,
};
use skillrep_cli::config::ExperimentConfig;
use std::path::PathBuf;
use std::process::ExitCode;

/// Skill repertoire experiments: train a diverse gait repertoire, measure
/// its coverage, adapt it to leg damage in a few trials, and export plot
/// data. Exit codes: 0 success, 1 invalid config or arguments, 2 runtime
/// failure.
#[derive(Parser)]
#[command(name = "skillrep", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the collect/train loop and write all artifacts.
    Train {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Measure achieved-skill grid coverage of a trained repertoire.
    Coverage {
        #[arg(long)]
        config: PathBuf,
        /// Read artifacts from this directory instead of the config's
        /// output_dir.
        #[arg(long)]
        artifacts: Option<PathBuf>,
        /// Override the config's bins per dimension.
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Run few-trial damage adaptation for the configured scenarios.
    Adapt {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        artifacts: Option<PathBuf>,
        /// Also sweep every repertoire skill for the exhaustive upper
        /// bound.
        #[arg(long)]
        exhaustive: bool,
    },
    /// Emit plot-ready tables from existing artifacts.
    ExportPlotdata {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        artifacts: Option<PathBuf>,
        /// Override the reward-curve smoothing window (environment steps).
        #[arg(long, value_name = "STEPS")]
        window: Option<u64>,
    },
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Runtime(anyhow::anyhow!("reading config {}: {e}", path.display()))
    })?;
    ExperimentConfig::from_toml_str(&text).map_err(CliError::Validation)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Train { config, seed, output_dir } => {
            let mut c = load_config(&config)?;
            if let Some(s) = seed {
                c.seed = Some(s);
            }
            if let Some(dir) = output_dir {
                c.output_dir = dir;
            }
            let summary = cmd_train(&c)?;
            println!(
                "trained {} periods, repertoire holds {} skills, artifacts in {}",
                summary.periods,
                summary.repertoire_len,
                summary.output_dir.display()
            );
        }
        Cmd::Coverage { config, artifacts, bins } => {
            let mut c = load_config(&config)?;
            if let Some(dir) = artifacts {
                c.output_dir = dir;
            }
            if let Some(b) = bins {
                c.coverage.bins = b;
            }
            let report = cmd_coverage(&c)?;
            println!(
                "{} skills occupy {} cells over {} projections ({} bins per dim)",
                report.n_skills,
                report.total_occupied,
                report.projections.len(),
                report.bins
            );
        }
        Cmd::Adapt { config, artifacts, exhaustive } => {
            let mut c = load_config(&config)?;
            if let Some(dir) = artifacts {
                c.output_dir = dir;
            }
            let report = cmd_adapt(&c, exhaustive)?;
            for s in &report.scenarios {
                match s.exhaustive_best {
                    Some(bound) => println!(
                        "{}: best return {} after {} trials (exhaustive bound {})",
                        s.name,
                        s.report.best_return,
                        s.report.trials.len(),
                        bound
                    ),
                    None => println!(
                        "{}: best return {} after {} trials",
                        s.name,
                        s.report.best_return,
                        s.report.trials.len()
                    ),
                }
            }
        }
        Cmd::ExportPlotdata { config, artifacts, window } => {
            let mut c = load_config(&config)?;
            if let Some(dir) = artifacts {
                c.output_dir = dir;
            }
            if let Some(w) = window {
                c.export.reward_window_steps = w;
            }
            let summary = cmd_export_plotdata(&c)?;
            for (path, rows) in &summary.files {
                println!("wrote {} ({rows} rows)", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(issue)) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": "validation", "field": issue.field, "reason": issue.reason })
            );
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
