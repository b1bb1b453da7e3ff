use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;
use wslab_cli::{CliError, ExperimentConfig};

/// Run Wasserstein-Sobolev verification suites from TOML configs.
#[derive(Parser)]
#[command(name = "wslab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a suite and write summary.json, details.csv and plot CSVs.
    Run {
        config: PathBuf,
        /// Output directory (overrides `[output] dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("{}: ok ({})", config.display(), cfg.suite.kind());
            Ok(0)
        }
        Command::Run { config, out, jobs } => {
            let cfg = ExperimentConfig::load(&config)?;
            if let Some(n) = jobs {
                if n == 0 {
                    return Err(CliError::Config("--jobs must be at least 1".into()));
                }
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| CliError::Config(e.to_string()))?;
            }
            let (report, summary) = wslab_cli::run(&cfg, out.as_deref())?;
            println!(
                "{}: {} instances, {} violations -> {}",
                cfg.suite.kind(),
                report.instances,
                report.violations,
                summary.display()
            );
            Ok(if report.violations == 0 { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WSLAB_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
