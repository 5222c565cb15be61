use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tclab_cli::{CliError, ExperimentConfig, Overrides, Status};

#[derive(Parser)]
#[command(
    name = "tclab",
    version,
    about = "Log-utility under proportional costs: seeded experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides `out_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reduced sample sizes and a coarser grid; z thresholds relaxed to 5.
        #[arg(long)]
        quick: bool,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<Status, CliError> {
    let Command::Run {
        config,
        seed,
        out,
        quick,
        threads,
    } = cli.command;
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let config = ExperimentConfig::load(&config)?;
    let out = tclab_cli::run(config, &Overrides { seed, out, quick })?;
    print!("{}", out.report.table());
    println!("report: {}", out.report_path.display());
    Ok(out.status())
}

fn main() -> ExitCode {
    let status = match run(Cli::parse()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("tclab: {e}");
            Status::of_error(&e)
        }
    };
    ExitCode::from(status.code())
}
