use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nonloc_homog_cli::check::failing_names;
use nonloc_homog_cli::config::ExperimentConfig;
use nonloc_homog_cli::run::{run, Command, RunOptions};
use nonloc_homog_cli::CliError;

/// Homogenization experiments for periodic nonlocal convolution-type operators.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's output_dir, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, env = "NONLOC_HOMOG_THREADS", default_value_t = 0)]
    threads: usize,
    /// Overrides the configured random seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn execute(args: Args) -> Result<bool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    let config = ExperimentConfig::load(&args.config)?;
    let out = args
        .out
        .clone()
        .or_else(|| config.output_dir.as_ref().map(|p| config.resolve(p)))
        .unwrap_or_else(|| PathBuf::from("out"));
    let options = RunOptions {
        seed: args.seed,
        threads: rayon::current_num_threads(),
        config_source: args.config.display().to_string(),
    };
    let summary = run(args.command, config, &out, &options)?;
    println!("{}", summary.stdout);
    if !summary.passed() {
        eprintln!("failing checks: {}", failing_names(&summary.checks).join(", "));
    }
    Ok(summary.passed())
}

fn main() -> ExitCode {
    match execute(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
