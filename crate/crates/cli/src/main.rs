use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tbd_bp::config::parse_values;
use tbd_bp::runner::{cmd_all, cmd_evaluate, cmd_simulate, cmd_sweep, cmd_track, Layout};
use tbd_bp::{Axis, CliError, RunConfig};

#[derive(Parser, Debug)]
#[command(author, version, about = "Track-before-detect experiments on simulated intensity images")]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the number of Monte Carlo runs.
    #[arg(long, global = true)]
    runs: Option<usize>,

    /// Override the base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write ground truth and measurement files for every run.
    Simulate,
    /// Track measurement files and write the estimates CSV.
    Track {
        /// Measurement files; defaults to every run file under the output directory.
        files: Vec<PathBuf>,
    },
    /// Score estimates against ground truth.
    Evaluate {
        /// Truth CSVs; defaults to every run file under the output directory.
        #[arg(long, num_args = 1..)]
        truth: Vec<PathBuf>,
        /// Estimates CSV; defaults to estimates.csv in the output directory.
        #[arg(long)]
        estimates: Option<PathBuf>,
    },
    /// Repeat the whole experiment for each value of one parameter.
    Sweep {
        /// gamma0, sigma_s_sq or L.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
    },
    /// Simulate, track and evaluate.
    All,
}

fn run(args: Args) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(runs) = args.runs {
        cfg.runs = runs;
    }
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    cfg.validate()?;
    if let Some(threads) = args.threads {
        if threads == 0 {
            return Err(CliError::Config("threads: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    let out = Layout::new(cfg.output_dir.clone());
    match args.command {
        Command::Simulate => cmd_simulate(&cfg, &out),
        Command::Track { files } => cmd_track(&cfg, &out, &files),
        Command::Evaluate { truth, estimates } => {
            let estimates = estimates.unwrap_or_else(|| out.estimates());
            cmd_evaluate(&cfg, &out, &truth, &estimates)
        }
        Command::Sweep { axis, values } => {
            let axis: Axis = axis.parse()?;
            let values = parse_values(&values)?;
            for path in cmd_sweep(&cfg, &out, axis, &values)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::All => cmd_all(&cfg, &out),
    }
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
