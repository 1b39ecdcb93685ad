use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hflab::harness::config::{ExperimentConfig, ExperimentKind};
use hflab::harness::run::{output_dir, run_experiment};

/// Run a disorder-ensemble experiment and write CSV, summary and manifest files.
///
/// Exit status: 0 when the run and its audits pass, 2 when audits are violated,
/// 1 when the run fails.
#[derive(Parser, Debug)]
#[command(name = "hflab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON config file; defaults apply to everything it leaves out
    #[arg(long)]
    config: Option<PathBuf>,
    /// output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// worker threads
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// master seed, overriding the config
    #[arg(long)]
    seed: Option<u64>,
    /// print the resolved config and exit
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// self-consistent potentials
    Scf(RunArgs),
    /// fractional moments of the Green's function
    Moments(RunArgs),
    /// eigenfunction correlators
    Correlators(RunArgs),
    /// Lyapunov exponents and Hartree-Fock gaps on long chains
    Lyapunov(RunArgs),
    /// moment generating function of end-to-end Green's functions
    Momentgen(RunArgs),
    /// decoupling constants
    Decoupling(RunArgs),
    /// integrated density of states
    Ids(RunArgs),
    /// Wegner ratios
    Wegner(RunArgs),
    /// Hölder modulus of the density of states
    Holder(RunArgs),
    /// contraction and Combes-Thomas audits
    Audits(RunArgs),
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::Scf(a) => (ExperimentKind::Scf, a),
            Command::Moments(a) => (ExperimentKind::Moments, a),
            Command::Correlators(a) => (ExperimentKind::Correlators, a),
            Command::Lyapunov(a) => (ExperimentKind::Lyapunov, a),
            Command::Momentgen(a) => (ExperimentKind::Momentgen, a),
            Command::Decoupling(a) => (ExperimentKind::Decoupling, a),
            Command::Ids(a) => (ExperimentKind::Ids, a),
            Command::Wegner(a) => (ExperimentKind::Wegner, a),
            Command::Holder(a) => (ExperimentKind::Holder, a),
            Command::Audits(a) => (ExperimentKind::Audits, a),
        }
    }
}

fn run(kind: ExperimentKind, args: RunArgs) -> hflab::Result<i32> {
    let mut config = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.sampling.seed = seed;
    }
    let config = config.resolve(Some(kind))?;
    if args.dry_run {
        println!("{}", config.to_json());
        return Ok(0);
    }
    let dir = output_dir(&config, args.out.as_deref())?;
    let manifest = run_experiment(&config, &dir, args.workers)?;
    if let Some(e) = &manifest.error {
        eprintln!("run failed: {e}");
    }
    println!(
        "{} {:?} in {:.2}s -> {}",
        manifest.experiment,
        manifest.status,
        manifest.wall_time_seconds,
        dir.display()
    );
    Ok(manifest.status.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Warn)
        .init();
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    match run(kind, args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
