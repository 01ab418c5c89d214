use clap::{Parser, Subcommand};
use marginal::harness::{run_experiment, ExperimentConfig, ExperimentKind};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "marginal",
    version,
    about = "Lattice experiments for marginally disordered polymer-type models"
)]
struct Cli {
    /// Flat key=value config file; flags below override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory for CSV tables and the manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a kernel table, write its binary cache and diagnostics.
    Kernel,
    /// Single-point partition-function statistics against the log-normal limit.
    Single,
    /// Multi-point cross moments and covariance of logs.
    Multipoint,
    /// Rescaled field functional and its limiting variance.
    Field,
    /// Block-variable Gaussianity checks.
    Theta,
    /// Regularized 2d stochastic heat equation: schedule, surrogate, grid runs.
    She,
    /// Fractional-moment scan across the disorder strength.
    Strong,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let kind = match cli.command {
        Command::Kernel => ExperimentKind::Kernel,
        Command::Single => ExperimentKind::Single,
        Command::Multipoint => ExperimentKind::Multipoint,
        Command::Field => ExperimentKind::Fields,
        Command::Theta => ExperimentKind::Theta,
        Command::She => ExperimentKind::She,
        Command::Strong => ExperimentKind::Strong,
    };

    let mut cfg = match &cli.config {
        Some(path) => match ExperimentConfig::from_file(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("config error: {e}");
                return ExitCode::from(2);
            }
        },
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("config error: {e}");
        return ExitCode::from(2);
    }

    match run_experiment(kind, &cfg) {
        Ok(report) => {
            for cell in &report.cells {
                println!("{:<40} {:>8.2}s  {}", cell.name, cell.runtime_s, cell.status);
            }
            println!("manifest: {}", report.manifest_path.display());
            let failed = report.failed_cells();
            if failed > 0 {
                eprintln!("{failed} cell(s) failed");
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            let code = match &e {
                marginal::Error::Config(_) | marginal::Error::Domain(_) => 2,
                marginal::Error::Sizing { .. } | marginal::Error::EnumerationCap { .. } => 4,
                _ => 3,
            };
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}
