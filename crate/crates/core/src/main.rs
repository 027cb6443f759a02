use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chanest::harness::{self, ExperimentConfig};
use chanest::Error;

#[derive(Parser)]
#[command(name = "chanest", version, about = "GMM channel estimation experiments")]
struct Cli {
    /// TOML experiment configuration; built-in desk profile when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// 4x16 array, K = 64, M = 300000, T = 10000.
    #[arg(long, global = true)]
    paper_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Draw training and test datasets.
    Generate,
    /// Fit one model per (scenario, K, structure).
    Fit,
    /// NMSE and spectral efficiency over the SNR grid.
    Evaluate,
    /// GMM NMSE over component count and training size.
    Sweep,
    /// Average responsibilities of a matched and a mismatched model.
    Responsibilities,
    /// Train-scenario by test-scenario evaluation.
    Crosseval,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) | Error::DimensionMismatch { .. } | Error::UnknownSnr(_) => 2,
        Error::Io { .. } | Error::Format { .. } => 3,
        Error::NotPositiveDefinite { .. } | Error::NotHermitian(_) | Error::Unreliable(_) => 4,
    }
}

fn load_config(cli: &Cli) -> chanest::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::desk(),
    };
    if cli.paper_scale {
        cfg.apply_full_scale();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> chanest::Result<()> {
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Generate => {
            for e in harness::cmd_generate(&cfg)? {
                println!("{} {} samples -> {}", e.role, e.samples, e.path.display());
            }
        }
        Command::Fit => {
            for s in harness::cmd_fit(&cfg)? {
                println!("{}", s.path.display());
            }
        }
        Command::Evaluate => report(harness::cmd_evaluate(&cfg)?.len(), &cfg, "evaluate.csv"),
        Command::Sweep => report(harness::cmd_sweep(&cfg)?.len(), &cfg, "sweep.csv"),
        Command::Crosseval => report(harness::cmd_crosseval(&cfg)?.len(), &cfg, "crosseval.csv"),
        Command::Responsibilities => {
            let p = harness::cmd_responsibilities(&cfg)?;
            report(p.matched.len(), &cfg, "responsibilities.csv");
        }
    }
    Ok(())
}

fn report(rows: usize, cfg: &ExperimentConfig, name: &str) {
    println!("{rows} rows -> {}", harness::results_path(&cfg.out_dir, name).display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
