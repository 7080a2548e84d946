use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod error;
mod output;
mod run;

use config::{ExperimentConfig, OUT_ROOT_VAR};
use error::CliError;
use output::RunOutput;

/// Weighted Bergman kernels, equilibrium measures, random sections and
/// quantum-ergodicity experiments.
#[derive(Debug, Parser)]
#[command(name = "qelab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML experiment config; defaults are used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed, overriding `ensemble.seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Output directory, overriding `output_dir` and the environment default.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override a config entry by dotted path, e.g. `envelope.tol=1e-8`.
    #[arg(long = "tol-override", global = true, value_name = "KEY=VAL")]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Gram matrices and orthonormal bases.
    Gram,
    /// (1/N) log of the Bergman kernel diagonal on the grid.
    Bergman,
    /// Weighted envelope and the route comparison with log-Bergman.
    Envelope,
    /// Equilibrium measure and density-of-states pairings.
    Measure,
    /// Random sections and the expected-mass check.
    Sample,
    /// Zeros of Gaussian sections against the equilibrium measure.
    Zeros,
    /// QE defects and L1 potential errors of spherical sections.
    Qe,
    /// Haar-rotated bases: the diagonal statistic and its Cesaro average.
    Onb,
    /// Normalized Toeplitz traces against their limits.
    Szego,
    /// Haar orbit integral against its closed form.
    Orbit,
    /// Aggregate earlier outputs in the output directory into one table.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Gram => "gram",
            Command::Bergman => "bergman",
            Command::Envelope => "envelope",
            Command::Measure => "measure",
            Command::Sample => "sample",
            Command::Zeros => "zeros",
            Command::Qe => "qe",
            Command::Onb => "onb",
            Command::Szego => "szego",
            Command::Orbit => "orbit",
            Command::Report => "report",
        }
    }
}

fn output_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_ROOT_VAR).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("qelab-out"))
}

fn execute(cli: &Cli) -> Result<Vec<String>, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg = cfg.with_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.ensemble.seed = seed;
    }
    let dir = output_dir(cli, &cfg);
    cfg.output_dir = Some(dir.clone());
    let cfg = cfg.resolved();
    cfg.validate()?;
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let ensemble = match cli.command {
        Command::Sample | Command::Qe => cfg.ensemble.kind.name(),
        _ => "none",
    };
    let mut out = RunOutput::create(&dir, cli.command.name(), ensemble)?;
    let streams = match cli.command {
        Command::Gram => run::gram_cmd(&cfg, &mut out)?,
        Command::Bergman => run::bergman_cmd(&cfg, &mut out)?,
        Command::Envelope => run::envelope_cmd(&cfg, &mut out)?,
        Command::Measure => run::measure_cmd(&cfg, &mut out)?,
        Command::Sample => run::sample_cmd(&cfg, &mut out)?,
        Command::Zeros => run::zeros_cmd(&cfg, &mut out)?,
        Command::Qe => run::qe_cmd(&cfg, &mut out)?,
        Command::Onb => run::onb_cmd(&cfg, &mut out)?,
        Command::Szego => run::szego_cmd(&cfg, &mut out)?,
        Command::Orbit => run::orbit_cmd(&cfg, &mut out)?,
        Command::Report => run::report_cmd(&cfg, &dir, &mut out)?,
    };
    out.finish(&cfg, streams)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(files) => {
            for f in files {
                println!("{f}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qelab {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
