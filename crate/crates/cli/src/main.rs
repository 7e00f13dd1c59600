use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nflab_cli::config::RunConfig;
use nflab_cli::experiments::{self, ExperimentReport};
use nflab_core::Error;

/// Numerical laboratory for a coupled pressure/conductance model of
/// biological transport network formation.
///
/// Configuration is a flat `key = value` file ('#' starts a comment).
/// Keys and defaults: dim = 1 | 2 (1), n = interior nodes per axis (127),
/// D (0.01), c (1.0), gamma (2.0), epsilon (1e-3), dt0 (1e-3),
/// dt_max (0.1), t_end (10), cg_tol (1e-10), steady_tol (1e-7),
/// source = `constant v` | `gaussian-bump cx [cy] width amp`
/// | `from-snapshot path` (constant 1.0),
/// initial-m = `constant v [v]` | `seeded-random seed amp`
/// | `signed-pattern` | `from-snapshot path` (constant 0.5),
/// bc = dirichlet | mixed (dirichlet; mixed is 1D only),
/// out = `dir`, experiment = `label`.
/// Unknown keys are rejected. Experiments fill in their own defaults for
/// keys the file leaves unset.
#[derive(Parser)]
#[command(name = "nflab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Path to the key=value configuration file; omitted means all defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (default: `out/<subcommand>`; config key `out`
    /// provides a fallback).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for experiment-internal draws (initial-m descriptors carry
    /// their own seeds).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Transient run of the full system with an energy trace.
    Simulate,
    /// Sign-flipped run: exponential decay to zero.
    Decay,
    /// Diffusionless 1D steady states vs the predicted amplitudes.
    Steady1d,
    /// Construct a diffusionless pattern and verify its linear stability.
    Pattern,
    /// Leading eigenvalue, instability threshold and growth-rate scan.
    Spectrum,
    /// Vanishing-diffusion, large-diffusion and mollification sweeps.
    Limits,
    /// Single mollified run with the modified-energy trace.
    Mollified,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Decay => "decay",
            Command::Steady1d => "steady1d",
            Command::Pattern => "pattern",
            Command::Spectrum => "spectrum",
            Command::Limits => "limits",
            Command::Mollified => "mollified",
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::NonConvergence { .. } | Error::DegenerateSpectrum => 3,
        Error::StepCollapse { .. } => 4,
        Error::Io(_) | Error::MalformedSnapshot(_) => 5,
        _ => 2,
    }
}

fn run() -> Result<(ExperimentReport, String), (u8, String)> {
    let cli = Cli::parse();
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| (5u8, format!("cannot read {}: {e}", path.display())))?,
        None => String::new(),
    };
    let cfg = RunConfig::parse(&text).map_err(|e| (2u8, format!("config error: {e}")))?;

    let name = cli.command.name().to_string();
    let label = cfg.experiment.clone().unwrap_or_else(|| name.clone());
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&label));
    std::fs::create_dir_all(&out)
        .map_err(|e| (5u8, format!("cannot create {}: {e}", out.display())))?;

    let result = match cli.command {
        Command::Simulate => experiments::run_simulate(&cfg, &out, cli.seed),
        Command::Decay => experiments::run_decay(&cfg, &out, cli.seed),
        Command::Steady1d => experiments::run_steady1d(&cfg, &out, cli.seed),
        Command::Pattern => experiments::run_pattern(&cfg, &out, cli.seed),
        Command::Spectrum => experiments::run_spectrum(&cfg, &out, cli.seed),
        Command::Limits => experiments::run_limits(&cfg, &out, cli.seed),
        Command::Mollified => experiments::run_mollified(&cfg, &out, cli.seed),
    };
    match result {
        Ok(report) => Ok((report, label)),
        Err(e) => Err((exit_code_for(&e), format!("{label}: {e}"))),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok((report, label)) => {
            for artifact in &report.artifacts {
                println!("wrote {}", artifact.display());
            }
            let mut failed = 0;
            for check in &report.checks {
                let status = if check.passed { "PASS" } else { "FAIL" };
                if check.detail.is_empty() {
                    println!("check {status}: {}", check.name);
                } else {
                    println!("check {status}: {} ({})", check.name, check.detail);
                }
                if !check.passed {
                    failed += 1;
                }
            }
            if failed > 0 {
                eprintln!("{label}: {failed} check(s) failed");
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
