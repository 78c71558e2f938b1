//! `torus`: fit invariant tori of an axisymmetric target potential and
//! diagnose them against integrated orbits.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;
mod plot;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] staeckel_tori::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "torus", version, about = "Invariant torus fitting with a Staeckel toy Hamiltonian")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit toy parameters (alpha, gamma, rho0) to the target potential.
    FitParams(Args),
    /// Fit the torus coefficients and write model.json.
    FitTorus(Args),
    /// Solve for frequencies and dS/dJ and update model.json.
    RecoverAngles(Args),
    /// Model-torus section and orbit sections at z = 0, p_z > 0.
    Section(Args),
    /// Integrate orbits from the torus and write action, frequency and angle traces.
    Trace(Args),
    /// Write coefficients.csv and SVG plots of whatever outputs exist.
    Report(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    let (name, args) = match &cli.command {
        Command::FitParams(a) => ("fit-params", a),
        Command::FitTorus(a) => ("fit-torus", a),
        Command::RecoverAngles(a) => ("recover-angles", a),
        Command::Section(a) => ("section", a),
        Command::Trace(a) => ("trace", a),
        Command::Report(a) => ("report", a),
    };
    match commands::run(name, &args.config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("torus {name}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
