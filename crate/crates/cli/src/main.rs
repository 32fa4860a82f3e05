use std::path::PathBuf;

use clap::{Parser, Subcommand};
use heteroclinic_cli::config::ExperimentKind;
use heteroclinic_cli::{execute, Invocation};

#[derive(Parser)]
#[command(name = "heteroclinic", version = heteroclinic_cli::VERSION, about = "Heteroclinic solutions on infinite cylinders by renormalized energy minimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Only the exit status and the files.
    #[arg(long)]
    quiet: bool,
    /// Dotted config override, e.g. `grid.h_x=0.05`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Certify the potential and the coefficient field on the grid.
    Validate(Common),
    /// Minimize the energy for the configured coefficient.
    Minimize(Common),
    /// Class 1: Θ* against Θ_p*; Class 2: Θ_ε against Θ₀ and Θ_∞.
    CompareLevels(Common),
    /// ε-continuation for a Class 2 coefficient over `coefficient.eps_list`.
    SweepEps(Common),
    /// The energy quantum β(τ) on the two-slab grid.
    Beta(Common),
}

fn main() {
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::Validate(c) => (ExperimentKind::Validate, c),
        Command::Minimize(c) => (ExperimentKind::Minimize, c),
        Command::CompareLevels(c) => (ExperimentKind::CompareLevels, c),
        Command::SweepEps(c) => (ExperimentKind::SweepEps, c),
        Command::Beta(c) => (ExperimentKind::Beta, c),
    };
    let code = execute(&Invocation {
        kind,
        config: &common.config,
        out: common.out,
        overrides: &common.overrides,
        quiet: common.quiet,
    });
    std::process::exit(code);
}
