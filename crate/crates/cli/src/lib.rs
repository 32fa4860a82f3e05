//! Config-driven experiment runner: `heteroclinic <experiment> --config file.toml`.
//!
//! Every run writes `summary.json` plus CSV dumps into the output directory
//! and exits with 0 (all checks passed), 2 (config error), 3 (solver
//! failure or non-convergence) or 4 (an asserted inequality failed).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

use std::path::{Path, PathBuf};

use serde_json::json;

use config::{ExperimentConfig, ExperimentKind};
use error::CliError;
use output::Sink;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_ASSERTION: i32 = 4;

pub const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "-",
    env!("HETEROCLINIC_GIT_DESCRIBE")
);

pub struct Invocation<'a> {
    pub kind: ExperimentKind,
    pub config: &'a Path,
    pub out: Option<PathBuf>,
    pub overrides: &'a [String],
    pub quiet: bool,
}

/// Runs one experiment and returns the process exit code.
pub fn execute(inv: &Invocation<'_>) -> i32 {
    match try_execute(inv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn try_execute(inv: &Invocation<'_>) -> Result<i32, CliError> {
    let mut cfg = config::load(inv.config, inv.overrides)?;
    if let Some(k) = cfg.kind {
        if k != inv.kind {
            return Err(CliError::Config(format!(
                "config is for `{}` but `{}` was requested",
                k.name(),
                inv.kind.name()
            )));
        }
    }
    cfg.kind = Some(inv.kind);
    if let Some(out) = &inv.out {
        cfg.output.dir = out.clone();
    }
    let mut sink = Sink::new(&cfg.output.dir, cfg.output.gzip)?;
    let outcome = experiment::run(inv.kind, &cfg, &mut sink)?;

    let failed: Vec<&str> = outcome
        .assertions
        .iter()
        .filter(|a| !a.passed)
        .map(|a| a.name.as_str())
        .collect();
    let (status, code) = if !outcome.converged {
        ("solver_failure", EXIT_SOLVER)
    } else if !failed.is_empty() {
        ("assertion_failure", EXIT_ASSERTION)
    } else {
        ("ok", EXIT_OK)
    };
    let summary = json!({
        "schema_version": output::SCHEMA_VERSION,
        "version": VERSION,
        "experiment": inv.kind.name(),
        "status": status,
        "converged": outcome.converged,
        "assertions": outcome.assertions,
        "result": outcome.result,
        "config": config_echo(&cfg)?,
        "files": sink.written(),
    });
    sink.json("summary.json", &summary)?;

    if !inv.quiet {
        println!("{}: {status}", inv.kind.name());
        for a in &outcome.assertions {
            println!(
                "  [{}] {}: {}",
                if a.passed { "pass" } else { "FAIL" },
                a.name,
                a.detail
            );
        }
        if !outcome.converged {
            println!("  at least one solve stopped before reaching the gradient tolerance");
        }
        println!(
            "  summary: {}",
            cfg.output.dir.join("summary.json").display()
        );
    }
    Ok(code)
}

/// The resolved config with `kind` filled, as written into the summary.
fn config_echo(cfg: &ExperimentConfig) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(cfg).map_err(|e| CliError::Config(format!("cannot echo config: {e}")))
}
