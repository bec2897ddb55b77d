//! `check`: runs every registered property and reports its largest error.

use std::io::Write;

use clap::Args;
use dmil_core::verify::{run_all, Hooks, PropertyResult};

use crate::{Classify, CliError};

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    /// Seed for the random networks and batches.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print one JSON object per property instead of text lines.
    #[arg(long)]
    pub json: bool,
}

/// Writes one line per property and returns the names of the failures.
pub fn report(results: &[PropertyResult], json: bool, out: &mut dyn Write) -> std::io::Result<Vec<String>> {
    for r in results {
        if json {
            writeln!(out, "{}", serde_json::to_string(r).map_err(std::io::Error::other)?)?;
        } else {
            let err = r.max_error.map_or_else(|| "-".to_string(), |e| format!("{e:.3e}"));
            writeln!(
                out,
                "{} {:<34} max_error {:>10}  {}",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                err,
                r.detail
            )?;
        }
    }
    Ok(results.iter().filter(|r| !r.passed).map(|r| r.name.clone()).collect())
}

pub fn run_with_hooks(a: &CheckArgs, hooks: &Hooks, out: &mut dyn Write) -> Result<(), CliError> {
    let results = run_all(hooks, a.seed);
    let failed = report(&results, a.json, out).runtime_err()?;
    if failed.is_empty() {
        if !a.json {
            writeln!(out, "all {} properties passed", results.len()).runtime_err()?;
        }
        Ok(())
    } else {
        Err(CliError::Runtime(anyhow::anyhow!("failing properties: {}", failed.join(", "))))
    }
}

pub fn run(a: &CheckArgs, out: &mut dyn Write) -> Result<(), CliError> {
    run_with_hooks(a, &Hooks::default(), out)
}
