//! `gen-data`: expert or mediocre datasets, optionally corrupted or split
//! into an expert/suboptimal pair.

use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use dmil_core::data::{
    build_mixed_datasets, collect_expert_dataset, collect_mediocre_dataset, corrupt_states, expert_noise_std, Dataset,
    EXPERT_NOISE_FRACTION,
};
use dmil_core::env::{LinearEnv, LqrController, Task};

use crate::{usage, Classify, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Controller {
    Expert,
    Mediocre,
}

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    /// Task to simulate: stand-still or move-straight.
    #[arg(long, default_value = "stand-still", value_parser = parse_task)]
    pub env: Task,
    /// Number of transitions to collect (the expert pool size with --mix-x).
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; with --mix-x this receives the expert set.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Controller::Expert)]
    pub controller: Controller,
    /// Gain reduction of the mediocre controller, in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    pub degradation: f64,
    /// Action noise std as a fraction of the noiseless expert's action std.
    #[arg(long, default_value_t = EXPERT_NOISE_FRACTION)]
    pub noise_fraction: f64,
    /// Longest episode before a reset (defaults to the task limit).
    #[arg(long)]
    pub episode_cap: Option<usize>,
    /// Fraction of rows whose state receives Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    pub corrupt_fraction: f64,
    /// Noise std in units of each state dimension's std.
    #[arg(long, default_value_t = 1.0)]
    pub corrupt_scale: f64,
    /// Move this fraction of expert trajectories into the suboptimal set.
    #[arg(long)]
    pub mix_x: Option<f64>,
    /// Mediocre transitions added to the suboptimal set with --mix-x.
    #[arg(long, default_value_t = 5000)]
    pub mediocre_n: usize,
    /// Output CSV for the suboptimal set (required with --mix-x).
    #[arg(long)]
    pub out_suboptimal: Option<PathBuf>,
}

pub fn parse_task(s: &str) -> Result<Task, String> {
    Task::parse(s).map_err(|e| e.to_string())
}

fn validate(a: &GenDataArgs) -> Result<(), CliError> {
    if a.n == 0 {
        return Err(usage("--n must be positive"));
    }
    if !(0.0..=1.0).contains(&a.degradation) {
        return Err(usage("--degradation must lie in [0, 1]"));
    }
    if !(a.noise_fraction >= 0.0 && a.noise_fraction.is_finite()) {
        return Err(usage("--noise-fraction must be finite and >= 0"));
    }
    if a.episode_cap == Some(0) {
        return Err(usage("--episode-cap must be positive"));
    }
    if !(0.0..=1.0).contains(&a.corrupt_fraction) || !(a.corrupt_scale >= 0.0 && a.corrupt_scale.is_finite()) {
        return Err(usage("--corrupt-fraction must lie in [0, 1] and --corrupt-scale must be >= 0"));
    }
    match (a.mix_x, &a.out_suboptimal) {
        (Some(x), Some(o)) => {
            if !(0.0..1.0).contains(&x) {
                return Err(usage("--mix-x must lie in [0, 1)"));
            }
            if a.mediocre_n == 0 {
                return Err(usage("--mediocre-n must be positive"));
            }
            if a.controller != Controller::Expert {
                return Err(usage("--mix-x builds its own mediocre pool; drop --controller"));
            }
            if a.corrupt_fraction > 0.0 {
                return Err(usage("--corrupt-fraction cannot be combined with --mix-x"));
            }
            if *o == a.out {
                return Err(usage("--out and --out-suboptimal must differ"));
            }
        }
        (Some(_), None) => return Err(usage("--mix-x needs --out-suboptimal")),
        (None, Some(_)) => return Err(usage("--out-suboptimal is only used with --mix-x")),
        (None, None) => {}
    }
    Ok(())
}

/// Builds the dataset(s) in memory: `(primary, suboptimal)`.
pub fn generate(a: &GenDataArgs) -> Result<(Dataset, Option<Dataset>), CliError> {
    validate(a)?;
    let env = LinearEnv::for_task(a.env);
    let lqr = LqrController::for_env(&env).runtime_err()?;
    let noise = expert_noise_std(&env, &lqr, a.noise_fraction).runtime_err()?;
    let primary = match a.controller {
        Controller::Expert => collect_expert_dataset(&env, &lqr, a.n, &noise, a.seed, a.episode_cap),
        Controller::Mediocre => collect_mediocre_dataset(&env, &lqr, a.n, a.degradation, &noise, a.seed, a.episode_cap),
    }
    .runtime_err()?;
    if let Some(x) = a.mix_x {
        let mediocre = collect_mediocre_dataset(&env, &lqr, a.mediocre_n, a.degradation, &noise, a.seed, a.episode_cap)
            .runtime_err()?;
        let (d_e, d_o) = build_mixed_datasets(&primary, &mediocre, x, a.seed).runtime_err()?;
        return Ok((d_e, Some(d_o)));
    }
    let primary = corrupt_states(&primary, a.corrupt_fraction, a.corrupt_scale, a.seed).runtime_err()?;
    Ok((primary, None))
}

pub fn run(a: &GenDataArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (primary, suboptimal) = generate(a)?;
    primary.write_csv(&a.out).with_context(|| format!("writing {}", a.out.display())).runtime_err()?;
    writeln!(out, "wrote {} transitions to {}", primary.len(), a.out.display()).runtime_err()?;
    if let (Some(d_o), Some(path)) = (suboptimal, &a.out_suboptimal) {
        d_o.write_csv(path).with_context(|| format!("writing {}", path.display())).runtime_err()?;
        writeln!(out, "wrote {} transitions to {}", d_o.len(), path.display()).runtime_err()?;
    }
    Ok(())
}
