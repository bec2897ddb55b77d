//! `eval`: scores a checkpoint's mean-action policy, or a reference
//! controller, and prints the result as JSON.

use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use dmil_core::checkpoint::Checkpoint;
use dmil_core::env::{Actor, LinearEnv, LqrController, MeanPolicy, Task};
use dmil_core::trainer::{check_dims, evaluate, EvalResult};
use rand::RngCore;
use serde::Serialize;

use crate::gen_data::parse_task;
use crate::{usage, Classify, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Reference {
    /// The LQR expert without exploration noise.
    Lqr,
    /// Always applies zero force.
    Zero,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long, conflicts_with = "controller")]
    pub checkpoint: Option<PathBuf>,
    /// Evaluate a reference controller instead of a checkpoint.
    #[arg(long, value_enum)]
    pub controller: Option<Reference>,
    #[arg(long, default_value = "stand-still", value_parser = parse_task)]
    pub env: Task,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write `episode,score` rows to this CSV file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Report<'a> {
    env: &'static str,
    policy: String,
    episodes: usize,
    seed: u64,
    #[serde(flatten)]
    result: &'a EvalResult,
}

struct ZeroForce(usize);

impl Actor for ZeroForce {
    fn act(&self, _s: &[f64], _rng: &mut dyn RngCore) -> dmil_core::Result<Vec<f64>> {
        Ok(vec![0.0; self.0])
    }
}

pub fn run(a: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.episodes == 0 {
        return Err(usage("--episodes must be positive"));
    }
    let env = LinearEnv::for_task(a.env);
    let (result, label) = match (&a.checkpoint, a.controller) {
        (Some(path), None) => {
            let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display())).usage_err()?;
            let policy = ckpt.policy().usage_err()?;
            check_dims(policy.state_dim(), policy.action_dim(), &env).usage_err()?;
            (evaluate(&MeanPolicy(&policy), &env, a.episodes, a.seed).runtime_err()?, path.display().to_string())
        }
        (None, Some(Reference::Lqr)) => {
            let lqr = LqrController::for_env(&env).runtime_err()?;
            (evaluate(&lqr, &env, a.episodes, a.seed).runtime_err()?, "lqr".into())
        }
        (None, Some(Reference::Zero)) => {
            (evaluate(&ZeroForce(env.action_dim()), &env, a.episodes, a.seed).runtime_err()?, "zero".into())
        }
        _ => return Err(usage("give exactly one of --checkpoint or --controller")),
    };
    if let Some(path) = &a.csv {
        let mut text = String::from("episode,score\n");
        for (i, s) in result.scores.iter().enumerate() {
            text.push_str(&format!("{i},{s:.17e}\n"));
        }
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display())).runtime_err()?;
    }
    let report = Report { env: a.env.name(), policy: label, episodes: a.episodes, seed: a.seed, result: &result };
    writeln!(out, "{}", serde_json::to_string(&report).runtime_err()?).runtime_err()?;
    Ok(())
}
