//! Training configuration, read from JSON with every field optional.

use serde::{Deserialize, Serialize};

use crate::env::Task;
use crate::error::{contract, Result};
use crate::objectives::HyperParams;
use crate::rollout::RolloutConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Bc,
    BcD,
    TwoPhaseBcD,
    Dmil,
    D2mil,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Bc => "bc",
            Algo::BcD => "bc_d",
            Algo::TwoPhaseBcD => "two_phase_bc_d",
            Algo::Dmil => "dmil",
            Algo::D2mil => "d2mil",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "bc" => Ok(Algo::Bc),
            "bc_d" => Ok(Algo::BcD),
            "two_phase_bc_d" => Ok(Algo::TwoPhaseBcD),
            "dmil" => Ok(Algo::Dmil),
            "d2mil" => Ok(Algo::D2mil),
            other => Err(contract(format!("unknown algorithm {other:?}"))),
        }
    }

    pub fn uses_dynamics(self) -> bool {
        self != Algo::Bc
    }

    pub fn uses_rollouts(self) -> bool {
        self != Algo::Bc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub algo: Algo,
    pub hyper: HyperParams,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Dynamics-model pretraining steps before the main loop.
    pub pretrain_steps: usize,
    pub total_steps: usize,
    pub rollout: RolloutConfig,
    pub policy_hidden: Vec<usize>,
    pub dynamics_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub seed: u64,
    /// Evaluate every this many steps; zero evaluates only after the last step.
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Write a step record every this many steps (the last step is always logged).
    pub log_every: usize,
    /// Fraction of the real data held out to monitor dynamics pretraining.
    pub holdout_fraction: f64,
    /// Fit affine input/output normalizers on the training data.
    pub normalize: bool,
    pub env: Task,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Dmil,
            hyper: HyperParams::default(),
            batch_size: 256,
            learning_rate: 1e-4,
            pretrain_steps: 1000,
            total_steps: 200_000,
            rollout: RolloutConfig::default(),
            policy_hidden: vec![256, 256],
            dynamics_hidden: vec![256, 256],
            discriminator_hidden: vec![256, 256],
            seed: 0,
            eval_every: 10_000,
            eval_episodes: 10,
            log_every: 1,
            holdout_fraction: 0.1,
            normalize: true,
            env: Task::StandStill,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.rollout.validate()?;
        if self.batch_size == 0 {
            return Err(contract("batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(contract("learning_rate must be positive and finite"));
        }
        if self.eval_episodes == 0 {
            return Err(contract("eval_episodes must be positive"));
        }
        if self.log_every == 0 {
            return Err(contract("log_every must be positive"));
        }
        if !(0.0..0.5).contains(&self.holdout_fraction) {
            return Err(contract("holdout_fraction must lie in [0, 0.5)"));
        }
        for (name, h) in [
            ("policy_hidden", &self.policy_hidden),
            ("dynamics_hidden", &self.dynamics_hidden),
            ("discriminator_hidden", &self.discriminator_hidden),
        ] {
            if h.contains(&0) {
                return Err(contract(format!("{name} contains a zero-width layer")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
