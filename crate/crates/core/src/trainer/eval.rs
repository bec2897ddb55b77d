//! Scoring an actor in the true environment.

use serde::{Deserialize, Serialize};

use crate::env::{run_episode, Actor, LinearEnv};
use crate::error::{contract, Result};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mean: f64,
    /// Population standard deviation over episodes.
    pub std: f64,
    pub scores: Vec<f64>,
}

impl EvalResult {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let std = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self { mean, std, scores }
    }
}

/// Runs `n_episodes` episodes from `d_0` (initial states drawn from the
/// evaluation stream of `seed`, in episode order). The score is the number of
/// steps survived for balancing and the mean `|ṗ - v|` for velocity tracking.
pub fn evaluate(actor: &dyn Actor, env: &LinearEnv, n_episodes: usize, seed: u64) -> Result<EvalResult> {
    if n_episodes == 0 {
        return Err(contract("n_episodes must be positive"));
    }
    let mut rng = stream(seed, Stream::Eval);
    let mut scores = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let s0 = env.reset(&mut rng);
        let ep = run_episode(env, actor, s0, env.max_episode_steps, &mut rng)?;
        let score = if env.tracking_error(&ep.states[0]).is_some() {
            ep.next_states.iter().filter_map(|s| env.tracking_error(s)).sum::<f64>() / ep.len() as f64
        } else {
            ep.len() as f64
        };
        scores.push(score);
    }
    Ok(EvalResult::from_scores(scores))
}

/// Checks that an actor's dimensions fit the environment.
pub fn check_dims(state_dim: usize, action_dim: usize, env: &LinearEnv) -> Result<()> {
    if state_dim != env.state_dim() || action_dim != env.action_dim() {
        return Err(contract(format!(
            "model expects state/action dims {state_dim}/{action_dim} but {} has {}/{}",
            env.name,
            env.state_dim(),
            env.action_dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{LqrController, Task};

    struct Zero;

    impl Actor for Zero {
        fn act(&self, _s: &[f64], _rng: &mut dyn rand::RngCore) -> Result<Vec<f64>> {
            Ok(vec![0.0])
        }
    }

    #[test]
    fn lqr_expert_balances_for_the_full_episode() {
        let env = LinearEnv::for_task(Task::StandStill);
        let lqr = LqrController::for_env(&env).unwrap();
        let r = evaluate(&lqr, &env, 5, 1).unwrap();
        assert!(r.scores.iter().all(|&s| s == env.max_episode_steps as f64));
        assert_eq!(r.std, 0.0);
    }

    #[test]
    fn zero_policy_falls_quickly_from_tilted_starts() {
        let env = LinearEnv::for_task(Task::StandStill);
        let mut rng = stream(2, Stream::Eval);
        for th in [-0.05, -0.03, 0.03, 0.05] {
            for om in [-0.05, 0.0, 0.05] {
                let ep = run_episode(&env, &Zero, vec![th, om, 0.0, 0.0], 2000, &mut rng).unwrap();
                assert!(ep.terminated && ep.len() < 200, "θ={th} θ̇={om}: {}", ep.len());
            }
        }
    }

    #[test]
    fn single_episode_has_zero_spread() {
        let env = LinearEnv::for_task(Task::StandStill);
        assert_eq!(evaluate(&Zero, &env, 1, 3).unwrap().std, 0.0);
        assert!(evaluate(&Zero, &env, 0, 3).is_err());
    }

    #[test]
    fn velocity_tracking_score() {
        let env = LinearEnv::for_task(Task::MoveStraight);
        let lqr = LqrController::for_env(&env).unwrap();
        let r = evaluate(&lqr, &env, 3, 4).unwrap();
        // the expert converges to the target, so the average error is well under v
        assert!(r.mean < 0.2 && r.mean > 0.0, "{r:?}");
    }
}
