//! Training loops for DMIL, D2MIL and the BC-family baselines.
//!
//! Every algorithm draws its four models (policy, dynamics model, rollout
//! discriminator, optimality discriminator) from the same initialization
//! stream in the same order, so runs that share a seed start from the same
//! policy. Each outer step makes one gradient update per trained model.

mod config;
mod eval;
mod log;

pub use config::{Algo, TrainConfig};
pub use eval::{check_dims, evaluate, EvalResult};
pub use log::{EvalRecord, PretrainRecord, Record, StepRecord, TrainLog};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::data::{sample_indices, Batch, Dataset};
use crate::env::{LinearEnv, MeanPolicy};
use crate::error::{contract, Error, Result};
use crate::models::{Discriminator, DiscriminatorKind, DynamicsModel, GaussianPolicy, Normalizer};
use crate::nn::{GradientBuffer, Parameterized};
use crate::objectives::coupled::{self, Evaluated};
use crate::optim::AdamState;
use crate::rng::{stream, Stream, StreamRng};
use crate::rollout::{generate_rollouts, RolloutBuffer, RolloutStats, StartSource};

/// The trained models. Models an algorithm never trains are still present at
/// their initialization so checkpoints always have the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub policy: GaussianPolicy,
    pub dynamics: DynamicsModel,
    pub disc_r: Discriminator,
    pub disc_o: Discriminator,
}

/// State, action and state-difference normalizers fitted on real data.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizers {
    pub state: Normalizer,
    pub action: Normalizer,
    pub delta: Normalizer,
}

impl Normalizers {
    pub fn identity(state_dim: usize, action_dim: usize) -> Self {
        Self {
            state: Normalizer::identity(state_dim),
            action: Normalizer::identity(action_dim),
            delta: Normalizer::identity(state_dim),
        }
    }

    pub fn fit(data: &Dataset) -> Self {
        let b = data.all();
        Self {
            state: Normalizer::fit(&b.states),
            action: Normalizer::fit(&b.actions),
            delta: Normalizer::fit(&(&b.next_states - &b.states)),
        }
    }
}

/// Draws the four models from the initialization stream: policy, dynamics
/// model, rollout discriminator, optimality discriminator.
pub fn init_models(cfg: &TrainConfig, norms: &Normalizers) -> Result<Models> {
    let (k, m) = (norms.state.dim(), norms.action.dim());
    let mut rng = stream(cfg.seed, Stream::Init);
    let policy = GaussianPolicy::new(k, m, &cfg.policy_hidden, &mut rng)?
        .with_normalizers(norms.state.clone(), norms.action.clone())?;
    let dynamics = DynamicsModel::new(k, m, &cfg.dynamics_hidden, &mut rng)?.with_normalizers(
        norms.state.clone(),
        norms.action.clone(),
        norms.delta.clone(),
    )?;
    let disc_r = Discriminator::new(DiscriminatorKind::Rollout, k, m, &cfg.discriminator_hidden, &mut rng)?
        .with_normalizers(norms.state.clone(), norms.action.clone())?;
    let disc_o = Discriminator::new(DiscriminatorKind::Optimality, k, m, &cfg.discriminator_hidden, &mut rng)?
        .with_normalizers(norms.state.clone(), norms.action.clone())?;
    Ok(Models { policy, dynamics, disc_r, disc_o })
}

/// Runs `cfg.algo`. `suboptimal` is required for D2MIL and ignored otherwise.
/// Records are appended to `log` as they are produced, so a failed run
/// leaves its partial log behind.
pub fn train(cfg: &TrainConfig, expert: &Dataset, suboptimal: Option<&Dataset>, log: &mut TrainLog) -> Result<Models> {
    cfg.validate()?;
    match cfg.algo {
        Algo::Dmil => train_dmil(cfg, expert, log),
        Algo::D2mil => {
            let d_o = suboptimal.ok_or_else(|| contract("D2MIL needs a suboptimal dataset"))?;
            train_d2mil(cfg, expert, d_o, log)
        }
        Algo::Bc | Algo::BcD | Algo::TwoPhaseBcD => train_baseline(cfg, expert, log),
    }
}

pub fn train_dmil(cfg: &TrainConfig, expert: &Dataset, log: &mut TrainLog) -> Result<Models> {
    expect_algo(cfg, &[Algo::Dmil])?;
    let mut run = Run::new(cfg, expert, None)?;
    run.pretrain_dynamics(log)?;
    for step in 0..cfg.total_steps {
        let mut rec = run.begin_step(step)?;
        let expert_b = run.sample_expert()?;
        match run.sample_rollout() {
            Some(roll) => {
                run.update_disc_r(&expert_b, &roll, &mut rec)?;
                let d_e = coupled::rollout_disc_values(&run.m.disc_r, &run.m.policy, &run.m.dynamics, &expert_b)?;
                let d_r = coupled::rollout_disc_values(&run.m.disc_r, &run.m.policy, &run.m.dynamics, &roll)?;
                rec.d_r_expert = Some(mean(&d_e));
                rec.d_r_rollout = Some(mean(&d_r));
                let pi =
                    coupled::dmil_policy_from_values(&run.m.policy, &expert_b, &roll, &d_e, &d_r, cfg.hyper.alpha_pi)?;
                run.apply_policy(pi, &mut rec)?;
                run.update_dynamics_dmil(&expert_b, &roll, &mut rec)?;
            }
            None => {
                let pi = coupled::scaled_bc_objective(&run.m.policy, &expert_b, cfg.hyper.alpha_pi)?;
                run.apply_policy(pi, &mut rec)?;
                let f = coupled::scaled_dynamics_nll_objective(&run.m.dynamics, &expert_b, cfg.hyper.alpha_f)?;
                run.apply_dynamics(f, &mut rec)?;
            }
        }
        run.finish_step(rec, log)?;
    }
    run.final_eval(log)?;
    Ok(run.m)
}

/// D2MIL. An empty suboptimal dataset is accepted only with `beta_o = 0`,
/// in which case every suboptimal term drops out.
pub fn train_d2mil(cfg: &TrainConfig, expert: &Dataset, suboptimal: &Dataset, log: &mut TrainLog) -> Result<Models> {
    expect_algo(cfg, &[Algo::D2mil])?;
    if suboptimal.is_empty() && cfg.hyper.beta_o != 0.0 {
        return Err(contract("D2MIL needs a non-empty suboptimal dataset unless beta_o = 0"));
    }
    let mut run = Run::new(cfg, expert, Some(suboptimal))?;
    run.pretrain_dynamics(log)?;
    let hp = cfg.hyper;
    for step in 0..cfg.total_steps {
        let mut rec = run.begin_step(step)?;
        let expert_b = run.sample_expert()?;
        let sub_b = run.sample_suboptimal()?;
        let real = expert_b.concat(&sub_b);
        match run.sample_rollout() {
            Some(roll) => {
                run.update_disc_r(&real, &roll, &mut rec)?;
                run.update_disc_o(&expert_b, &sub_b.concat(&roll), &mut rec)?;
                let m = &run.m;
                let ve = coupled::dual_disc_values(&m.disc_r, &m.disc_o, &m.policy, &m.dynamics, &expert_b)?;
                let vo = coupled::dual_disc_values(&m.disc_r, &m.disc_o, &m.policy, &m.dynamics, &sub_b)?;
                let vr = coupled::dual_disc_values(&m.disc_r, &m.disc_o, &m.policy, &m.dynamics, &roll)?;
                rec.d_o_expert = Some(mean(&ve.0));
                rec.d_o_suboptimal = (!vo.0.is_empty()).then(|| mean(&vo.0));
                rec.d_o_rollout = Some(mean(&vr.0));
                rec.d_r_expert = Some(mean(&ve.1));
                rec.d_r_rollout = Some(mean(&vr.1));
                let pi =
                    coupled::d2mil_policy_from_values(&m.policy, [&expert_b, &sub_b, &roll], [&ve, &vo, &vr], &hp)?;
                run.apply_policy(pi, &mut rec)?;
                run.update_dynamics_dmil(&real, &roll, &mut rec)?;
            }
            None => {
                if !sub_b.is_empty() {
                    run.update_disc_o(&expert_b, &sub_b, &mut rec)?;
                }
                let pi = coupled::scaled_bc_objective(&run.m.policy, &expert_b, hp.alpha_pi)?;
                run.apply_policy(pi, &mut rec)?;
                let f = coupled::scaled_dynamics_nll_objective(&run.m.dynamics, &real, hp.alpha_f)?;
                run.apply_dynamics(f, &mut rec)?;
            }
        }
        run.finish_step(rec, log)?;
    }
    run.final_eval(log)?;
    Ok(run.m)
}

/// BC, BC+d, and two-phase BC+d (BC for the first half of the steps, then
/// fine-tuning on `D_e ∪ D_r` with the dynamics model frozen).
pub fn train_baseline(cfg: &TrainConfig, expert: &Dataset, log: &mut TrainLog) -> Result<Models> {
    expect_algo(cfg, &[Algo::Bc, Algo::BcD, Algo::TwoPhaseBcD])?;
    let mut run = Run::new(cfg, expert, None)?;
    if cfg.algo != Algo::Bc {
        run.pretrain_dynamics(log)?;
    }
    let switch = cfg.total_steps / 2;
    for step in 0..cfg.total_steps {
        let finetune = match cfg.algo {
            Algo::Bc => false,
            Algo::BcD => true,
            _ => step >= switch,
        };
        let mut rec = if finetune { run.begin_step(step)? } else { run.begin_step_without_rollouts(step) };
        let expert_b = run.sample_expert()?;
        if finetune {
            let roll = run.sample_rollout().unwrap_or_else(|| Batch::empty(run.k, run.m_dim));
            let pi = coupled::bc_finetune_objective(&run.m.policy, &expert_b, &roll)?;
            run.apply_policy(pi, &mut rec)?;
        } else {
            let pi = coupled::bc_objective(&run.m.policy, &expert_b)?;
            run.apply_policy(pi, &mut rec)?;
        }
        let train_f = match cfg.algo {
            Algo::Bc => false,
            Algo::BcD => true,
            _ => !finetune,
        };
        if train_f {
            let f = coupled::dynamics_nll_objective(&run.m.dynamics, &expert_b)?;
            run.apply_dynamics(f, &mut rec)?;
        }
        run.finish_step(rec, log)?;
    }
    run.final_eval(log)?;
    Ok(run.m)
}

fn expect_algo(cfg: &TrainConfig, allowed: &[Algo]) -> Result<()> {
    cfg.validate()?;
    if allowed.contains(&cfg.algo) {
        Ok(())
    } else {
        Err(contract(format!("configuration selects {}", cfg.algo.name())))
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mutable state shared by every training loop.
struct Run<'a> {
    cfg: &'a TrainConfig,
    env: LinearEnv,
    expert: &'a Dataset,
    suboptimal: Option<&'a Dataset>,
    /// `D_e`, or `D_e ∪ D_o` for D2MIL.
    real: Dataset,
    k: usize,
    m_dim: usize,
    m: Models,
    opt_pi: AdamState,
    opt_f: AdamState,
    opt_dr: AdamState,
    opt_do: AdamState,
    buffer: RolloutBuffer,
    limits: Vec<f64>,
    rollout_rng: StreamRng,
    batch_rng: StreamRng,
    pu_warned: bool,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a TrainConfig, expert: &'a Dataset, suboptimal: Option<&'a Dataset>) -> Result<Self> {
        if expert.is_empty() {
            return Err(contract("expert dataset is empty"));
        }
        let env = LinearEnv::for_task(cfg.env);
        check_dims(expert.state_dim(), expert.action_dim(), &env)?;
        let real = match suboptimal {
            Some(d_o) => expert.union(d_o)?,
            None => expert.clone(),
        };
        let (k, m_dim) = (expert.state_dim(), expert.action_dim());
        let norms = if cfg.normalize { Normalizers::fit(&real) } else { Normalizers::identity(k, m_dim) };
        let models = init_models(cfg, &norms)?;
        let limits = real.state_max_abs().iter().map(|v| cfg.rollout.guard_factor * v.max(1e-8)).collect();
        Ok(Self {
            cfg,
            env,
            expert,
            suboptimal,
            real,
            k,
            m_dim,
            m: models,
            opt_pi: AdamState::new(cfg.learning_rate),
            opt_f: AdamState::new(cfg.learning_rate),
            opt_dr: AdamState::new(cfg.learning_rate),
            opt_do: AdamState::new(cfg.learning_rate),
            buffer: RolloutBuffer::new(k, m_dim, cfg.rollout.capacity)?,
            limits,
            rollout_rng: stream(cfg.seed, Stream::Rollout),
            batch_rng: stream(cfg.seed, Stream::Batch),
            pu_warned: false,
        })
    }

    /// Fits the dynamics model on the real data by maximum likelihood,
    /// holding out a fraction to report held-out NLL before and after.
    fn pretrain_dynamics(&mut self, log: &mut TrainLog) -> Result<()> {
        let n = self.real.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(self.cfg.seed, Stream::Split));
        let n_hold = (self.cfg.holdout_fraction * n as f64).floor() as usize;
        let (held, train) = if n_hold >= 1 && n_hold < n { order.split_at(n_hold) } else { (&order[..0], &order[..]) };
        let held_batch = (!held.is_empty()).then(|| self.real.batch(held));
        let heldout_nll = |f: &DynamicsModel| -> Result<Option<f64>> {
            held_batch.as_ref().map(|b| Ok(coupled::dynamics_nll_objective(f, b)?.loss)).transpose()
        };
        let before = heldout_nll(&self.m.dynamics)?;
        let mut rng = stream(self.cfg.seed, Stream::Pretrain);
        let mut last = None;
        for step in 0..self.cfg.pretrain_steps {
            let idx: Vec<usize> =
                sample_indices(train.len(), self.cfg.batch_size, &mut rng).into_iter().map(|i| train[i]).collect();
            let b = self.real.batch(&idx);
            let e = coupled::dynamics_nll_objective(&self.m.dynamics, &b)?;
            if !e.loss.is_finite() {
                return Err(Error::Diverged { step, what: "dynamics pretraining loss".into() });
            }
            self.opt_f.step(&mut self.m.dynamics, &e.grads)?;
            last = Some(e.loss);
        }
        let after = heldout_nll(&self.m.dynamics)?;
        log.push(Record::Pretrain(PretrainRecord {
            steps: self.cfg.pretrain_steps,
            loss_f: last,
            heldout_nll_before: before,
            heldout_nll_after: after,
        }));
        Ok(())
    }

    fn begin_step_without_rollouts(&self, step: usize) -> StepRecord {
        StepRecord { step, rollout_buffer: self.buffer.len(), ..Default::default() }
    }

    /// Generates this step's rollouts into the buffer.
    fn begin_step(&mut self, step: usize) -> Result<StepRecord> {
        let stats = self.generate(step)?;
        Ok(StepRecord {
            step,
            rollout_emitted: stats.emitted,
            rollout_truncated: stats.truncated(),
            rollout_buffer: self.buffer.len(),
            ..Default::default()
        })
    }

    fn generate(&mut self, step: usize) -> Result<RolloutStats> {
        let branches = self.cfg.rollout.branches;
        if branches == 0 {
            return Ok(RolloutStats::default());
        }
        let source = match (self.cfg.rollout.start_source, self.suboptimal) {
            (StartSource::ExpertAndSuboptimal, Some(_)) => &self.real,
            _ => self.expert,
        };
        let idx = sample_indices(source.len(), branches, &mut self.rollout_rng);
        let mut starts = DMatrix::zeros(self.k, branches);
        for (c, &i) in idx.iter().enumerate() {
            starts.column_mut(c).copy_from_slice(&source.transitions()[i].s);
        }
        let (out, stats) = generate_rollouts(
            &self.m.policy,
            &self.m.dynamics,
            &starts,
            self.cfg.rollout.horizon,
            &self.limits,
            &mut self.rollout_rng,
        )
        .map_err(|e| Error::Diverged { step, what: format!("rollout generation: {e}") })?;
        if stats.truncated() > 0 {
            ::log::debug!("step {step}: {} rollout branches truncated", stats.truncated());
        }
        self.buffer.push(out);
        Ok(stats)
    }

    fn sample_expert(&mut self) -> Result<Batch> {
        self.expert.sample_batch(self.cfg.batch_size, &mut self.batch_rng)
    }

    fn sample_suboptimal(&mut self) -> Result<Batch> {
        match self.suboptimal {
            Some(d) if !d.is_empty() => d.sample_batch(self.cfg.batch_size, &mut self.batch_rng),
            _ => Ok(Batch::empty(self.k, self.m_dim)),
        }
    }

    /// `None` when the buffer is empty; rollout terms are skipped then.
    fn sample_rollout(&mut self) -> Option<Batch> {
        self.buffer.sample_batch(self.cfg.batch_size, &mut self.batch_rng).filter(|b| !b.is_empty())
    }

    fn update_disc_r(&mut self, real: &Batch, roll: &Batch, rec: &mut StepRecord) -> Result<()> {
        let e = coupled::rollout_disc_objective(&self.m.disc_r, &self.m.policy, &self.m.dynamics, real, roll)?;
        check_loss(rec.step, "rollout discriminator loss", e.loss)?;
        step_model(&mut self.opt_dr, &mut self.m.disc_r, &e.grads, rec.step)?;
        rec.loss_dr = Some(e.loss);
        rec.order.push("d_r".into());
        Ok(())
    }

    fn update_disc_o(&mut self, expert: &Batch, unlabeled: &Batch, rec: &mut StepRecord) -> Result<()> {
        let (e, risk) =
            coupled::pu_disc_objective(&self.m.disc_o, &self.m.policy, expert, unlabeled, self.cfg.hyper.eta)?;
        check_loss(rec.step, "optimality discriminator loss", e.loss)?;
        if risk < 0.0 && !self.pu_warned {
            ::log::warn!("step {}: PU unlabeled-side risk estimate is negative ({risk:.4})", rec.step);
            self.pu_warned = true;
        }
        step_model(&mut self.opt_do, &mut self.m.disc_o, &e.grads, rec.step)?;
        rec.loss_do = Some(e.loss);
        rec.pu_risk = Some(risk);
        rec.order.push("d_o".into());
        Ok(())
    }

    fn apply_policy(&mut self, e: Evaluated, rec: &mut StepRecord) -> Result<()> {
        check_loss(rec.step, "policy loss", e.loss)?;
        step_model(&mut self.opt_pi, &mut self.m.policy, &e.grads, rec.step)?;
        rec.loss_pi = Some(e.loss);
        rec.order.push("pi".into());
        Ok(())
    }

    fn apply_dynamics(&mut self, e: Evaluated, rec: &mut StepRecord) -> Result<()> {
        check_loss(rec.step, "dynamics loss", e.loss)?;
        step_model(&mut self.opt_f, &mut self.m.dynamics, &e.grads, rec.step)?;
        rec.loss_f = Some(e.loss);
        rec.order.push("f".into());
        Ok(())
    }

    /// Recomputes `d_r` with the just-updated policy, then updates `f`.
    fn update_dynamics_dmil(&mut self, real: &Batch, roll: &Batch, rec: &mut StepRecord) -> Result<()> {
        let m = &self.m;
        let d_real = coupled::rollout_disc_values(&m.disc_r, &m.policy, &m.dynamics, real)?;
        let d_roll = coupled::rollout_disc_values(&m.disc_r, &m.policy, &m.dynamics, roll)?;
        let e = coupled::dmil_dynamics_from_values(&m.dynamics, real, roll, &d_real, &d_roll, self.cfg.hyper.alpha_f)?;
        self.apply_dynamics(e, rec)
    }

    fn finish_step(&mut self, rec: StepRecord, log: &mut TrainLog) -> Result<()> {
        let step = rec.step;
        let last = step + 1 == self.cfg.total_steps;
        if step.is_multiple_of(self.cfg.log_every) || last {
            log.push(Record::Step(rec));
        }
        if self.cfg.eval_every > 0 && (step + 1).is_multiple_of(self.cfg.eval_every) && !last {
            self.eval(step + 1, log)?;
        }
        Ok(())
    }

    fn final_eval(&mut self, log: &mut TrainLog) -> Result<()> {
        self.eval(self.cfg.total_steps, log)
    }

    fn eval(&self, step: usize, log: &mut TrainLog) -> Result<()> {
        let r = evaluate(&MeanPolicy(&self.m.policy), &self.env, self.cfg.eval_episodes, self.cfg.seed)?;
        log.push(Record::Eval(EvalRecord { step, mean: r.mean, std: r.std, scores: r.scores }));
        Ok(())
    }
}

fn check_loss(step: usize, what: &str, loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { step, what: format!("{what} is {loss}") })
    }
}

fn step_model<M: Parameterized>(opt: &mut AdamState, model: &mut M, grads: &GradientBuffer, step: usize) -> Result<()> {
    opt.step(model, grads).map_err(|e| match e {
        Error::NonFiniteGradient { .. } | Error::NonFiniteParameter { .. } => {
            Error::Diverged { step, what: e.to_string() }
        }
        other => other,
    })
}
