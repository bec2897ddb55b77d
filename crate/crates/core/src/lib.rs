//! Discriminator-guided model-based offline imitation learning.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`], [`optim`], [`gradcheck`]: dense ReLU networks, Adam, and
//!   finite-difference gradient verification.
//! - [`models`]: Gaussian policy, probabilistic dynamics model, and the
//!   clamped rollout/optimality discriminators.
//! - [`objectives`]: every loss and per-sample weight used by DMIL, D2MIL and
//!   the behaviour-cloning baselines.
//! - [`env`], [`data`]: linearised balance-robot simulators, the LQR expert,
//!   and dataset construction/IO.
//! - [`rollout`]: short branched model rollouts and the FIFO rollout buffer.
//! - [`trainer`]: training loops, evaluation and the JSON-lines log.
//! - [`checkpoint`], [`verify`]: model persistence and the property suite.

pub mod checkpoint;
pub mod data;
pub mod env;
pub mod error;
pub mod gradcheck;
pub mod models;
pub mod nn;
pub mod objectives;
pub mod optim;
pub mod rng;
pub mod rollout;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
