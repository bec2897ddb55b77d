//! The coupled model families: Gaussian policy, probabilistic dynamics model,
//! and the rollout / optimality discriminators.

mod discriminator;
mod dynamics;
mod normalizer;
mod policy;

pub use discriminator::{clamp_output, sigmoid, DiscInputs, Discriminator, DiscriminatorKind, OUTPUT_MAX, OUTPUT_MIN};
pub use dynamics::{DeltaPrediction, DynamicsModel, LOG_VAR_MAX, LOG_VAR_MIN};
pub use normalizer::Normalizer;
pub use policy::{GaussianPolicy, LOG_STD_MAX, LOG_STD_MIN};

/// `0.5 * ln(2 pi)`.
pub const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;
