//! Context-gated spiking networks for two-task lifelong learning.
//!
//! The crate is organised bottom-up: `numerics` holds the deterministic RNG
//! and statistics kernels, `taskgen` builds the two-factor decision grid and
//! curricula, `single` and `multi` implement the two spiking model families,
//! `baselines` adds the continual-learning comparison methods, and
//! `analysis` computes figure-level summaries from trained models.

pub mod analysis;
pub mod baselines;
pub mod model;
pub mod multi;
pub mod numerics;
pub mod single;
pub mod taskgen;

pub use model::{accuracy_on, DecisionModel, Schedule, TrainError, TrainLog};
pub use taskgen::{Curriculum, Decision, GridConfig, Regime, Stimulus, TaskId};
