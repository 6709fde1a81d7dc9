//! Shared training contracts: decision interface, training schedule, and the
//! per-run log consumed by the analysis battery.

use crate::taskgen::{decision_target, Decision, Stimulus, TaskId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("training loss became non-finite at trial {0}")]
    DivergedLoss(usize),
}

/// Global/local interleaving schedule: `i_m` gradient steps then `i_n` local
/// plasticity passes per minibatch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub i_m: usize,
    pub i_n: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { i_m: 1, i_n: 1 }
    }
}

/// Anything that can turn a stimulus into an accept/reject choice and expose
/// hidden-unit activity for selectivity analysis.
pub trait DecisionModel {
    fn decide(&self, features: &[f64], context: TaskId) -> Decision;

    /// Per-hidden-unit activity proxy: mean spike count over the window for
    /// multi-spike nets, negative spike latency for single-spike nets.
    fn hidden_activity(&self, features: &[f64], context: TaskId) -> Vec<f64>;
}

/// Fraction of non-neutral templates of `task` answered correctly.
pub fn accuracy_on(model: &dyn DecisionModel, templates: &[Stimulus], task: TaskId) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for stim in templates.iter().filter(|s| s.context == task) {
        let target = decision_target(stim);
        if target == Decision::Neutral {
            continue;
        }
        total += 1;
        if model.decide(&stim.features, stim.context) == target {
            correct += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// Per-run training record: evaluation-epoch accuracy curves plus weight
/// summaries used by the retention analyses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Number of training trials consumed at each evaluation point.
    pub eval_trials: Vec<usize>,
    pub acc_task1: Vec<f64>,
    pub acc_task2: Vec<f64>,
    /// Mean training loss over the interval preceding each evaluation.
    pub mean_loss: Vec<f64>,
    /// Mean |weight| on the context rows of the gated layer at each eval.
    pub context_weight_abs: Vec<f64>,
    /// Mean |weight| on all non-context inputs of the same layer.
    pub other_weight_abs: Vec<f64>,
}

impl TrainLog {
    pub fn accuracy_series(&self, task: TaskId) -> &[f64] {
        match task {
            TaskId::Task1 => &self.acc_task1,
            TaskId::Task2 => &self.acc_task2,
        }
    }

    /// Evaluation points that fall inside the task-2 block of a blocked
    /// curriculum with `n_per_task` trials per task.
    pub fn task2_block_indices(&self, n_per_task: usize) -> Vec<usize> {
        self.eval_trials
            .iter()
            .enumerate()
            .filter(|(_, &t)| t > n_per_task)
            .map(|(i, _)| i)
            .collect()
    }
}
