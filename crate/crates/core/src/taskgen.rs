//! The two-context "trees" task: parametric Gaussian-bump stimuli on a
//! branch x leaf density grid, signed rewards per context, congruency labels,
//! and blocked/interleaved curricula.

use crate::numerics::RngStream;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TaskError {
    #[error("grid size must be odd and >= 3, got {0}")]
    InvalidGrid(usize),
}

/// Which garden (task) the trial belongs to. Task 1 rewards by leaf density,
/// task 2 by branch density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskId {
    Task1,
    Task2,
}

impl TaskId {
    pub fn index(self) -> usize {
        match self {
            TaskId::Task1 => 0,
            TaskId::Task2 => 1,
        }
    }

    pub fn other(self) -> TaskId {
        match self {
            TaskId::Task1 => TaskId::Task2,
            TaskId::Task2 => TaskId::Task1,
        }
    }

    /// One-hot context signal fed to the networks.
    pub fn one_hot(self) -> [f64; 2] {
        match self {
            TaskId::Task1 => [1.0, 0.0],
            TaskId::Task2 => [0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Accept,
    Reject,
    Neutral,
}

/// One trial: grid position, active context, flattened feature bump, the
/// signed reward for accepting under that context, and the congruency flag
/// (None when either task's reward is zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    pub branch_level: usize,
    pub leaf_level: usize,
    pub context: TaskId,
    pub features: Vec<f64>,
    pub reward: i32,
    pub congruent: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Blocked,
    Interleaved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curriculum {
    pub regime: Regime,
    pub n_per_task: usize,
    pub trials: Vec<Stimulus>,
}

/// Grid geometry and stimulus blur shared by all generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub d: usize,
    pub blur: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { d: 5, blur: 0.8 }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.d < 3 || self.d % 2 == 0 {
            return Err(TaskError::InvalidGrid(self.d));
        }
        Ok(())
    }

    pub fn center(&self) -> i32 {
        (self.d as i32 + 1) / 2
    }
}

/// Signed reward for a level along the relevant dimension: r(l) = l - (D+1)/2.
pub fn level_reward(level: usize, d: usize) -> i32 {
    level as i32 - (d as i32 + 1) / 2
}

fn reward_for(branch: usize, leaf: usize, context: TaskId, d: usize) -> i32 {
    match context {
        TaskId::Task1 => level_reward(leaf, d),
        TaskId::Task2 => level_reward(branch, d),
    }
}

/// Gaussian bump on the D x D grid centered at (branch, leaf), peak 1,
/// flattened row-major with branch as the row index. blur = 0 degenerates to
/// a one-hot vector.
pub fn encode_stimulus(branch_level: usize, leaf_level: usize, d: usize, blur: f64) -> Vec<f64> {
    let mut feat = vec![0.0; d * d];
    if blur == 0.0 {
        feat[(branch_level - 1) * d + (leaf_level - 1)] = 1.0;
        return feat;
    }
    let inv = 1.0 / (2.0 * blur * blur);
    for b in 1..=d {
        for l in 1..=d {
            let db = b as f64 - branch_level as f64;
            let dl = l as f64 - leaf_level as f64;
            feat[(b - 1) * d + (l - 1)] = (-(db * db + dl * dl) * inv).exp();
        }
    }
    feat
}

/// All D^2 stimulus templates for each context (2*D^2 total), task 1 first.
pub fn make_grid(cfg: &GridConfig) -> Result<Vec<Stimulus>, TaskError> {
    cfg.validate()?;
    let d = cfg.d;
    let mut out = Vec::with_capacity(2 * d * d);
    for context in [TaskId::Task1, TaskId::Task2] {
        for branch in 1..=d {
            for leaf in 1..=d {
                let r1 = reward_for(branch, leaf, TaskId::Task1, d);
                let r2 = reward_for(branch, leaf, TaskId::Task2, d);
                let congruent = if r1 == 0 || r2 == 0 {
                    None
                } else {
                    Some(r1.signum() == r2.signum())
                };
                out.push(Stimulus {
                    branch_level: branch,
                    leaf_level: leaf,
                    context,
                    features: encode_stimulus(branch, leaf, d, cfg.blur),
                    reward: reward_for(branch, leaf, context, d),
                    congruent,
                });
            }
        }
    }
    Ok(out)
}

/// Templates restricted to one context.
pub fn templates_for(templates: &[Stimulus], task: TaskId) -> Vec<&Stimulus> {
    templates.iter().filter(|s| s.context == task).collect()
}

/// Training curriculum: trials sampled uniformly with replacement from each
/// context's template set. Blocked puts all task-1 trials first; interleaved
/// is a seeded shuffle of the concatenation.
pub fn make_curriculum(
    cfg: &GridConfig,
    regime: Regime,
    n_per_task: usize,
    seed: u64,
) -> Result<Curriculum, TaskError> {
    let templates = make_grid(cfg)?;
    let mut rng = RngStream::new(seed).substream(&[0x7261_7363]);
    let mut trials = Vec::with_capacity(2 * n_per_task);
    for task in [TaskId::Task1, TaskId::Task2] {
        let pool = templates_for(&templates, task);
        for _ in 0..n_per_task {
            trials.push(pool[rng.below(pool.len())].clone());
        }
    }
    if regime == Regime::Interleaved {
        rng.shuffle(&mut trials);
    }
    Ok(Curriculum { regime, n_per_task, trials })
}

/// Correct decision for a trial: accept positive rewards, reject negative,
/// neutral (excluded from scoring) at zero.
pub fn decision_target(stim: &Stimulus) -> Decision {
    match stim.reward.signum() {
        1 => Decision::Accept,
        -1 => Decision::Reject,
        _ => Decision::Neutral,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rewards_closed_form() {
        let cfg = GridConfig::default();
        let grid = make_grid(&cfg).unwrap();
        let s = grid
            .iter()
            .find(|s| s.context == TaskId::Task1 && s.leaf_level == 5 && s.branch_level == 1)
            .unwrap();
        assert_eq!(s.reward, 2);
        // Center of the relevant dimension is neutral for any task.
        for s in grid.iter().filter(|s| {
            (s.context == TaskId::Task1 && s.leaf_level == 3)
                || (s.context == TaskId::Task2 && s.branch_level == 3)
        }) {
            assert_eq!(s.reward, 0);
            assert_eq!(decision_target(s), Decision::Neutral);
        }
    }

    #[test]
    fn grid_counts_and_congruency() {
        let grid = make_grid(&GridConfig::default()).unwrap();
        assert_eq!(grid.len(), 50);
        let t1 = templates_for(&grid, TaskId::Task1);
        assert_eq!(t1.len(), 25);
        // Brute-force enumeration of the 25 (branch, leaf) pairs.
        let mut congruent = 0;
        let mut incongruent = 0;
        let mut undefined = 0;
        for s in &t1 {
            let sb = (s.branch_level as i32 - 3).signum();
            let sl = (s.leaf_level as i32 - 3).signum();
            match s.congruent {
                Some(true) => {
                    assert!(sb == sl && sb != 0);
                    congruent += 1;
                }
                Some(false) => {
                    assert!(sb != sl && sb != 0 && sl != 0);
                    incongruent += 1;
                }
                None => {
                    assert!(sb == 0 || sl == 0);
                    undefined += 1;
                }
            }
        }
        assert_eq!((congruent, incongruent, undefined), (8, 8, 9));
    }

    #[test]
    fn grid_rejects_bad_d() {
        assert!(make_grid(&GridConfig { d: 4, blur: 0.8 }).is_err());
        assert!(make_grid(&GridConfig { d: 1, blur: 0.8 }).is_err());
    }

    #[test]
    fn reward_antisymmetry() {
        for d in [3, 5, 7] {
            for l in 1..=d {
                assert_eq!(level_reward(l, d), -level_reward(d + 1 - l, d));
            }
        }
    }

    #[test]
    fn context_swap_keeps_features() {
        let grid = make_grid(&GridConfig::default()).unwrap();
        for s1 in templates_for(&grid, TaskId::Task1) {
            let s2 = grid
                .iter()
                .find(|s| {
                    s.context == TaskId::Task2
                        && s.branch_level == s1.branch_level
                        && s.leaf_level == s1.leaf_level
                })
                .unwrap();
            assert_eq!(s1.features, s2.features);
            assert_eq!(s2.reward, level_reward(s2.branch_level, 5));
        }
    }

    #[test]
    fn encode_delta_is_one_hot() {
        let f = encode_stimulus(2, 4, 5, 0.0);
        assert_eq!(f.iter().filter(|v| **v != 0.0).count(), 1);
        assert_eq!(f[(2 - 1) * 5 + (4 - 1)], 1.0);

        let g = encode_stimulus(3, 3, 5, 0.0);
        let dot: f64 = f.iter().zip(&g).map(|(a, b)| a * b).sum();
        assert_eq!(dot, 0.0);
    }

    #[test]
    fn encode_gaussian_values() {
        let f = encode_stimulus(3, 3, 5, 0.8);
        assert_eq!(f[(3 - 1) * 5 + (3 - 1)], 1.0);
        let expected = (-1.0f64 / (2.0 * 0.8 * 0.8)).exp();
        assert!((f[(3 - 1) * 5 + (4 - 1)] - expected).abs() < 1e-12);
        assert!((expected - 0.4578).abs() < 1e-4);
    }

    #[test]
    fn curriculum_blocked_prefix() {
        let cur = make_curriculum(&GridConfig::default(), Regime::Blocked, 3, 0).unwrap();
        let ctx: Vec<TaskId> = cur.trials.iter().map(|t| t.context).collect();
        assert_eq!(
            ctx,
            vec![
                TaskId::Task1,
                TaskId::Task1,
                TaskId::Task1,
                TaskId::Task2,
                TaskId::Task2,
                TaskId::Task2
            ]
        );
    }

    #[test]
    fn curriculum_deterministic() {
        let cfg = GridConfig::default();
        let a = make_curriculum(&cfg, Regime::Interleaved, 50, 9).unwrap();
        let b = make_curriculum(&cfg, Regime::Interleaved, 50, 9).unwrap();
        assert_eq!(a, b);
        let c = make_curriculum(&cfg, Regime::Interleaved, 50, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn curriculum_interleaved_balanced() {
        let cur = make_curriculum(&GridConfig::default(), Regime::Interleaved, 400, 11).unwrap();
        assert_eq!(cur.trials.len(), 800);
        let first_half_t1 = cur.trials[..400]
            .iter()
            .filter(|t| t.context == TaskId::Task1)
            .count() as f64
            / 400.0;
        assert!((0.4..=0.6).contains(&first_half_t1), "fraction {}", first_half_t1);
        let total_t1 = cur.trials.iter().filter(|t| t.context == TaskId::Task1).count();
        assert_eq!(total_t1, 400);
    }
}
