//! Figure-level statistics: choice matrices, congruency effect, psychometric
//! fits, factorized/linear model regression, task-selectivity proportions,
//! and forgetting slopes.

use crate::model::DecisionModel;
use crate::numerics::{logistic_fit, ols_fit, Matrix, NumericsError};
use crate::taskgen::{decision_target, Decision, Stimulus, TaskId};
use serde::{Deserialize, Serialize};

/// Accept indicator per grid cell for one task, branch as the row axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceMatrix {
    pub task: TaskId,
    pub d: usize,
    /// grid[(branch-1) * d + (leaf-1)] = accept probability in [0, 1].
    pub grid: Vec<f64>,
}

impl ChoiceMatrix {
    pub fn at(&self, branch: usize, leaf: usize) -> f64 {
        self.grid[(branch - 1) * self.d + (leaf - 1)]
    }
}

/// Evaluate a deterministic model on all D^2 templates of one task.
pub fn choice_matrix(model: &dyn DecisionModel, templates: &[Stimulus], task: TaskId) -> ChoiceMatrix {
    let cells: Vec<&Stimulus> = templates.iter().filter(|s| s.context == task).collect();
    let d = (cells.len() as f64).sqrt() as usize;
    assert_eq!(d * d, cells.len(), "template set is not a full grid");
    let mut grid = vec![0.0; d * d];
    for s in cells {
        let accept = model.decide(&s.features, task) == Decision::Accept;
        grid[(s.branch_level - 1) * d + (s.leaf_level - 1)] = if accept { 1.0 } else { 0.0 };
    }
    ChoiceMatrix { task, d, grid }
}

/// The ideal context-using choice pattern: accept iff the relevant level is
/// above the neutral midpoint.
pub fn ideal_choice_matrix(task: TaskId, d: usize) -> ChoiceMatrix {
    let center = (d + 1) / 2;
    let mut grid = vec![0.0; d * d];
    for b in 1..=d {
        for l in 1..=d {
            let rel = match task {
                TaskId::Task1 => l,
                TaskId::Task2 => b,
            };
            grid[(b - 1) * d + (l - 1)] = if rel > center { 1.0 } else { 0.0 };
        }
    }
    ChoiceMatrix { task, d, grid }
}

/// The context-blind linear pattern: accept iff leaf + branch exceeds twice
/// the midpoint.
pub fn linear_choice_matrix(task: TaskId, d: usize) -> ChoiceMatrix {
    let center = (d + 1) / 2;
    let mut grid = vec![0.0; d * d];
    for b in 1..=d {
        for l in 1..=d {
            grid[(b - 1) * d + (l - 1)] = if b + l > 2 * center { 1.0 } else { 0.0 };
        }
    }
    ChoiceMatrix { task, d, grid }
}

/// Pearson correlation between two choice matrices.
pub fn matrix_correlation(a: &ChoiceMatrix, b: &ChoiceMatrix) -> f64 {
    let n = a.grid.len() as f64;
    let ma = a.grid.iter().sum::<f64>() / n;
    let mb = b.grid.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.grid.iter().zip(&b.grid) {
        num += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        num / (va * vb).sqrt()
    }
}

/// Accuracy over congruent vs incongruent non-neutral templates, both tasks
/// pooled. Templates with undefined congruency (either reward zero) are
/// excluded.
pub fn congruency_effect(model: &dyn DecisionModel, templates: &[Stimulus]) -> (f64, f64) {
    let mut acc = [[0usize; 2]; 2]; // [congruent][correct]
    for s in templates {
        let target = decision_target(s);
        if target == Decision::Neutral {
            continue;
        }
        let Some(congruent) = s.congruent else { continue };
        let correct = model.decide(&s.features, s.context) == target;
        acc[congruent as usize][correct as usize] += 1;
    }
    let frac = |bucket: [usize; 2]| {
        let total = bucket[0] + bucket[1];
        if total == 0 {
            0.0
        } else {
            bucket[1] as f64 / total as f64
        }
    };
    (frac(acc[1]), frac(acc[0]))
}

/// Logistic slopes of the accept choice against the centered relevant and
/// irrelevant levels for one task. The choice grid is first averaged over the
/// other dimension, giving one accept fraction per level; constant choices
/// fit a zero slope and separable fits propagate the slope cap.
pub fn psychometric_slopes(choice: &ChoiceMatrix) -> (f64, f64) {
    let d = choice.d;
    let center = ((d + 1) / 2) as f64;
    // marginal[0] is over the relevant dimension, marginal[1] the irrelevant.
    let mut marginals = [vec![0.0; d], vec![0.0; d]];
    for b in 1..=d {
        for l in 1..=d {
            let (rel, irr) = match choice.task {
                TaskId::Task1 => (l, b),
                TaskId::Task2 => (b, l),
            };
            marginals[0][rel - 1] += choice.at(b, l) / d as f64;
            marginals[1][irr - 1] += choice.at(b, l) / d as f64;
        }
    }
    let slope_of = |y: &[f64]| {
        let x: Vec<f64> = (1..=d).map(|v| v as f64 - center).collect();
        match logistic_fit(&x, y) {
            Ok(fit) => fit.slope,
            // One-class choices carry no discriminative slope.
            Err(NumericsError::InvalidArgument(_)) => 0.0,
            Err(e) => panic!("psychometric fit failed: {e}"),
        }
    };
    (slope_of(&marginals[0]), slope_of(&marginals[1]))
}

/// Regress the model's stacked two-task choices on the factorized and linear
/// ideals (with intercept); returns (beta_factorized, beta_linear).
pub fn model_regression(
    task1: &ChoiceMatrix,
    task2: &ChoiceMatrix,
) -> Result<(f64, f64), NumericsError> {
    let d = task1.d;
    let mut rows = Vec::with_capacity(2 * d * d);
    let mut y = Vec::with_capacity(2 * d * d);
    for (choice, task) in [(task1, TaskId::Task1), (task2, TaskId::Task2)] {
        let fact = ideal_choice_matrix(task, d);
        let lin = linear_choice_matrix(task, d);
        for i in 0..d * d {
            rows.push(vec![1.0, fact.grid[i], lin.grid[i]]);
            y.push(choice.grid[i]);
        }
    }
    let fit = ols_fit(&Matrix::from_rows(&rows), &y)?;
    Ok((fit.coefficients[1], fit.coefficients[2]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnitClass {
    Task1Selective,
    Task2Selective,
    Both,
    Agnostic,
}

/// Per-unit task-selectivity classification from trial activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectivityReport {
    pub classes: Vec<UnitClass>,
    /// Fraction of units classified task-1- or task-2-selective.
    pub proportion_selective: f64,
    /// Mean activity per class per context: [class][task index].
    pub mean_activity: [[f64; 2]; 4],
}

/// Classify units by OLS of activity on a +/-1 context regressor with
/// intercept: |t| >= 2 with a sign and mean-activity match marks a unit
/// task selective.
pub fn selectivity(activity: &[Vec<f64>], contexts: &[TaskId]) -> SelectivityReport {
    assert_eq!(activity.len(), contexts.len());
    assert!(!activity.is_empty());
    let n_units = activity[0].len();
    let n_trials = activity.len();
    for task in [TaskId::Task1, TaskId::Task2] {
        let n = contexts.iter().filter(|c| **c == task).count();
        assert!(n >= 30, "need >= 30 trials per context, got {n}");
    }
    let design = Matrix::from_rows(
        &contexts
            .iter()
            .map(|c| vec![1.0, if *c == TaskId::Task1 { 1.0 } else { -1.0 }])
            .collect::<Vec<_>>(),
    );

    let mut classes = Vec::with_capacity(n_units);
    let mut class_sums = [[0.0f64; 2]; 4];
    let mut class_counts = [[0usize; 2]; 4];
    for u in 0..n_units {
        let y: Vec<f64> = (0..n_trials).map(|t| activity[t][u]).collect();
        let (mut m1, mut m2) = (0.0, 0.0);
        let (mut n1, mut n2) = (0usize, 0usize);
        for (v, c) in y.iter().zip(contexts) {
            if *c == TaskId::Task1 {
                m1 += v;
                n1 += 1;
            } else {
                m2 += v;
                n2 += 1;
            }
        }
        m1 /= n1 as f64;
        m2 /= n2 as f64;
        let t = match ols_fit(&design, &y) {
            Ok(fit) => fit.t_statistics[1],
            // Constant activity: no context dependence.
            Err(_) => 0.0,
        };
        let class = if t.abs() < 2.0 {
            UnitClass::Agnostic
        } else if t > 0.0 && m1 > m2 {
            UnitClass::Task1Selective
        } else if t < 0.0 && m2 > m1 {
            UnitClass::Task2Selective
        } else {
            UnitClass::Both
        };
        let k = class as usize;
        class_sums[k][0] += m1;
        class_sums[k][1] += m2;
        class_counts[k][0] += 1;
        class_counts[k][1] += 1;
        classes.push(class);
    }
    let selective = classes
        .iter()
        .filter(|c| matches!(c, UnitClass::Task1Selective | UnitClass::Task2Selective))
        .count();
    let mut mean_activity = [[0.0; 2]; 4];
    for k in 0..4 {
        for ctx in 0..2 {
            if class_counts[k][ctx] > 0 {
                mean_activity[k][ctx] = class_sums[k][ctx] / class_counts[k][ctx] as f64;
            }
        }
    }
    SelectivityReport {
        classes,
        proportion_selective: selective as f64 / n_units as f64,
        mean_activity,
    }
}

/// OLS slope of a curve's second half against the evaluation index.
pub fn forgetting_slope(series: &[f64]) -> f64 {
    assert!(series.len() >= 4, "need >= 4 evaluation points");
    let half = &series[series.len() / 2..];
    let n = half.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = half.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &v) in half.iter().enumerate() {
        let dx = i as f64 - mx;
        num += dx * (v - my);
        den += dx * dx;
    }
    num / den
}
