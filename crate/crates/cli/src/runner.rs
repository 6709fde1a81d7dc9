//! Run execution: trains the configured model, computes the analysis
//! battery, and persists CSV/JSON artifacts under a manifest.

use crate::config::{CliError, Model, RunConfig};
use crate::manifest::RunManifest;
use cgsnn_core::analysis::{
    choice_matrix, congruency_effect, forgetting_slope, model_regression, psychometric_slopes,
    selectivity, ChoiceMatrix, SelectivityReport,
};
use cgsnn_core::baselines::{train_baseline, BaselineConfig};
use cgsnn_core::model::{DecisionModel, Schedule, TrainLog};
use cgsnn_core::multi::{MultiSpikeNet, MultiTrainConfig, OjaConfig};
use cgsnn_core::numerics::RngStream;
use cgsnn_core::single::{SingleSpikeNet, SingleTrainConfig, StdpConfig};
use cgsnn_core::taskgen::{
    make_curriculum, make_grid, templates_for, GridConfig, Regime, Stimulus, TaskId,
};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

/// Spike-count window length for the multi-spike substrate.
pub const WINDOW: usize = 10;
/// Template draws per task when sampling hidden activity for selectivity.
const SELECTIVITY_SAMPLES: usize = 50;
/// RNG substream tags: network init and selectivity sampling must not share
/// a stream or changing one analysis would silently reseed the other.
const SUB_NET: u64 = 0x6e65_74;
const SUB_SEL: u64 = 0x73_656c;

/// A trained network of either family, as stored in checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum TrainedModel {
    Single(SingleSpikeNet),
    Multi(MultiSpikeNet),
}

impl TrainedModel {
    pub fn as_decision_model(&self) -> &dyn DecisionModel {
        match self {
            TrainedModel::Single(net) => net,
            TrainedModel::Multi(net) => net,
        }
    }

    fn context_weight_summary(&self) -> (f64, f64) {
        match self {
            TrainedModel::Single(net) => net.context_weight_summary(),
            TrainedModel::Multi(net) => net.context_weight_summary(),
        }
    }
}

/// Figure-level statistics for one run, serialized into `stats.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunStats {
    pub final_task1: f64,
    pub final_task2: f64,
    /// OLS slope of task-1 accuracy over the late task-2 block; absent for
    /// interleaved curricula, where no forgetting phase exists.
    pub forgetting_slope: Option<f64>,
    pub acc_congruent: f64,
    pub acc_incongruent: f64,
    pub slope_relevant_task1: f64,
    pub slope_irrelevant_task1: f64,
    pub slope_relevant_task2: f64,
    pub slope_irrelevant_task2: f64,
    pub beta_factorized: f64,
    pub beta_linear: f64,
    pub context_weight_abs: f64,
    pub other_weight_abs: f64,
    pub proportion_selective: f64,
}

/// Everything a run produces, before any of it touches disk.
pub struct ExecOutcome {
    pub model: TrainedModel,
    pub log: TrainLog,
    pub stats: RunStats,
    pub selectivity: SelectivityReport,
    pub choice_task1: ChoiceMatrix,
    pub choice_task2: ChoiceMatrix,
    pub duration_secs: f64,
}

fn grid_config(cfg: &RunConfig) -> GridConfig {
    GridConfig { d: cfg.d, blur: cfg.blur }
}

/// Trains the configured model on a fresh curriculum. Deterministic in the
/// config: the network draws from a seed-derived substream and training
/// itself is data-ordered.
pub fn train(cfg: &RunConfig) -> Result<(TrainedModel, TrainLog, Vec<Stimulus>), CliError> {
    cfg.validate()?;
    let grid = grid_config(cfg);
    let templates = make_grid(&grid)?;
    let curriculum = make_curriculum(&grid, cfg.regime, cfg.n_per_task, cfg.seed)?;
    let mut rng = RngStream::new(cfg.seed).substream(&[SUB_NET]);
    let n_features = cfg.d * cfg.d;
    let schedule = Schedule { i_m: cfg.i_m, i_n: cfg.i_n };

    match cfg.model {
        Model::Single => {
            let mut net = SingleSpikeNet::new(n_features, cfg.hidden1, cfg.hidden2, &mut rng);
            let tc = SingleTrainConfig {
                learning_rate: cfg.learning_rate,
                batch_size: cfg.batch_size,
                schedule,
                stdp: StdpConfig {
                    a_plus: cfg.a_plus,
                    lambda_local: cfg.lambda_local,
                    ..StdpConfig::default()
                },
                eval_every: cfg.eval_every,
                ..SingleTrainConfig::default()
            };
            let log = cgsnn_core::single::train_single(&mut net, &curriculum, &templates, &tc)?;
            Ok((TrainedModel::Single(net), log, templates))
        }
        Model::Multi => {
            let mut net = MultiSpikeNet::new(
                n_features,
                cfg.hidden1,
                cfg.hidden2,
                cfg.neuron_kind(),
                WINDOW,
                &mut rng,
            );
            let bc = BaselineConfig {
                train: MultiTrainConfig {
                    learning_rate: cfg.learning_rate,
                    batch_size: cfg.batch_size,
                    schedule,
                    oja: OjaConfig { eta_hebb: cfg.eta_hebb },
                    sluggish_alpha: cfg.sluggish,
                    eval_every: cfg.eval_every,
                },
                alpha_owm: cfg.alpha_owm,
                gate_fraction: cfg.gate_fraction,
                mask_seed: cfg.seed,
            };
            let method = cfg.method.as_multi().expect("validated multi method");
            let log = train_baseline(method, &mut net, &curriculum, &templates, &bc)?;
            Ok((TrainedModel::Multi(net), log, templates))
        }
    }
}

/// Hidden-activity selectivity over seeded template redraws, balanced across
/// the two contexts.
pub fn selectivity_of(
    model: &dyn DecisionModel,
    templates: &[Stimulus],
    seed: u64,
) -> SelectivityReport {
    let mut rng = RngStream::new(seed).substream(&[SUB_SEL]);
    let mut activity = Vec::new();
    let mut contexts = Vec::new();
    for task in [TaskId::Task1, TaskId::Task2] {
        let pool = templates_for(templates, task);
        for _ in 0..SELECTIVITY_SAMPLES {
            let s = pool[rng.below(pool.len())];
            activity.push(model.hidden_activity(&s.features, task));
            contexts.push(task);
        }
    }
    selectivity(&activity, &contexts)
}

/// Full analysis battery over a trained model and its training log.
pub fn analyze(
    cfg: &RunConfig,
    model: &TrainedModel,
    log: &TrainLog,
    templates: &[Stimulus],
) -> Result<(RunStats, SelectivityReport, ChoiceMatrix, ChoiceMatrix), CliError> {
    let dm = model.as_decision_model();
    let cm1 = choice_matrix(dm, templates, TaskId::Task1);
    let cm2 = choice_matrix(dm, templates, TaskId::Task2);
    let (acc_congruent, acc_incongruent) = congruency_effect(dm, templates);
    let (slope_relevant_task1, slope_irrelevant_task1) = psychometric_slopes(&cm1);
    let (slope_relevant_task2, slope_irrelevant_task2) = psychometric_slopes(&cm2);
    let (beta_factorized, beta_linear) = model_regression(&cm1, &cm2)
        .map_err(|e| CliError::ConfigInvalid(format!("regression failed: {e}")))?;
    let sel = selectivity_of(dm, templates, cfg.seed);
    let (context_weight_abs, other_weight_abs) = model.context_weight_summary();

    let slope = if cfg.regime == Regime::Blocked {
        let idx = log.task2_block_indices(cfg.n_per_task);
        let series: Vec<f64> = idx.iter().map(|&i| log.acc_task1[i]).collect();
        (series.len() >= 4).then(|| forgetting_slope(&series))
    } else {
        None
    };

    let stats = RunStats {
        final_task1: *log.acc_task1.last().unwrap_or(&0.0),
        final_task2: *log.acc_task2.last().unwrap_or(&0.0),
        forgetting_slope: slope,
        acc_congruent,
        acc_incongruent,
        slope_relevant_task1,
        slope_irrelevant_task1,
        slope_relevant_task2,
        slope_irrelevant_task2,
        beta_factorized,
        beta_linear,
        context_weight_abs,
        other_weight_abs,
        proportion_selective: sel.proportion_selective,
    };
    Ok((stats, sel, cm1, cm2))
}

/// Trains and analyzes without writing anything; the sweep driver and the
/// acceptance checks consume this directly.
pub fn execute(cfg: &RunConfig) -> Result<ExecOutcome, CliError> {
    let t0 = Instant::now();
    let (model, log, templates) = train(cfg)?;
    let (stats, sel, cm1, cm2) = analyze(cfg, &model, &log, &templates)?;
    Ok(ExecOutcome {
        model,
        log,
        stats,
        selectivity: sel,
        choice_task1: cm1,
        choice_task2: cm2,
        duration_secs: t0.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// Artifact emission
// ---------------------------------------------------------------------------

fn accuracy_csv(run_id: &str, seed: u64, log: &TrainLog) -> String {
    let mut out = format!("# run {run_id} seed {seed}\nepoch,task,accuracy\n");
    for (i, &t) in log.eval_trials.iter().enumerate() {
        out += &format!("{t},1,{}\n{t},2,{}\n", log.acc_task1[i], log.acc_task2[i]);
    }
    out
}

fn choice_csv(run_id: &str, seed: u64, cm: &ChoiceMatrix) -> String {
    let mut out = format!("# run {run_id} seed {seed}\nbranch");
    for l in 1..=cm.d {
        out += &format!(",leaf{l}");
    }
    out.push('\n');
    for b in 1..=cm.d {
        out += &b.to_string();
        for l in 1..=cm.d {
            out += &format!(",{}", cm.at(b, l));
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    run: &'a str,
    seed: u64,
    #[serde(flatten)]
    body: &'a T,
}

fn tagged_json<T: Serialize>(run_id: &str, seed: u64, body: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(&Tagged { run: run_id, seed, body })?)
}

/// On-disk training checkpoint: config snapshot plus all weight matrices
/// (self-describing through their shape fields).
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub run: String,
    pub config: RunConfig,
    pub model: TrainedModel,
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn write_artifacts(
    out_dir: &Path,
    manifest: &mut RunManifest,
    outcome: &ExecOutcome,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)?;
    let cfg = manifest.config.clone();
    let run_id = manifest.run_id.clone();
    let seed = cfg.seed;
    let files: Vec<(&str, String)> = vec![
        ("accuracy.csv", accuracy_csv(&run_id, seed, &outcome.log)),
        ("choice_task1.csv", choice_csv(&run_id, seed, &outcome.choice_task1)),
        ("choice_task2.csv", choice_csv(&run_id, seed, &outcome.choice_task2)),
        ("selectivity.json", tagged_json(&run_id, seed, &outcome.selectivity)?),
        ("stats.json", tagged_json(&run_id, seed, &outcome.stats)?),
        (
            "checkpoint.json",
            serde_json::to_string_pretty(&Checkpoint {
                run: run_id.clone(),
                config: cfg,
                model: outcome.model.clone(),
            })?,
        ),
    ];
    for (name, text) in &files {
        std::fs::write(out_dir.join(name), text)?;
        manifest.record_file(name, text.as_bytes());
    }
    Ok(())
}

/// The `train` subcommand body: execute the run and persist every artifact
/// plus its manifest.
pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<RunManifest, CliError> {
    let mut cfg = cfg.clone();
    cfg.normalize();
    cfg.validate()?;
    let outcome = execute(&cfg)?;
    let mut manifest = RunManifest::new(cfg);
    write_artifacts(out_dir, &mut manifest, &outcome)?;
    manifest.finalize(outcome.duration_secs);
    std::fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// The `analyze` subcommand body: recompute the analysis artifacts from a
/// stored checkpoint without retraining. The accuracy curves live in the
/// training run's directory, so only analysis files are rewritten here.
pub fn run_analyze(checkpoint: &Path, out_dir: &Path) -> Result<RunManifest, CliError> {
    let t0 = Instant::now();
    let ck = load_checkpoint(checkpoint)?;
    let grid = grid_config(&ck.config);
    let templates = make_grid(&grid)?;
    // Choice/selectivity stats depend only on the trained weights; the
    // log-derived fields are recomputed as empty.
    let log = TrainLog::default();
    let (stats, sel, cm1, cm2) = analyze(&ck.config, &ck.model, &log, &templates)?;
    std::fs::create_dir_all(out_dir)?;
    let mut manifest = RunManifest::new(ck.config.clone());
    let seed = ck.config.seed;
    let files: Vec<(&str, String)> = vec![
        ("choice_task1.csv", choice_csv(&manifest.run_id, seed, &cm1)),
        ("choice_task2.csv", choice_csv(&manifest.run_id, seed, &cm2)),
        ("selectivity.json", tagged_json(&manifest.run_id, seed, &sel)?),
        ("stats.json", tagged_json(&manifest.run_id, seed, &stats)?),
    ];
    for (name, text) in &files {
        std::fs::write(out_dir.join(name), text)?;
        manifest.record_file(name, text.as_bytes());
    }
    manifest.finalize(t0.elapsed().as_secs_f64());
    std::fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// The `gen-data` subcommand body: emit the template grid and one curriculum
/// as CSV for inspection.
pub fn run_gen_data(cfg: &RunConfig, out_dir: &Path) -> Result<RunManifest, CliError> {
    let t0 = Instant::now();
    cfg.validate()?;
    let grid = grid_config(cfg);
    let templates = make_grid(&grid)?;
    let curriculum = make_curriculum(&grid, cfg.regime, cfg.n_per_task, cfg.seed)?;
    let mut manifest = RunManifest::new(cfg.clone());

    let row = |i: usize, s: &Stimulus| {
        format!(
            "{i},{},{},{},{},{}\n",
            s.context.index() + 1,
            s.branch_level,
            s.leaf_level,
            s.reward,
            s.congruent.map_or("".to_string(), |c| c.to_string()),
        )
    };
    let header = format!(
        "# run {} seed {}\nindex,context,branch,leaf,reward,congruent\n",
        manifest.run_id, cfg.seed
    );
    let mut templates_csv = header.clone();
    for (i, s) in templates.iter().enumerate() {
        templates_csv += &row(i, s);
    }
    let mut curriculum_csv = header;
    for (i, s) in curriculum.trials.iter().enumerate() {
        curriculum_csv += &row(i, s);
    }

    std::fs::create_dir_all(out_dir)?;
    for (name, text) in [("templates.csv", &templates_csv), ("curriculum.csv", &curriculum_csv)] {
        std::fs::write(out_dir.join(name), text)?;
        manifest.record_file(name, text.as_bytes());
    }
    manifest.finalize(t0.elapsed().as_secs_f64());
    std::fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// One-sided Welch test that `a`'s mean exceeds `b`'s; returns (t, p).
pub fn welch_one_sided_greater(a: &[f64], b: &[f64]) -> (f64, f64) {
    match cgsnn_core::numerics::welch_t(a, b) {
        Ok((t, p2)) => {
            let p = if t > 0.0 { p2 / 2.0 } else { 1.0 - p2 / 2.0 };
            (t, p)
        }
        // Degenerate (zero-variance) samples carry no evidence.
        Err(_) => (0.0, 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Model;

    fn tiny_cfg() -> RunConfig {
        let mut cfg = RunConfig::defaults_for(Model::Multi);
        cfg.n_per_task = 50;
        cfg.hidden1 = 20;
        cfg.hidden2 = 20;
        cfg
    }

    #[test]
    fn run_is_deterministic() {
        let cfg = tiny_cfg();
        let dir = std::env::temp_dir().join("cgsnn-run-det");
        let a = run(&cfg, &dir.join("a")).unwrap();
        let b = run(&cfg, &dir.join("b")).unwrap();
        assert_eq!(a.manifest_hash, b.manifest_hash);
        assert_eq!(a.files, b.files);
    }

    #[test]
    fn seed_changes_outputs() {
        let mut cfg = tiny_cfg();
        let dir = std::env::temp_dir().join("cgsnn-run-seed");
        let a = run(&cfg, &dir.join("a")).unwrap();
        cfg.seed = 1;
        let b = run(&cfg, &dir.join("b")).unwrap();
        assert_ne!(a.run_id, b.run_id);
        assert_ne!(a.files["accuracy.csv"], b.files["accuracy.csv"]);
    }

    #[test]
    fn checkpoint_roundtrips_through_analyze() {
        let cfg = tiny_cfg();
        let dir = std::env::temp_dir().join("cgsnn-run-ck");
        run(&cfg, &dir.join("train")).unwrap();
        let m = run_analyze(&dir.join("train/checkpoint.json"), &dir.join("analysis")).unwrap();
        // Weight-dependent artifacts must agree between train and analyze.
        let train_stats = std::fs::read_to_string(dir.join("train/choice_task1.csv")).unwrap();
        let ana_stats = std::fs::read_to_string(dir.join("analysis/choice_task1.csv")).unwrap();
        assert_eq!(train_stats, ana_stats);
        assert!(m.files.contains_key("selectivity.json"));
    }

    #[test]
    fn gen_data_row_count() {
        let cfg = tiny_cfg();
        let dir = std::env::temp_dir().join("cgsnn-gen");
        run_gen_data(&cfg, &dir).unwrap();
        let text = std::fs::read_to_string(dir.join("curriculum.csv")).unwrap();
        // comment + header + 2 tasks * n_per_task rows
        assert_eq!(text.lines().count(), 2 + 2 * cfg.n_per_task);
    }
}
