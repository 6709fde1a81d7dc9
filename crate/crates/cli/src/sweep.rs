//! Sweep driver: crosses one config axis with a seed list, runs every cell,
//! and reduces the results into `sweep_summary.csv`.

use crate::config::{CliError, Method, RunConfig};
use crate::manifest::RunManifest;
use crate::runner;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Sluggish,
    Schedule,
    Method,
    Seed,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<SweepAxis, CliError> {
        Ok(match s {
            "sluggish" => SweepAxis::Sluggish,
            "schedule" => SweepAxis::Schedule,
            "method" => SweepAxis::Method,
            "seed" => SweepAxis::Seed,
            _ => return Err(CliError::Usage(format!("unknown sweep axis '{s}'"))),
        })
    }
}

/// One run's coordinates in the sweep grid.
#[derive(Debug, Clone)]
struct Cell {
    value: String,
    seed: u64,
    cfg: RunConfig,
}

fn apply_value(cfg: &mut RunConfig, axis: SweepAxis, value: &str) -> Result<(), CliError> {
    match axis {
        SweepAxis::Sluggish => cfg.set("sluggish", value)?,
        SweepAxis::Method => {
            cfg.method = Method::parse(value)?;
            cfg.normalize();
        }
        SweepAxis::Seed => cfg.set("seed", value)?,
        // Schedule values are written "IMxIN", e.g. "4x2".
        SweepAxis::Schedule => {
            let Some((m, n)) = value.split_once('x') else {
                return Err(CliError::Usage(format!("schedule value '{value}' is not IMxIN")));
            };
            cfg.set("i_m", m)?;
            cfg.set("i_n", n)?;
        }
    }
    Ok(())
}

/// Runs every (value, seed) cell and writes per-value mean/sd rows of the
/// final accuracies and selectivity proportion. Each cell lands in
/// `<out>/<axis-value>/seed-<s>/` with the same artifacts a lone `train`
/// invocation would emit there.
pub fn sweep(
    base: &RunConfig,
    axis: SweepAxis,
    values: &[String],
    seeds: &[u64],
    out_dir: &Path,
    workers: usize,
) -> Result<Vec<RunManifest>, CliError> {
    if values.is_empty() {
        return Err(CliError::Usage("sweep needs at least one value".into()));
    }
    let seeds: Vec<u64> = if axis == SweepAxis::Seed { vec![base.seed] } else { seeds.to_vec() };
    if seeds.is_empty() {
        return Err(CliError::Usage("sweep needs at least one seed".into()));
    }

    let mut cells = Vec::new();
    for value in values {
        for &seed in &seeds {
            let mut cfg = base.clone();
            cfg.seed = seed;
            apply_value(&mut cfg, axis, value)?;
            cfg.normalize();
            cfg.validate()?;
            cells.push(Cell { value: value.clone(), seed: cfg.seed, cfg });
        }
    }

    // Fixed-order reduction: workers pull cells from a shared cursor but each
    // result is stored at the cell's own index.
    let results: Mutex<Vec<Option<Result<RunManifest, CliError>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    let cursor = AtomicUsize::new(0);
    let workers = workers.max(1).min(cells.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let cell = &cells[i];
                let dir = out_dir.join(format!("{}", cell.value)).join(format!("seed-{}", cell.seed));
                let res = runner::run(&cell.cfg, &dir);
                results.lock().unwrap()[i] = Some(res);
            });
        }
    });
    let results = results.into_inner().unwrap();
    let mut manifests = Vec::with_capacity(cells.len());
    for r in results {
        manifests.push(r.expect("every cell executed")?);
    }

    // Per-value reduction from the freshly written stats files.
    let mut summary = String::from(
        "value,seeds,task1_mean,task1_sd,task2_mean,task2_sd,selective_mean,selective_sd\n",
    );
    for value in values {
        let mut t1 = Vec::new();
        let mut t2 = Vec::new();
        let mut sel = Vec::new();
        for (cell, _) in cells.iter().zip(&manifests).filter(|(c, _)| &c.value == value) {
            let dir = out_dir.join(&cell.value).join(format!("seed-{}", cell.seed));
            let stats: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(dir.join("stats.json"))?)?;
            t1.push(stats["final_task1"].as_f64().unwrap_or(0.0));
            t2.push(stats["final_task2"].as_f64().unwrap_or(0.0));
            sel.push(stats["proportion_selective"].as_f64().unwrap_or(0.0));
        }
        let (m1, s1) = mean_sd(&t1);
        let (m2, s2) = mean_sd(&t2);
        let (ms, ss) = mean_sd(&sel);
        summary += &format!("{value},{},{m1},{s1},{m2},{s2},{ms},{ss}\n", t1.len());
    }
    std::fs::write(out_dir.join("sweep_summary.csv"), summary)?;
    Ok(manifests)
}

pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var.sqrt())
}
