//! `cgsnn`: train, analyze, sweep, and reproduce context-gated spiking
//! network experiments from flat key = value configs.

use cgsnn_cli::config::{CliError, Model, RunConfig};
use cgsnn_cli::sweep::SweepAxis;
use cgsnn_cli::{reproduce, runner, sweep};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "cgsnn", about = "Context-gated spiking networks for two-task lifelong learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config sources, lowest to highest precedence: model-family defaults, the
/// optional config file, then individual flag overrides.
#[derive(Args)]
struct ConfigArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model family: single | multi.
    #[arg(long)]
    model: Option<String>,
    /// Training method (vanilla | stdp | multi-stdp | cg | owm-last2 | owm-all | xdg).
    #[arg(long)]
    method: Option<String>,
    /// Curriculum regime: blocked | interleaved.
    #[arg(long)]
    regime: Option<String>,
    /// Neuron kind: if | lif.
    #[arg(long)]
    neuron: Option<String>,
    /// Membrane time constant for lif.
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Grid side length (odd, >= 3).
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    blur: Option<String>,
    #[arg(long)]
    n_per_task: Option<String>,
    /// Gradient steps per minibatch.
    #[arg(long)]
    i_m: Option<String>,
    /// Local-plasticity passes per minibatch.
    #[arg(long)]
    i_n: Option<String>,
    #[arg(long)]
    learning_rate: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    eval_every: Option<String>,
    #[arg(long)]
    hidden1: Option<String>,
    #[arg(long)]
    hidden2: Option<String>,
    /// Context-filter sluggishness alpha in [0, 1).
    #[arg(long)]
    sluggish: Option<String>,
    #[arg(long)]
    eta_hebb: Option<String>,
    #[arg(long)]
    a_plus: Option<String>,
    #[arg(long)]
    lambda_local: Option<String>,
    #[arg(long)]
    alpha_owm: Option<String>,
    #[arg(long)]
    gate_fraction: Option<String>,
}

impl ConfigArgs {
    fn build(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => {
                let model = match self.model.as_deref() {
                    Some("single") => Model::Single,
                    _ => Model::Multi,
                };
                RunConfig::defaults_for(model)
            }
        };
        let overrides: [(&str, &Option<String>); 22] = [
            ("model", &self.model),
            ("method", &self.method),
            ("regime", &self.regime),
            ("neuron", &self.neuron),
            ("tau", &self.tau),
            ("seed", &self.seed),
            ("d", &self.d),
            ("blur", &self.blur),
            ("n_per_task", &self.n_per_task),
            ("i_m", &self.i_m),
            ("i_n", &self.i_n),
            ("learning_rate", &self.learning_rate),
            ("batch_size", &self.batch_size),
            ("eval_every", &self.eval_every),
            ("hidden1", &self.hidden1),
            ("hidden2", &self.hidden2),
            ("sluggish", &self.sluggish),
            ("eta_hebb", &self.eta_hebb),
            ("a_plus", &self.a_plus),
            ("lambda_local", &self.lambda_local),
            ("alpha_owm", &self.alpha_owm),
            ("gate_fraction", &self.gate_fraction),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.normalize();
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Emit the template grid and one curriculum as CSV.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Train one run and write every analysis artifact plus its manifest.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Recompute the analysis artifacts from a stored checkpoint.
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Cross one config axis with a seed list and summarize.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Axis: sluggish | schedule | method | seed.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values (schedule values as IMxIN).
        #[arg(long)]
        values: String,
        /// Comma-separated seed list crossed with the axis.
        #[arg(long, default_value = "0,1,2,3,4,5,6,7,8,9")]
        seeds: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads for independent runs.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Run a canned multi-seed pipeline: fig2 | fig4 | fig7 | selectivity | psychometric.
    Reproduce {
        figure: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::GenData { config, out } => {
            let m = runner::run_gen_data(&config.build()?, &out)?;
            println!("gen-data {} -> {}", m.run_id, out.display());
        }
        Command::Train { config, out } => {
            let m = runner::run(&config.build()?, &out)?;
            println!(
                "run {} done in {:.1}s, manifest {}",
                m.run_id, m.duration_secs, m.manifest_hash
            );
        }
        Command::Analyze { checkpoint, out } => {
            let m = runner::run_analyze(&checkpoint, &out)?;
            println!("analyze {} -> {}", m.run_id, out.display());
        }
        Command::Sweep { config, axis, values, seeds, out, workers } => {
            let axis = SweepAxis::parse(&axis)?;
            let values: Vec<String> =
                values.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect();
            let seeds: Vec<u64> = seeds
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.trim().parse().map_err(|_| CliError::Usage(format!("bad seed '{s}'")))
                })
                .collect::<Result<_, _>>()?;
            let manifests = sweep::sweep(&config.build()?, axis, &values, &seeds, &out, workers)?;
            println!("sweep: {} runs, summary at {}", manifests.len(), out.display());
        }
        Command::Reproduce { figure, out } => {
            let all_pass = reproduce::reproduce(&figure, &out)?;
            return Ok(if all_pass { 0 } else { 1 });
        }
    }
    Ok(0)
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            std::process::exit(e.exit_code());
        }
    }
}
