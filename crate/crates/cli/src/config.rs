//! Run configuration: a flat key = value file with typed fields, overridable
//! from the command line, plus the validation rules tying model families to
//! their methods.

use cgsnn_core::baselines::MultiMethod;
use cgsnn_core::multi::NeuronKind;
use cgsnn_core::taskgen::Regime;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Machine-readable failure categories; `category()` is printed on stderr and
/// mapped to the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("training diverged: {0}")]
    Diverged(#[from] cgsnn_core::model::TrainError),
    #[error("task generation failed: {0}")]
    TaskGen(#[from] cgsnn_core::taskgen::TaskError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::ConfigInvalid(_) => "config-invalid",
            CliError::Usage(_) => "usage-error",
            CliError::Diverged(_) => "diverged-loss",
            CliError::TaskGen(_) => "config-invalid",
            CliError::Io(_) => "io-error",
            CliError::Serde(_) => "io-error",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid(_) | CliError::TaskGen(_) => 2,
            CliError::Usage(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::Io(_) | CliError::Serde(_) => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Single,
    Multi,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Single => "single",
            Model::Multi => "multi",
        })
    }
}

/// Union of the method names across both model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Vanilla,
    Stdp,
    MultiStdp,
    Cg,
    OwmLast2,
    OwmAll,
    Xdg,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::Stdp => "stdp",
            Method::MultiStdp => "multi-stdp",
            Method::Cg => "cg",
            Method::OwmLast2 => "owm-last2",
            Method::OwmAll => "owm-all",
            Method::Xdg => "xdg",
        }
    }

    pub fn parse(s: &str) -> Result<Method, CliError> {
        Ok(match s {
            "vanilla" => Method::Vanilla,
            "stdp" => Method::Stdp,
            "multi-stdp" => Method::MultiStdp,
            "cg" => Method::Cg,
            "owm-last2" => Method::OwmLast2,
            "owm-all" => Method::OwmAll,
            "xdg" => Method::Xdg,
            _ => return Err(CliError::ConfigInvalid(format!("unknown method '{s}'"))),
        })
    }

    pub fn as_multi(&self) -> Option<MultiMethod> {
        Some(match self {
            Method::Vanilla => MultiMethod::Vanilla,
            Method::Cg => MultiMethod::Cg,
            Method::OwmLast2 => MultiMethod::OwmLast2,
            Method::OwmAll => MultiMethod::OwmAll,
            Method::Xdg => MultiMethod::Xdg,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Neuron {
    If,
    Lif,
}

/// Everything a run depends on. The snapshot serialized into manifests and
/// run artifacts is exactly this struct, so identical configs yield
/// identical run ids regardless of where the outputs land on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: Model,
    pub method: Method,
    pub regime: Regime,
    pub neuron: Neuron,
    pub tau: f64,
    pub seed: u64,
    pub d: usize,
    pub blur: f64,
    pub n_per_task: usize,
    pub i_m: usize,
    pub i_n: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub eval_every: usize,
    /// Layer sizes: (encoder, hidden) for the single-spike net, (h1, h2) for
    /// the multi-spike net.
    pub hidden1: usize,
    pub hidden2: usize,
    pub sluggish: f64,
    pub eta_hebb: f64,
    pub a_plus: f64,
    pub lambda_local: f64,
    pub alpha_owm: f64,
    pub gate_fraction: f64,
}

impl RunConfig {
    /// Calibrated defaults for each model family.
    pub fn defaults_for(model: Model) -> RunConfig {
        let single = model == Model::Single;
        RunConfig {
            model,
            method: if single { Method::Stdp } else { Method::Cg },
            regime: Regime::Blocked,
            neuron: Neuron::If,
            tau: 10.0,
            seed: 0,
            d: 5,
            blur: 0.8,
            n_per_task: if single { 2400 } else { 2000 },
            i_m: if single { 5 } else { 1 },
            i_n: 1,
            learning_rate: if single { 0.5 } else { 0.05 },
            batch_size: 16,
            eval_every: 25,
            hidden1: 100,
            hidden2: if single { 80 } else { 100 },
            sluggish: 0.0,
            eta_hebb: 0.084,
            a_plus: 0.1,
            lambda_local: 0.02,
            alpha_owm: 1e-3,
            gate_fraction: 0.8,
        }
    }

    /// Method-implied schedule normalization: arms without a local rule run
    /// with i_n = 0, and multi-stdp pins the repeated-STDP count.
    pub fn normalize(&mut self) {
        match self.method {
            Method::Vanilla | Method::Xdg | Method::OwmLast2 | Method::OwmAll => self.i_n = 0,
            Method::MultiStdp => self.i_n = self.i_n.max(3),
            Method::Stdp | Method::Cg => self.i_n = self.i_n.max(1),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let ok = match self.model {
            Model::Single => {
                matches!(self.method, Method::Vanilla | Method::Stdp | Method::MultiStdp)
            }
            Model::Multi => matches!(
                self.method,
                Method::Vanilla | Method::Cg | Method::OwmLast2 | Method::OwmAll | Method::Xdg
            ),
        };
        if !ok {
            return Err(CliError::ConfigInvalid(format!(
                "method '{}' is not defined for model '{}'",
                self.method.name(),
                self.model
            )));
        }
        if self.neuron == Neuron::Lif && self.tau <= 0.0 {
            return Err(CliError::ConfigInvalid("lif requires tau > 0".into()));
        }
        if self.model == Model::Single && self.neuron == Neuron::Lif {
            return Err(CliError::ConfigInvalid(
                "the single-spike model only supports the non-leaky 'if' neuron".into(),
            ));
        }
        if self.n_per_task == 0 || self.batch_size == 0 || self.eval_every == 0 || self.i_m == 0 {
            return Err(CliError::ConfigInvalid(
                "n_per_task, batch_size, eval_every, and i_m must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.sluggish) {
            return Err(CliError::ConfigInvalid("sluggish must lie in [0, 1)".into()));
        }
        if self.d < 3 || self.d % 2 == 0 {
            return Err(CliError::ConfigInvalid("d must be odd and >= 3".into()));
        }
        Ok(())
    }

    pub fn neuron_kind(&self) -> NeuronKind {
        match self.neuron {
            Neuron::If => NeuronKind::If,
            Neuron::Lif => NeuronKind::Lif { tau: self.tau },
        }
    }

    /// Parses a flat `key = value` file; `#` starts a comment. Unknown keys
    /// are rejected so typos cannot silently fall back to defaults.
    pub fn from_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)?;
        let mut model = Model::Multi;
        // The model key decides the defaults, so find it first.
        for line in text.lines() {
            if let Some(("model", v)) = split_kv(line)? {
                model = parse_model(v)?;
            }
        }
        let mut cfg = RunConfig::defaults_for(model);
        let mut saw_method = false;
        for line in text.lines() {
            let Some((key, value)) = split_kv(line)? else { continue };
            if key == "method" {
                saw_method = true;
            }
            cfg.set(key, value)?;
        }
        if !saw_method {
            cfg.method = RunConfig::defaults_for(cfg.model).method;
        }
        Ok(cfg)
    }

    /// Applies one `key = value` override; shared by the file parser and the
    /// command-line `--set` flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let bad = |k: &str, v: &str| CliError::ConfigInvalid(format!("bad value '{v}' for {k}"));
        match key {
            "model" => self.model = parse_model(value)?,
            "method" => self.method = Method::parse(value)?,
            "regime" => {
                self.regime = match value {
                    "blocked" => Regime::Blocked,
                    "interleaved" => Regime::Interleaved,
                    _ => return Err(bad(key, value)),
                }
            }
            "neuron" => {
                self.neuron = match value {
                    "if" => Neuron::If,
                    "lif" => Neuron::Lif,
                    _ => return Err(bad(key, value)),
                }
            }
            "tau" => self.tau = value.parse().map_err(|_| bad(key, value))?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key, value))?,
            "d" => self.d = value.parse().map_err(|_| bad(key, value))?,
            "blur" => self.blur = value.parse().map_err(|_| bad(key, value))?,
            "n_per_task" => self.n_per_task = value.parse().map_err(|_| bad(key, value))?,
            "i_m" => self.i_m = value.parse().map_err(|_| bad(key, value))?,
            "i_n" => self.i_n = value.parse().map_err(|_| bad(key, value))?,
            "learning_rate" => self.learning_rate = value.parse().map_err(|_| bad(key, value))?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad(key, value))?,
            "eval_every" => self.eval_every = value.parse().map_err(|_| bad(key, value))?,
            "hidden1" => self.hidden1 = value.parse().map_err(|_| bad(key, value))?,
            "hidden2" => self.hidden2 = value.parse().map_err(|_| bad(key, value))?,
            "sluggish" => self.sluggish = value.parse().map_err(|_| bad(key, value))?,
            "eta_hebb" => self.eta_hebb = value.parse().map_err(|_| bad(key, value))?,
            "a_plus" => self.a_plus = value.parse().map_err(|_| bad(key, value))?,
            "lambda_local" => self.lambda_local = value.parse().map_err(|_| bad(key, value))?,
            "alpha_owm" => self.alpha_owm = value.parse().map_err(|_| bad(key, value))?,
            "gate_fraction" => self.gate_fraction = value.parse().map_err(|_| bad(key, value))?,
            _ => return Err(CliError::ConfigInvalid(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Canonical JSON snapshot hashed into the run id.
    pub fn snapshot_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn parse_model(s: &str) -> Result<Model, CliError> {
    match s {
        "single" => Ok(Model::Single),
        "multi" => Ok(Model::Multi),
        _ => Err(CliError::ConfigInvalid(format!("unknown model '{s}'"))),
    }
}

fn split_kv(line: &str) -> Result<Option<(&str, &str)>, CliError> {
    let line = line.split('#').next().unwrap_or("").trim();
    if line.is_empty() {
        return Ok(None);
    }
    let Some((k, v)) = line.split_once('=') else {
        return Err(CliError::ConfigInvalid(format!("expected 'key = value', got '{line}'")));
    };
    Ok(Some((k.trim(), v.trim())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_differ_per_model() {
        let s = RunConfig::defaults_for(Model::Single);
        let m = RunConfig::defaults_for(Model::Multi);
        assert_eq!(s.n_per_task, 2400);
        assert_eq!(m.n_per_task, 2000);
        assert!(s.learning_rate > m.learning_rate);
    }

    #[test]
    fn model_method_mismatch_rejected() {
        let mut cfg = RunConfig::defaults_for(Model::Single);
        cfg.method = Method::Cg;
        assert!(matches!(cfg.validate(), Err(CliError::ConfigInvalid(_))));
        let mut cfg = RunConfig::defaults_for(Model::Multi);
        cfg.method = Method::Stdp;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn vanilla_normalizes_to_no_local_steps() {
        let mut cfg = RunConfig::defaults_for(Model::Multi);
        cfg.method = Method::Vanilla;
        cfg.i_n = 4;
        cfg.normalize();
        assert_eq!(cfg.i_n, 0);
    }

    #[test]
    fn file_roundtrip_with_overrides() {
        let dir = std::env::temp_dir().join("cgsnn-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.cfg");
        std::fs::write(
            &path,
            "# comment\nmodel = single\nmethod = multi-stdp\nseed = 7\nn_per_task = 400\n",
        )
        .unwrap();
        let cfg = RunConfig::from_file(&path).unwrap();
        assert_eq!(cfg.model, Model::Single);
        assert_eq!(cfg.method, Method::MultiStdp);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.n_per_task, 400);
        // Untouched keys keep the single-spike defaults.
        assert_eq!(cfg.i_m, 5);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = RunConfig::defaults_for(Model::Multi);
        assert!(cfg.set("learning_rte", "0.1").is_err());
    }
}
