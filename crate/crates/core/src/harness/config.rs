//! Plain-text experiment configuration.
//!
//! One `section.key = value` pair per line; `#` starts a comment. Lists are
//! comma separated. Unknown keys are rejected.
//!
//! | key | values | default |
//! |-----|--------|---------|
//! | `objective.kind` | `cosh`, `quadratic`, `logistic` | `cosh` |
//! | `objective.dim` | integer ≥ 1 | 10 |
//! | `objective.condition` | real ≥ 1 (quadratic) | 10 |
//! | `objective.n_terms` | integer ≥ 2 (logistic) | 2000 |
//! | `objective.data_seed` | integer (logistic) | 0 |
//! | `noise.kind` | `two_point`, `spherical`, `none` | `two_point` |
//! | `noise.tau0` | real > 0 | 0.5 |
//! | `noise.tau1` | real in [0, 1) | 0 |
//! | `optimizer.kind` | `nsgd`, `sgd` | `sgd` |
//! | `optimizer.regularizer` | real > 0 (nsgd) | 1 |
//! | `optimizer.clip` | real > 0 (sgd) | 2 |
//! | `optimizer.sigma` | real ≥ 0 | 1 |
//! | `optimizer.eta` | real > 0 or `theory` | `theory` |
//! | `optimizer.batch_size` | integer ≥ 1 | 10 |
//! | `run.steps` | integer ≥ 1 | 1000 |
//! | `run.seed` | integer | 0 |
//! | `run.eval_every` | integer ≥ 1 | `max(1, steps/200)` |
//! | `run.init` | real, fills `x₀` | 1 |
//! | `schedule.kind` | `constant`, `step_decay` | `constant` |
//! | `schedule.milestones` | list of steps | empty |
//! | `schedule.factor` | real in (0, 1] | 0.1 |
//! | `sweep.lrs` | list of reals | `0.05,0.1,0.2,0.4,0.8,1.6` |
//! | `sweep.params` | list of reals | `0.001,0.01,0.1,1,10` (nsgd), `0.1,0.5,2.5,12.5,50` (sgd) |
//! | `sweep.seeds` | list of integers | `0,1,2` |
//! | `rate.steps` | list of integers | `1000,10000,100000` |
//! | `rate.seeds` | list of integers | `0,1,2` |

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use super::{
    ExperimentConfig, NoiseSpec, ObjectiveSpec, OptimizerKind, OptimizerSpec, Schedule, StepSize,
};
use crate::oracle::NoiseKind;
use crate::{Error, Result};

const KNOWN_KEYS: &[&str] = &[
    "objective.kind",
    "objective.dim",
    "objective.condition",
    "objective.n_terms",
    "objective.data_seed",
    "noise.kind",
    "noise.tau0",
    "noise.tau1",
    "optimizer.kind",
    "optimizer.regularizer",
    "optimizer.clip",
    "optimizer.sigma",
    "optimizer.eta",
    "optimizer.batch_size",
    "run.steps",
    "run.seed",
    "run.eval_every",
    "run.init",
    "schedule.kind",
    "schedule.milestones",
    "schedule.factor",
    "sweep.lrs",
    "sweep.params",
    "sweep.seeds",
    "rate.steps",
    "rate.seeds",
];

/// Parsed key-value pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected 'section.key = value'",
                    lineno + 1
                )));
            };
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Config(format!(
                    "line {}: unknown key '{key}'",
                    lineno + 1
                )));
            }
            if entries
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::Config(format!(
                    "line {}: duplicate key '{key}'",
                    lineno + 1
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key '{key}'")));
        }
        self.entries.insert(key.to_string(), value.into());
        Ok(())
    }

    fn value<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| Error::Config(format!("{key}: cannot parse '{v}': {e}"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        if v.is_empty() {
            return Ok(Some(Vec::new()));
        }
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|e| Error::Config(format!("{key}: cannot parse '{s}': {e}")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let dim = self.value("objective.dim", 10usize)?;
        let objective = match self.get("objective.kind").unwrap_or("cosh") {
            "cosh" => ObjectiveSpec::Cosh { dim },
            "quadratic" => ObjectiveSpec::Quadratic {
                dim,
                condition: self.value("objective.condition", 10.0)?,
            },
            "logistic" => ObjectiveSpec::Logistic {
                n_terms: self.value("objective.n_terms", 2000usize)?,
                dim,
                data_seed: self.value("objective.data_seed", 0u64)?,
            },
            other => {
                return Err(Error::Config(format!(
                    "objective.kind: unknown objective '{other}'"
                )))
            }
        };
        let kind = match self.get("noise.kind").unwrap_or("two_point") {
            "two_point" => NoiseKind::TwoPointRadial,
            "spherical" => NoiseKind::SphericalBounded,
            "none" => NoiseKind::None,
            other => {
                return Err(Error::Config(format!(
                    "noise.kind: unknown noise model '{other}'"
                )))
            }
        };
        let noise = NoiseSpec {
            kind,
            tau0: self.value("noise.tau0", 0.5)?,
            tau1: self.value("noise.tau1", 0.0)?,
        };
        let opt_kind = match self.get("optimizer.kind").unwrap_or("sgd") {
            "nsgd" => OptimizerKind::Nsgd,
            "sgd" => OptimizerKind::Sgd,
            other => {
                return Err(Error::Config(format!(
                    "optimizer.kind: unknown optimizer '{other}'"
                )))
            }
        };
        let param = match opt_kind {
            OptimizerKind::Nsgd => self.value("optimizer.regularizer", 1.0)?,
            OptimizerKind::Sgd => self.value("optimizer.clip", 2.0)?,
        };
        let step_size =
            match self.get("optimizer.eta").unwrap_or("theory") {
                "theory" => StepSize::Theory,
                v => StepSize::Fixed(v.parse().map_err(|e| {
                    Error::Config(format!("optimizer.eta: cannot parse '{v}': {e}"))
                })?),
            };
        let optimizer = OptimizerSpec {
            kind: opt_kind,
            param,
            sigma: self.value("optimizer.sigma", 1.0)?,
            step_size,
            batch_size: self.value("optimizer.batch_size", 10usize)?,
        };
        let schedule = match self.get("schedule.kind").unwrap_or("constant") {
            "constant" => Schedule::Constant,
            "step_decay" => Schedule::StepDecay {
                milestones: self.list("schedule.milestones")?.unwrap_or_default(),
                factor: self.value("schedule.factor", 0.1)?,
            },
            other => {
                return Err(Error::Config(format!(
                    "schedule.kind: unknown schedule '{other}'"
                )))
            }
        };
        let eval_every = match self.get("run.eval_every") {
            None => None,
            Some(_) => Some(self.value("run.eval_every", 1u64)?),
        };
        let cfg = ExperimentConfig {
            objective,
            noise,
            optimizer,
            steps: self.value("run.steps", 1000u64)?,
            seed: self.value("run.seed", 0u64)?,
            eval_every,
            init: self.value("run.init", 1.0)?,
            schedule,
            timing: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `(lrs, params, seeds)` for a sweep over `optimizer.kind`.
    pub fn sweep_grid(&self, kind: OptimizerKind) -> Result<(Vec<f64>, Vec<f64>, Vec<u64>)> {
        let lrs = self
            .list("sweep.lrs")?
            .unwrap_or_else(|| vec![0.05, 0.1, 0.2, 0.4, 0.8, 1.6]);
        let params = self.list("sweep.params")?.unwrap_or_else(|| match kind {
            OptimizerKind::Nsgd => vec![1e-3, 1e-2, 1e-1, 1.0, 10.0],
            OptimizerKind::Sgd => vec![0.1, 0.5, 2.5, 12.5, 50.0],
        });
        let seeds = self.list("sweep.seeds")?.unwrap_or_else(|| vec![0, 1, 2]);
        if lrs.is_empty() || params.is_empty() || seeds.is_empty() {
            return Err(Error::Config("sweep grids must be nonempty".into()));
        }
        Ok((lrs, params, seeds))
    }

    /// `(steps, seeds)` for a rate experiment.
    pub fn rate_grid(&self) -> Result<(Vec<u64>, Vec<u64>)> {
        let steps = self
            .list("rate.steps")?
            .unwrap_or_else(|| vec![1_000, 10_000, 100_000]);
        let seeds = self.list("rate.seeds")?.unwrap_or_else(|| vec![0, 1, 2]);
        if steps.is_empty() || seeds.is_empty() {
            return Err(Error::Config("rate grids must be nonempty".into()));
        }
        Ok((steps, seeds))
    }
}
