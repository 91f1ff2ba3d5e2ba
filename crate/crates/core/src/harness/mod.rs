//! End-to-end experiments: single runs, rate fits, the normalization floor
//! comparison and learning-rate × hyperparameter sweeps.

pub mod config;
pub mod output;
pub mod plot;

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::domain;
use crate::linalg::norm;
use crate::optimizer::{
    theorem_lr_nsgd, theorem_lr_sgd, NsgdConfig, OptimizerConfig, SgdConfig, TheoryParams,
};
use crate::oracle::{
    empirical_tau0, make_cosh_objective, make_logistic_objective, make_quadratic_objective,
    sample_grads, NoiseKind, NoiseModel, Objective, VarianceParams,
};
use crate::rng::stream_rng;
use crate::{Error, Result};

pub use config::ConfigFile;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveSpec {
    Cosh {
        dim: usize,
    },
    Quadratic {
        dim: usize,
        condition: f64,
    },
    Logistic {
        n_terms: usize,
        dim: usize,
        data_seed: u64,
    },
}

impl ObjectiveSpec {
    pub fn build(&self) -> Result<Arc<dyn Objective>> {
        Ok(match *self {
            Self::Cosh { dim } => Arc::new(make_cosh_objective(dim)?),
            Self::Quadratic { dim, condition } => {
                Arc::new(make_quadratic_objective(dim, condition)?)
            }
            Self::Logistic {
                n_terms,
                dim,
                data_seed,
            } => Arc::new(make_logistic_objective(n_terms, dim, data_seed)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub tau0: f64,
    pub tau1: f64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            tau0: 0.0,
            tau1: 0.0,
        }
    }

    pub fn two_point(tau0: f64) -> Self {
        Self {
            kind: NoiseKind::TwoPointRadial,
            tau0,
            tau1: 0.0,
        }
    }

    pub fn model(&self) -> Result<NoiseModel> {
        match self.kind {
            NoiseKind::None => Ok(NoiseModel::none()),
            kind => NoiseModel::new(kind, Some(VarianceParams::new(self.tau0, self.tau1)?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Nsgd,
    Sgd,
}

impl OptimizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Nsgd => "nsgd",
            Self::Sgd => "sgd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// Learning rate from the convergence theorem for the configured run length.
    Theory,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    /// Regularizer `r` (nsgd) or clipping threshold `c` (sgd).
    pub param: f64,
    pub sigma: f64,
    pub step_size: StepSize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Constant,
    /// Multiplies the learning rate by `factor` at each milestone step.
    StepDecay {
        milestones: Vec<u64>,
        factor: f64,
    },
}

impl Schedule {
    pub fn lr_at(&self, base: f64, step: u64) -> f64 {
        match self {
            Self::Constant => base,
            Self::StepDecay { milestones, factor } => {
                let passed = milestones.iter().filter(|&&m| m <= step).count();
                base * factor.powi(passed as i32)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSpec,
    pub noise: NoiseSpec,
    pub optimizer: OptimizerSpec,
    pub steps: u64,
    pub seed: u64,
    /// Full-gradient evaluation cadence; `None` means `max(1, steps/200)`.
    pub eval_every: Option<u64>,
    /// Every coordinate of `x₀`.
    pub init: f64,
    pub schedule: Schedule,
    /// Record elapsed wall time in trajectories. Off by default so output
    /// files are reproducible.
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("run.steps must be at least 1".into()));
        }
        if self.eval_every == Some(0) {
            return Err(Error::Config("run.eval_every must be at least 1".into()));
        }
        if let Schedule::StepDecay { factor, .. } = self.schedule {
            if !(factor > 0.0 && factor <= 1.0) {
                return Err(Error::Config(format!(
                    "schedule.factor must lie in (0, 1], got {factor}"
                )));
            }
        }
        if !self.init.is_finite() {
            return Err(Error::Config("run.init must be finite".into()));
        }
        self.noise.model()?;
        Ok(())
    }

    pub fn eval_every(&self) -> u64 {
        self.eval_every.unwrap_or((self.steps / 200).max(1))
    }

    pub fn initial_point(&self, dim: usize) -> Vec<f64> {
        vec![self.init; dim]
    }

    /// Theory inputs at `x0`. Finite sums use the empirical per-sample spread
    /// at `x0` as `τ₀` and `τ₁ = 0`; noise-free objectives use `τ₀ = 0`.
    pub fn theory_params(&self, objective: &dyn Objective, x0: &[f64]) -> Result<TheoryParams> {
        let variance = if objective.is_finite_sum() {
            VarianceParams::new(empirical_tau0(objective, &[x0.to_vec()])?, 0.0)?
        } else if self.noise.kind == NoiseKind::None {
            VarianceParams {
                tau0: 0.0,
                tau1: 0.0,
            }
        } else {
            VarianceParams::new(self.noise.tau0, self.noise.tau1)?
        };
        let d_f = (objective.value(x0) - objective.f_star_lower_bound()).max(0.0);
        TheoryParams::new(objective.smoothness(), variance, d_f, objective.dim())
    }

    /// Concrete optimizer, with the theory learning rate filled in if needed.
    pub fn resolve(&self, objective: &dyn Objective, x0: &[f64]) -> Result<OptimizerConfig> {
        let o = &self.optimizer;
        match (o.kind, o.step_size) {
            (OptimizerKind::Nsgd, StepSize::Fixed(eta)) => Ok(OptimizerConfig::Nsgd(
                NsgdConfig::new(o.param, o.sigma, eta, o.batch_size)?,
            )),
            (OptimizerKind::Sgd, StepSize::Fixed(eta)) => Ok(OptimizerConfig::Sgd(SgdConfig::new(
                o.param,
                o.sigma,
                eta,
                o.batch_size,
            )?)),
            (OptimizerKind::Nsgd, StepSize::Theory) => {
                let t = self.theory_params(objective, x0)?;
                Ok(OptimizerConfig::Nsgd(NsgdConfig::theory(
                    &t,
                    o.param,
                    o.sigma,
                    self.steps,
                    o.batch_size,
                )?))
            }
            (OptimizerKind::Sgd, StepSize::Theory) => {
                let t = self.theory_params(objective, x0)?;
                Ok(OptimizerConfig::Sgd(SgdConfig::theory(
                    &t,
                    o.param,
                    o.sigma,
                    self.steps,
                    o.batch_size,
                )?))
            }
        }
    }
}

/// One full-gradient evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    pub loss: f64,
    pub grad_norm: f64,
    /// Smallest true gradient norm seen up to and including `step`.
    pub min_grad_norm: f64,
    pub cum_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<EvalRecord>,
    pub final_x: Vec<f64>,
    /// Smallest true gradient norm over all iterates whose gradient was
    /// computed; NaN if the run diverged.
    pub min_grad_norm: f64,
    pub eta: f64,
    pub diverged: bool,
    pub wall_seconds: f64,
}

/// Runs the optimizer loop for `config`.
///
/// For objectives without a finite-sum structure the true gradient is
/// computed at every iterate anyway, so the running minimum covers every
/// step; for finite sums it covers the evaluation steps.
pub fn run(config: &ExperimentConfig) -> Result<Trajectory> {
    config.validate()?;
    let obj = config.objective.build()?;
    let obj = obj.as_ref();
    let mut x = config.initial_point(obj.dim());
    let opt = config.resolve(obj, &x)?;
    let mut sampler = config.noise.model()?.sampler();
    let mut rng = stream_rng(config.seed, 0);
    let every = config.eval_every();
    let finite = obj.is_finite_sum();
    let start = Instant::now();
    let mut records = Vec::new();
    let mut min = f64::INFINITY;
    let mut diverged = false;

    for k in 0..=config.steps {
        let eval = k % every == 0 || k == config.steps;
        let grad = if !finite || eval {
            obj.grad(&x)
        } else {
            Vec::new()
        };
        let diverging = x.iter().any(|v| !v.is_finite());
        if !grad.is_empty() {
            let gn = norm(&grad);
            if gn < min {
                min = gn;
            }
        }
        if eval || diverging {
            let grad_norm = if grad.is_empty() {
                norm(&obj.grad(&x))
            } else {
                norm(&grad)
            };
            records.push(EvalRecord {
                step: k,
                loss: obj.value(&x),
                grad_norm,
                min_grad_norm: if diverging { f64::NAN } else { min },
                cum_seconds: if config.timing {
                    start.elapsed().as_secs_f64()
                } else {
                    0.0
                },
            });
        }
        if diverging {
            diverged = true;
            break;
        }
        if k == config.steps {
            break;
        }
        let eta = config.schedule.lr_at(opt.eta(), k);
        let grads = sample_grads(obj, &mut sampler, &x, &grad, opt.batch_size(), &mut rng)?;
        x = opt.with_eta(eta).step(&x, &grads, &mut rng)?;
    }
    Ok(Trajectory {
        records,
        final_x: x,
        min_grad_norm: if diverged { f64::NAN } else { min },
        eta: opt.eta(),
        diverged,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Least-squares slope of `ln(metric)` against `ln(T)`.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<f64> {
    let mut ts: Vec<f64> = points.iter().map(|p| p.0).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    if ts.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 distinct T values, got {}",
            ts.len()
        )));
    }
    if points
        .iter()
        .any(|&(t, m)| !(t > 0.0 && m > 0.0 && t.is_finite() && m.is_finite()))
    {
        return Err(Error::Degenerate(
            "T values and metrics must be positive and finite".into(),
        ));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatePoint {
    pub steps: u64,
    /// Final minimum gradient norm per seed, in seed order.
    pub per_seed: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub points: Vec<RatePoint>,
    /// Slope of the seed-averaged metric.
    pub slope: f64,
}

/// Repeats `base` for every run length and seed, in parallel.
pub fn rate_experiment(
    base: &ExperimentConfig,
    steps: &[u64],
    seeds: &[u64],
) -> Result<RateReport> {
    let jobs: Vec<(u64, u64)> = steps
        .iter()
        .flat_map(|&t| seeds.iter().map(move |&s| (t, s)))
        .collect();
    let metrics = jobs
        .par_iter()
        .map(|&(t, s)| {
            let cfg = ExperimentConfig {
                steps: t,
                seed: s,
                eval_every: Some(t),
                ..base.clone()
            };
            run(&cfg).map(|tr| tr.min_grad_norm)
        })
        .collect::<Result<Vec<f64>>>()?;
    let points: Vec<RatePoint> = steps
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let per_seed = metrics[i * seeds.len()..(i + 1) * seeds.len()].to_vec();
            let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
            RatePoint {
                steps: t,
                per_seed,
                mean,
            }
        })
        .collect();
    let slope = rate_fit(
        &points
            .iter()
            .map(|p| (p.steps as f64, p.mean))
            .collect::<Vec<_>>(),
    )?;
    Ok(RateReport { points, slope })
}

/// Dimension of the cosh objective used by [`floor_experiment`].
pub const FLOOR_DIM: usize = 10;
/// Noise multiplier used by [`floor_experiment`].
pub const FLOOR_SIGMA: f64 = 1.0;
/// Batch size used by [`floor_experiment`].
pub const FLOOR_BATCH: usize = 10;

/// Floor run for one optimizer on cosh with two-point noise of size `tau0`
/// (no noise at `tau0 = 0`). The learning rate is the theorem formula for
/// the given `param`, evaluated even where the theorem's precondition on `r`
/// does not hold.
pub fn floor_run(kind: OptimizerKind, tau0: f64, param: f64, steps: u64, seed: u64) -> Result<f64> {
    if !(tau0 >= 0.0) {
        return Err(domain(format!("tau0 must be nonnegative, got {tau0}")));
    }
    let noise = if tau0 == 0.0 {
        NoiseSpec::none()
    } else {
        NoiseSpec::two_point(tau0)
    };
    let obj = make_cosh_objective(FLOOR_DIM)?;
    let theory = TheoryParams {
        smoothness: obj.smoothness(),
        variance: VarianceParams { tau0, tau1: 0.0 },
        d_f: 0.0,
        dim: FLOOR_DIM,
    };
    let eta = match kind {
        OptimizerKind::Nsgd => theorem_lr_nsgd(&theory, param, FLOOR_SIGMA, steps)?,
        OptimizerKind::Sgd => theorem_lr_sgd(&theory, param, FLOOR_SIGMA, steps)?,
    };
    let cfg = ExperimentConfig {
        objective: ObjectiveSpec::Cosh { dim: FLOOR_DIM },
        noise,
        optimizer: OptimizerSpec {
            kind,
            param,
            sigma: FLOOR_SIGMA,
            step_size: StepSize::Fixed(eta),
            batch_size: FLOOR_BATCH,
        },
        steps,
        seed,
        eval_every: Some(steps),
        init: 1.0,
        schedule: Schedule::Constant,
        timing: false,
    };
    Ok(run(&cfg)?.min_grad_norm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloorResult {
    pub nsgd_floor: f64,
    pub sgd_floor: f64,
}

impl FloorResult {
    pub fn ratio(&self) -> f64 {
        self.nsgd_floor / self.sgd_floor
    }
}

/// Final minimum gradient norms of DP-NSGD (regularizer `r_small`) and
/// DP-SGD (threshold `c`) under identical noise and seeds.
pub fn floor_experiment(
    tau0: f64,
    r_small: f64,
    c: f64,
    steps: u64,
    seed: u64,
) -> Result<FloorResult> {
    let (n, s) = rayon::join(
        || floor_run(OptimizerKind::Nsgd, tau0, r_small, steps, seed),
        || floor_run(OptimizerKind::Sgd, tau0, c, steps, seed),
    );
    Ok(FloorResult {
        nsgd_floor: n?,
        sgd_floor: s?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub lr: f64,
    pub param_value: f64,
    pub seed: u64,
    pub final_metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub kind: OptimizerKind,
    pub lrs: Vec<f64>,
    pub params: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Row-major over `(lr, param, seed)`.
    pub cells: Vec<SweepCell>,
    /// Seed-averaged metric, `mean[lr][param]`.
    pub mean: Vec<Vec<f64>>,
}

impl SweepResult {
    /// Row of the smallest mean metric.
    pub fn best_lr_index(&self) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, row) in self.mean.iter().enumerate() {
            for &v in row {
                if v < best.1 {
                    best = (i, v);
                }
            }
        }
        best.0
    }

    /// Population standard deviation of the mean metric across a row.
    pub fn row_std(&self, i: usize) -> f64 {
        let row = &self.mean[i];
        let m = row.iter().sum::<f64>() / row.len() as f64;
        (row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / row.len() as f64).sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.cells.iter().all(|c| c.final_metric.is_finite())
    }
}

/// Runs every `(lr, param, seed)` cell of the grid with a fixed learning
/// rate; the metric is the run's minimum gradient norm.
pub fn sweep(
    base: &ExperimentConfig,
    lrs: &[f64],
    params: &[f64],
    seeds: &[u64],
) -> Result<SweepResult> {
    if lrs.is_empty() || params.is_empty() || seeds.is_empty() {
        return Err(Error::Degenerate("sweep grids must be nonempty".into()));
    }
    let jobs: Vec<SweepCell> = lrs
        .iter()
        .flat_map(|&lr| {
            params.iter().flat_map(move |&p| {
                seeds.iter().map(move |&s| SweepCell {
                    lr,
                    param_value: p,
                    seed: s,
                    final_metric: f64::NAN,
                })
            })
        })
        .collect();
    let cells = jobs
        .into_par_iter()
        .map(|cell| {
            let mut cfg = base.clone();
            cfg.optimizer.param = cell.param_value;
            cfg.optimizer.step_size = StepSize::Fixed(cell.lr);
            cfg.seed = cell.seed;
            run(&cfg).map(|t| SweepCell {
                final_metric: t.min_grad_norm,
                ..cell
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let k = seeds.len();
    let mean = (0..lrs.len())
        .map(|i| {
            (0..params.len())
                .map(|j| {
                    let start = (i * params.len() + j) * k;
                    cells[start..start + k]
                        .iter()
                        .map(|c| c.final_metric)
                        .sum::<f64>()
                        / k as f64
                })
                .collect()
        })
        .collect();
    Ok(SweepResult {
        kind: base.optimizer.kind,
        lrs: lrs.to_vec(),
        params: params.to_vec(),
        seeds: seeds.to_vec(),
        cells,
        mean,
    })
}
