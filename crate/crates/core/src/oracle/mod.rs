//! Gradient oracles: objectives with exact values and gradients, per-sample
//! gradients for finite sums, and almost-surely bounded noise models.

mod logistic;
mod noise;
mod objectives;

use std::sync::Arc;

use rand::Rng;

pub use logistic::{LogisticDataset, LogisticObjective, LOGISTIC_L2};
pub use noise::{NoiseKind, NoiseModel, NoiseSampler};
pub use objectives::{CoshObjective, QuadraticObjective};

use crate::error::domain;
use crate::linalg::{add, norm};
use crate::optimizer::sample_batch;
use crate::{Error, Result};

/// (L₀, L₁)-generalized smoothness constants:
/// `‖∇f(x) − ∇f(y)‖ ≤ (L₀ + L₁‖∇f(x)‖)·‖x − y‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessParams {
    pub l0: f64,
    pub l1: f64,
}

impl SmoothnessParams {
    pub fn new(l0: f64, l1: f64) -> Result<Self> {
        if !(l0 >= 0.0 && l1 >= 0.0) {
            return Err(domain(format!(
                "smoothness constants must be nonnegative, got ({l0}, {l1})"
            )));
        }
        Ok(Self { l0, l1 })
    }
}

/// Almost-sure deviation bound `‖g − ∇f(x)‖ ≤ τ₀ + τ₁‖∇f(x)‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceParams {
    pub tau0: f64,
    pub tau1: f64,
}

impl VarianceParams {
    pub fn new(tau0: f64, tau1: f64) -> Result<Self> {
        if !(tau0 > 0.0 && tau0.is_finite()) {
            return Err(domain(format!("tau0 must be positive, got {tau0}")));
        }
        if !(0.0..1.0).contains(&tau1) {
            return Err(domain(format!("tau1 must lie in [0, 1), got {tau1}")));
        }
        Ok(Self { tau0, tau1 })
    }

    /// `τ₀ + τ₁·grad_norm`
    pub fn bound(&self, grad_norm: f64) -> f64 {
        self.tau0 + self.tau1 * grad_norm
    }
}

/// A differentiable objective `f: ℝᵈ → ℝ`.
///
/// Finite-sum objectives (`n_terms() > 0`) also expose per-sample gradients,
/// and `grad` must equal their mean.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> Vec<f64>;
    fn smoothness(&self) -> SmoothnessParams;
    /// Lower bound on `inf f`, used for `D_f`.
    fn f_star_lower_bound(&self) -> f64;

    /// Number of summands; 0 when the objective is not a finite sum.
    fn n_terms(&self) -> usize {
        0
    }

    fn per_sample_grad(&self, _x: &[f64], _index: usize) -> Option<Vec<f64>> {
        None
    }

    fn is_finite_sum(&self) -> bool {
        self.n_terms() > 0
    }
}

pub fn make_cosh_objective(dim: usize) -> Result<CoshObjective> {
    CoshObjective::new(dim)
}

pub fn make_quadratic_objective(dim: usize, condition_number: f64) -> Result<QuadraticObjective> {
    QuadraticObjective::new(dim, condition_number)
}

pub fn make_logistic_objective(n_terms: usize, dim: usize, seed: u64) -> Result<LogisticObjective> {
    LogisticObjective::synthetic(n_terms, dim, seed)
}

/// Stochastic per-sample gradients at a point.
///
/// Finite-sum objectives sample a batch without replacement and return exact
/// per-sample gradients. Other objectives return `∇f(x) + e` with one noise
/// draw per sample.
pub struct GradientOracle {
    objective: Arc<dyn Objective>,
    noise: NoiseSampler,
}

impl GradientOracle {
    pub fn new(objective: Arc<dyn Objective>, noise: NoiseModel) -> Self {
        Self {
            objective,
            noise: noise.sampler(),
        }
    }

    pub fn objective(&self) -> &dyn Objective {
        self.objective.as_ref()
    }

    pub fn noise_model(&self) -> &NoiseModel {
        self.noise.model()
    }

    pub fn per_sample_grads<R: Rng + ?Sized>(
        &mut self,
        x: &[f64],
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>> {
        let g = if self.objective.is_finite_sum() {
            Vec::new()
        } else {
            self.objective.grad(x)
        };
        sample_grads(
            self.objective.as_ref(),
            &mut self.noise,
            x,
            &g,
            batch_size,
            rng,
        )
    }
}

/// Draws `batch_size` stochastic gradients at `x`; `grad` must be `∇f(x)`
/// unless the objective is a finite sum, in which case it is ignored.
pub fn sample_grads<R: Rng + ?Sized>(
    obj: &dyn Objective,
    noise: &mut NoiseSampler,
    x: &[f64],
    grad: &[f64],
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if obj.is_finite_sum() {
        let idx = sample_batch(obj.n_terms(), batch_size, rng)?;
        return Ok(idx
            .into_iter()
            .map(|i| {
                obj.per_sample_grad(x, i)
                    .expect("finite-sum objective provides per-sample gradients")
            })
            .collect());
    }
    let g_norm = norm(grad);
    let mut out = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let e = noise.draw(grad, rng)?;
        if let Some(v) = noise.model().variance() {
            debug_assert!(
                noise.model().radius_scale() > 1.0 || norm(&e) <= v.bound(g_norm) * (1.0 + 1e-12),
                "noise draw exceeds the a.s. bound"
            );
        }
        out.push(add(grad, &e));
    }
    Ok(out)
}

/// Result of [`check_assumption2`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBoundReport {
    /// Largest observed `‖e‖ / (τ₀ + τ₁‖∇f(x)‖)`.
    pub max_ratio: f64,
    pub n_draws: usize,
}

/// Draws `n_draws` noise vectors at each of `n_points` random points in
/// `[-2, 2]^d` and checks every one against the declared bound.
pub fn check_assumption2<R: Rng + ?Sized>(
    model: &NoiseModel,
    objective: &dyn Objective,
    n_points: usize,
    n_draws: usize,
    rng: &mut R,
) -> Result<NoiseBoundReport> {
    let Some(var) = model.variance() else {
        return Ok(NoiseBoundReport {
            max_ratio: 0.0,
            n_draws: 0,
        });
    };
    let mut sampler = model.sampler();
    let mut max_ratio: f64 = 0.0;
    let mut count = 0;
    for _ in 0..n_points {
        let x: Vec<f64> = (0..objective.dim())
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let g = objective.grad(&x);
        let bound = var.bound(norm(&g));
        for _ in 0..n_draws {
            let e = sampler.draw(&g, rng)?;
            let e_norm = norm(&e);
            let ratio = e_norm / bound;
            if ratio > 1.0 + 1e-12 {
                return Err(Error::NoiseBoundViolation {
                    point: x,
                    noise: e,
                    noise_norm: e_norm,
                    bound,
                    draw: count,
                });
            }
            max_ratio = max_ratio.max(ratio);
            count += 1;
        }
    }
    Ok(NoiseBoundReport {
        max_ratio,
        n_draws: count,
    })
}

/// Empirical τ₀ for a finite sum: `max_i ‖∇ℓᵢ(x) − ∇f(x)‖` over the given points.
pub fn empirical_tau0(objective: &dyn Objective, points: &[Vec<f64>]) -> Result<f64> {
    if !objective.is_finite_sum() {
        return Err(Error::NotFiniteSum);
    }
    let mut tau0: f64 = 0.0;
    for x in points {
        let g = objective.grad(x);
        for i in 0..objective.n_terms() {
            let gi = objective.per_sample_grad(x, i).expect("finite sum");
            tau0 = tau0.max(norm(&crate::linalg::sub(&gi, &g)));
        }
    }
    Ok(tau0)
}
