//! DP-NSGD and DP-SGD update steps, theory-mode learning rates and the
//! step-size feasibility conditions behind them.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::domain;
use crate::linalg::{axpy, norm};
use crate::oracle::{SmoothnessParams, VarianceParams};
use crate::{Error, Result};

/// Per-sample normalization factor `1/(r + ‖g‖)`.
pub fn normalize_factor(g_norm: f64, r: f64) -> f64 {
    debug_assert!(r > 0.0);
    1.0 / (r + g_norm)
}

/// Per-sample clipping factor `min{1, c/‖g‖}`, with value 1 at `‖g‖ = 0`.
pub fn clip_factor(g_norm: f64, c: f64) -> f64 {
    debug_assert!(c > 0.0);
    if g_norm <= c {
        1.0
    } else {
        c / g_norm
    }
}

/// Inputs shared by the theory-mode learning rate and feasibility formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    pub smoothness: SmoothnessParams,
    pub variance: VarianceParams,
    /// `f(x₀) − f*`, bounded above via the objective's `f_star_lower_bound`.
    pub d_f: f64,
    pub dim: usize,
}

impl TheoryParams {
    pub fn new(
        smoothness: SmoothnessParams,
        variance: VarianceParams,
        d_f: f64,
        dim: usize,
    ) -> Result<Self> {
        if !(d_f >= 0.0) {
            return Err(domain(format!("d_f must be nonnegative, got {d_f}")));
        }
        if dim == 0 {
            return Err(domain("dim must be at least 1"));
        }
        Ok(Self {
            smoothness,
            variance,
            d_f,
            dim,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsgdConfig {
    pub regularizer: f64,
    pub sigma: f64,
    pub eta: f64,
    pub batch_size: usize,
}

impl NsgdConfig {
    pub fn new(regularizer: f64, sigma: f64, eta: f64, batch_size: usize) -> Result<Self> {
        if !(regularizer > 0.0) {
            return Err(domain(format!(
                "regularizer must be positive, got {regularizer}"
            )));
        }
        check_common(sigma, eta, batch_size)?;
        Ok(Self {
            regularizer,
            sigma,
            eta,
            batch_size,
        })
    }

    /// Config with the theory learning rate for a `steps`-iteration run.
    pub fn theory(
        theory: &TheoryParams,
        regularizer: f64,
        sigma: f64,
        steps: u64,
        batch_size: usize,
    ) -> Result<Self> {
        if regularizer <= theory.variance.tau0 {
            return Err(Error::Precondition(format!(
                "theory mode needs r > tau0 (r={regularizer}, tau0={})",
                theory.variance.tau0
            )));
        }
        let eta = theorem_lr_nsgd(theory, regularizer, sigma, steps)?;
        Self::new(regularizer, sigma, eta, batch_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub clip_threshold: f64,
    pub sigma: f64,
    pub eta: f64,
    pub batch_size: usize,
}

impl SgdConfig {
    pub fn new(clip_threshold: f64, sigma: f64, eta: f64, batch_size: usize) -> Result<Self> {
        if !(clip_threshold > 0.0) {
            return Err(domain(format!(
                "clip threshold must be positive, got {clip_threshold}"
            )));
        }
        check_common(sigma, eta, batch_size)?;
        Ok(Self {
            clip_threshold,
            sigma,
            eta,
            batch_size,
        })
    }

    pub fn theory(
        theory: &TheoryParams,
        clip_threshold: f64,
        sigma: f64,
        steps: u64,
        batch_size: usize,
    ) -> Result<Self> {
        check_clip_precondition(&theory.variance, clip_threshold)?;
        let eta = theorem_lr_sgd(theory, clip_threshold, sigma, steps)?;
        Self::new(clip_threshold, sigma, eta, batch_size)
    }
}

fn check_common(sigma: f64, eta: f64, batch_size: usize) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(domain(format!("sigma must be nonnegative, got {sigma}")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(domain(format!("eta must be positive, got {eta}")));
    }
    if batch_size == 0 {
        return Err(domain("batch size must be at least 1"));
    }
    Ok(())
}

fn check_clip_precondition(v: &VarianceParams, c: f64) -> Result<()> {
    let min_c = 2.0 * v.tau0 / (1.0 - v.tau1);
    if c <= min_c {
        return Err(Error::Precondition(format!(
            "theory mode needs c > 2*tau0/(1-tau1) = {min_c}, got {c}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerConfig {
    Nsgd(NsgdConfig),
    Sgd(SgdConfig),
}

impl OptimizerConfig {
    pub fn eta(&self) -> f64 {
        match self {
            Self::Nsgd(c) => c.eta,
            Self::Sgd(c) => c.eta,
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        match &mut self {
            Self::Nsgd(c) => c.eta = eta,
            Self::Sgd(c) => c.eta = eta,
        }
        self
    }

    pub fn sigma(&self) -> f64 {
        match self {
            Self::Nsgd(c) => c.sigma,
            Self::Sgd(c) => c.sigma,
        }
    }

    pub fn batch_size(&self) -> usize {
        match self {
            Self::Nsgd(c) => c.batch_size,
            Self::Sgd(c) => c.batch_size,
        }
    }

    /// Per-sample factor applied to a gradient of norm `g_norm`.
    pub fn factor(&self, g_norm: f64) -> f64 {
        match self {
            Self::Nsgd(c) => normalize_factor(g_norm, c.regularizer),
            Self::Sgd(c) => clip_factor(g_norm, c.clip_threshold),
        }
    }

    /// Standard deviation of each coordinate of the injected noise.
    pub fn noise_std(&self) -> f64 {
        match self {
            Self::Nsgd(c) => c.sigma,
            Self::Sgd(c) => c.clip_threshold * c.sigma,
        }
    }

    pub fn step<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        grads: &[Vec<f64>],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        match self {
            Self::Nsgd(c) => dp_nsgd_step(x, grads, c, rng),
            Self::Sgd(c) => dp_sgd_step(x, grads, c, rng),
        }
    }
}

fn private_step<R: Rng + ?Sized>(
    x: &[f64],
    grads: &[Vec<f64>],
    batch_size: usize,
    eta: f64,
    noise_std: f64,
    factor: impl Fn(f64) -> f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if grads.len() != batch_size {
        return Err(Error::BatchSizeMismatch {
            expected: batch_size,
            got: grads.len(),
        });
    }
    let mut mean = vec![0.0; x.len()];
    for g in grads {
        axpy(factor(norm(g)), g, &mut mean);
    }
    let inv_b = 1.0 / batch_size as f64;
    Ok(x.iter()
        .zip(&mean)
        .map(|(xi, mi)| {
            let z: f64 = rng.sample(StandardNormal);
            xi - eta * (mi * inv_b + noise_std * z)
        })
        .collect())
}

/// `x − η((1/B) Σ gᵢ/(r + ‖gᵢ‖) + z)`, `z ~ N(0, σ²I)`.
pub fn dp_nsgd_step<R: Rng + ?Sized>(
    x: &[f64],
    grads: &[Vec<f64>],
    config: &NsgdConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let r = config.regularizer;
    private_step(
        x,
        grads,
        config.batch_size,
        config.eta,
        config.sigma,
        |n| normalize_factor(n, r),
        rng,
    )
}

/// `x − η((1/B) Σ min{1, c/‖gᵢ‖}gᵢ + z)`, `z ~ N(0, c²σ²I)`.
pub fn dp_sgd_step<R: Rng + ?Sized>(
    x: &[f64],
    grads: &[Vec<f64>],
    config: &SgdConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let c = config.clip_threshold;
    private_step(
        x,
        grads,
        config.batch_size,
        config.eta,
        c * config.sigma,
        |n| clip_factor(n, c),
        rng,
    )
}

fn lr_from_denominator(denom: f64) -> Result<f64> {
    if !(denom > 0.0 && denom.is_finite()) {
        return Err(domain(format!(
            "learning-rate denominator must be positive and finite, got {denom}"
        )));
    }
    Ok((2.0 / denom).sqrt())
}

/// `√(2 / ((L₁(r+τ₀) + L₀)·T·d·σ²))`
pub fn theorem_lr_nsgd(theory: &TheoryParams, r: f64, sigma: f64, steps: u64) -> Result<f64> {
    if !(sigma > 0.0) || steps == 0 {
        return Err(domain("need sigma > 0 and steps >= 1"));
    }
    lr_from_denominator(nsgd_lr_scale(theory, r, sigma) * steps as f64)
}

/// `√(2 / ((L₁(c+τ₀) + L₀)·T·d·c²·σ²))`
pub fn theorem_lr_sgd(theory: &TheoryParams, c: f64, sigma: f64, steps: u64) -> Result<f64> {
    if !(sigma > 0.0) || steps == 0 {
        return Err(domain("need sigma > 0 and steps >= 1"));
    }
    lr_from_denominator(sgd_lr_scale(theory, c, sigma) * steps as f64)
}

// Denominators of the learning rates with T factored out.
fn nsgd_lr_scale(t: &TheoryParams, r: f64, sigma: f64) -> f64 {
    let SmoothnessParams { l0, l1 } = t.smoothness;
    (l1 * (r + t.variance.tau0) + l0) * t.dim as f64 * sigma * sigma
}

fn sgd_lr_scale(t: &TheoryParams, c: f64, sigma: f64) -> f64 {
    let SmoothnessParams { l0, l1 } = t.smoothness;
    (l1 * (c + t.variance.tau0) + l0) * t.dim as f64 * c * c * sigma * sigma
}

/// `τ₀(1−τ₁) / (2r(1−τ₁) + 4τ₀)`
pub fn alpha0_nsgd(variance: &VarianceParams, r: f64) -> f64 {
    let VarianceParams { tau0, tau1 } = *variance;
    tau0 * (1.0 - tau1) / (2.0 * r * (1.0 - tau1) + 4.0 * tau0)
}

/// `τ₀(1−τ₁) / (c(1−τ₁) + 2τ₀)`
pub fn alpha0_sgd(variance: &VarianceParams, c: f64) -> f64 {
    let VarianceParams { tau0, tau1 } = *variance;
    tau0 * (1.0 - tau1) / (c * (1.0 - tau1) + 2.0 * tau0)
}

fn ratio_or_inf(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

/// Largest step size for which the second-order terms of a DP-NSGD step are
/// absorbed by `α·η·h·‖∇f‖²`:
/// `min((r−τ₀)α/(4L₀), (1−τ₁)α/(4L₁), α/(6L₁dσ²))`, with vacuous branches
/// (zero denominators) read as `+∞`.
pub fn eta_condition_nsgd(theory: &TheoryParams, r: f64, sigma: f64, alpha: f64) -> f64 {
    let SmoothnessParams { l0, l1 } = theory.smoothness;
    let VarianceParams { tau0, tau1 } = theory.variance;
    let d = theory.dim as f64;
    ratio_or_inf((r - tau0) * alpha, 4.0 * l0)
        .min(ratio_or_inf((1.0 - tau1) * alpha, 4.0 * l1))
        .min(ratio_or_inf(alpha, 6.0 * l1 * d * sigma * sigma))
}

/// DP-SGD analogue of [`eta_condition_nsgd`]:
/// `min{α/(6L₁dcσ²), α(1−τ₁)/(2L₀(1−τ₁)+4L₁τ₀), ατ₀(1−τ₁)/(4c(L₀(1−τ₁)+2L₁τ₀))}`.
pub fn eta_condition_sgd(theory: &TheoryParams, c: f64, sigma: f64, alpha: f64) -> f64 {
    let SmoothnessParams { l0, l1 } = theory.smoothness;
    let VarianceParams { tau0, tau1 } = theory.variance;
    let d = theory.dim as f64;
    ratio_or_inf(alpha, 6.0 * l1 * d * c * sigma * sigma)
        .min(ratio_or_inf(
            alpha * (1.0 - tau1),
            2.0 * l0 * (1.0 - tau1) + 4.0 * l1 * tau0,
        ))
        .min(ratio_or_inf(
            alpha * tau0 * (1.0 - tau1),
            4.0 * c * (l0 * (1.0 - tau1) + 2.0 * l1 * tau0),
        ))
}

/// Smallest `T ≥ 1` with `√(2/(scale·T)) ≤ bound`.
fn invert_lr(scale: f64, bound: f64) -> Result<u64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(domain(format!(
            "learning-rate scale must be positive and finite, got {scale}"
        )));
    }
    if bound.is_infinite() {
        return Ok(1);
    }
    if !(bound > 0.0) {
        return Err(domain(format!(
            "step-size bound must be positive, got {bound}"
        )));
    }
    let t = (2.0 / (scale * bound * bound)).ceil().max(1.0);
    if t >= u64::MAX as f64 {
        return Err(domain("minimum iteration count overflows"));
    }
    let mut t = t as u64;
    let eta = |t: u64| (2.0 / (scale * t as f64)).sqrt();
    while eta(t) > bound {
        t += 1;
    }
    while t > 1 && eta(t - 1) <= bound {
        t -= 1;
    }
    Ok(t)
}

/// Smallest `T` for which the theory learning rate satisfies
/// [`eta_condition_nsgd`] at `α = α₀`.
pub fn min_iterations_nsgd(theory: &TheoryParams, r: f64, sigma: f64) -> Result<u64> {
    if r <= theory.variance.tau0 {
        return Err(domain(format!(
            "need r > tau0 (r={r}, tau0={})",
            theory.variance.tau0
        )));
    }
    if theory.smoothness.l1 == 0.0 {
        return Err(domain("minimum iteration count degenerates at L1 = 0"));
    }
    if !(sigma > 0.0) {
        return Err(domain("need sigma > 0"));
    }
    let alpha = alpha0_nsgd(&theory.variance, r);
    invert_lr(
        nsgd_lr_scale(theory, r, sigma),
        eta_condition_nsgd(theory, r, sigma, alpha),
    )
}

/// Smallest `T` for which the theory learning rate satisfies
/// [`eta_condition_sgd`] at `α = α₀`.
pub fn min_iterations_sgd(theory: &TheoryParams, c: f64, sigma: f64) -> Result<u64> {
    check_clip_precondition(&theory.variance, c).map_err(|e| domain(e.to_string()))?;
    if !(sigma > 0.0) {
        return Err(domain("need sigma > 0"));
    }
    let alpha = alpha0_sgd(&theory.variance, c);
    invert_lr(
        sgd_lr_scale(theory, c, sigma),
        eta_condition_sgd(theory, c, sigma, alpha),
    )
}

/// The three closed-form iteration thresholds
/// `32L₀²/((r−τ₀)²α₀²L₁(r+τ₀)dσ²)`, `32L₁/(τ₁²α₀²(r+τ₀)dσ²)`,
/// `72L₁d/(α₀²(r+τ₀))`. The second is `None` when `τ₁ = 0`.
///
/// These assume a learning rate without the `L₀` term and a `(1−τ₁)²`
/// middle branch, so they do not coincide with [`min_iterations_nsgd`].
pub fn nsgd_iteration_thresholds(
    theory: &TheoryParams,
    r: f64,
    sigma: f64,
) -> Result<[Option<f64>; 3]> {
    let SmoothnessParams { l0, l1 } = theory.smoothness;
    let VarianceParams { tau0, tau1 } = theory.variance;
    if r <= tau0 || l1 == 0.0 || !(sigma > 0.0) {
        return Err(domain("thresholds need r > tau0, L1 > 0 and sigma > 0"));
    }
    let a2 = alpha0_nsgd(&theory.variance, r).powi(2);
    let d = theory.dim as f64;
    let s2 = sigma * sigma;
    let first = 32.0 * l0 * l0 / ((r - tau0).powi(2) * a2 * l1 * (r + tau0) * d * s2);
    let second = (tau1 > 0.0).then(|| 32.0 * l1 / (tau1 * tau1 * a2 * (r + tau0) * d * s2));
    let third = 72.0 * l1 * d / (a2 * (r + tau0));
    Ok([Some(first), second, Some(third)])
}

/// Uniformly random `b`-subset of `0..n` by partial Fisher–Yates shuffle.
pub fn sample_batch<R: Rng + ?Sized>(n: usize, b: usize, rng: &mut R) -> Result<Vec<usize>> {
    if b > n {
        return Err(Error::BatchTooLarge {
            batch: b,
            population: n,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let (chosen, _) = idx.partial_shuffle(rng, b);
    Ok(chosen.to_vec())
}
