//! Monte-Carlo checks of the one-step inequalities behind the convergence
//! analysis, the two-point toy model, and the bias of normalized and clipped
//! gradient directions.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::domain;
use crate::linalg::{axpy, dot, norm, sub};
use crate::mc::{self, McStats};
use crate::optimizer::{alpha0_nsgd, alpha0_sgd, clip_factor, normalize_factor, OptimizerConfig};
use crate::oracle::{sample_grads, NoiseModel, Objective, VarianceParams};
use crate::rng::{fork_seed, DpRng};
use crate::{Error, Result};

/// Allowance, in standard errors, for one-sided Monte-Carlo checks.
pub const Z_ALLOWANCE: f64 = 4.0;

/// Two-point toy model: `e = +τ₀u` w.p. 1/3 and `−(τ₀/2)u` w.p. 2/3 around a
/// gradient of norm `s = grad_norm`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyParams {
    pub tau0: f64,
    pub r: f64,
    pub eta: f64,
    pub grad_norm: f64,
}

impl ToyParams {
    pub fn new(tau0: f64, r: f64, eta: f64, grad_norm: f64) -> Result<Self> {
        let p = Self {
            tau0,
            r,
            eta,
            grad_norm,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau0 > 0.0 && self.r > 0.0 && self.eta > 0.0 && self.grad_norm > 0.0) {
            return Err(domain("toy parameters must be positive"));
        }
        if self.grad_norm >= 0.5 * self.tau0 {
            return Err(domain(format!(
                "closed form needs grad_norm < tau0/2 (grad_norm={}, tau0={})",
                self.grad_norm, self.tau0
            )));
        }
        Ok(())
    }
}

/// `η(s³ + (3r + τ₀/2)s² − τ₀²s/2) / (3(r+τ₀+s)(r+τ₀/2−s))`
pub fn toy_a_closed_form(p: &ToyParams) -> Result<f64> {
    p.validate()?;
    let ToyParams {
        tau0,
        r,
        eta,
        grad_norm: s,
    } = *p;
    let num = s.powi(3) + (3.0 * r + 0.5 * tau0) * s * s - 0.5 * tau0 * tau0 * s;
    let den = 3.0 * (r + tau0 + s) * (r + 0.5 * tau0 - s);
    Ok(eta * num / den)
}

/// `η·E[⟨∇f, g⟩/(r+‖g‖)]` summed over the two atoms of the toy model.
pub fn toy_a_exact(p: &ToyParams) -> Result<f64> {
    p.validate()?;
    let ToyParams {
        tau0,
        r,
        eta,
        grad_norm: s,
    } = *p;
    let up = s + tau0;
    let down = s - 0.5 * tau0;
    let term = |g: f64| s * g / (r + g.abs());
    Ok(eta * (term(up) / 3.0 + 2.0 * term(down) / 3.0))
}

/// Monte-Carlo estimate of the toy quantity with the gradient along a fixed
/// unit direction in ℝ². Returns `(estimate, stderr)`.
pub fn toy_a_monte_carlo<R: Rng + ?Sized>(
    p: &ToyParams,
    n_draws: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    p.validate()?;
    let grad = [0.6 * p.grad_norm, 0.8 * p.grad_norm];
    let model = NoiseModel::two_point(p.tau0)?;
    let stats = mc::try_run(n_draws, fork_seed(rng), |rng| {
        let e = model.sampler().draw(&grad, rng)?;
        let g = [grad[0] + e[0], grad[1] + e[1]];
        Ok::<_, Error>((p.eta * dot(&grad, &g) / (p.r + norm(&g)), true))
    })?;
    Ok((stats.mean, stats.stderr()))
}

/// Lower bound on the first-order term of a normalized step, divided by `η`.
pub fn normalized_first_order_bound(s: f64, v: &VarianceParams, r: f64, alpha: f64) -> f64 {
    let VarianceParams { tau0, tau1 } = *v;
    let q = 1.0 - tau1;
    if s >= tau0 / q {
        (tau0 / (r * q + 2.0 * tau0) - alpha / q) * s
    } else {
        (1.0 - alpha) * q / (r * q + 2.0 * tau0) * s * s
            - 4.0 * tau0.powi(3) / (r * (r + tau0) * q.powi(3))
    }
}

/// Lower bound on the first-order term of a clipped step, divided by `η`.
pub fn clipped_first_order_bound(s: f64, v: &VarianceParams, c: f64, alpha: f64) -> f64 {
    let VarianceParams { tau0, tau1 } = *v;
    let q = 1.0 - tau1;
    if s >= tau0 / q {
        (tau0 * c / (c * q + 2.0 * tau0) - alpha / q) * s
    } else {
        (1.0 - alpha) * s * s
    }
}

/// Outcome of a first-order lower-bound check at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderReport {
    /// `‖∇f(x)‖`
    pub grad_norm: f64,
    /// Estimate of `η·E[h⟨∇f, g⟩] − η·α₀·E[h]·‖∇f‖²`.
    pub mc_estimate: f64,
    pub mc_stderr: f64,
    pub bound: f64,
    pub n_draws: usize,
    /// True when every drawn per-sample factor was exactly 1.
    pub all_unscaled: bool,
}

impl FirstOrderReport {
    pub fn passes(&self) -> bool {
        self.mc_estimate >= self.bound - Z_ALLOWANCE * self.mc_stderr
    }
}

fn require_variance(model: &NoiseModel) -> Result<VarianceParams> {
    model
        .variance()
        .ok_or_else(|| Error::Precondition("noise model needs variance parameters".into()))
}

// One draw of the stochastic gradient at a point with true gradient `grad`.
fn draw_gradient(
    objective: &dyn Objective,
    model: &NoiseModel,
    x: &[f64],
    grad: &[f64],
    rng: &mut DpRng,
) -> Result<Vec<f64>> {
    let mut sampler = model.sampler();
    Ok(sample_grads(objective, &mut sampler, x, grad, 1, rng)?
        .pop()
        .expect("one gradient"))
}

#[allow(clippy::too_many_arguments)]
fn first_order_stats<R: Rng + ?Sized>(
    objective: &dyn Objective,
    model: &NoiseModel,
    x: &[f64],
    eta: f64,
    alpha: f64,
    factor: impl Fn(f64) -> f64 + Sync,
    n_draws: usize,
    rng: &mut R,
) -> Result<(f64, McStats)> {
    let grad = objective.grad(x);
    let s = norm(&grad);
    let stats = mc::try_run(n_draws, fork_seed(rng), |rng| {
        let g = draw_gradient(objective, model, x, &grad, rng)?;
        let h = factor(norm(&g));
        Ok::<_, Error>((eta * h * (dot(&grad, &g) - alpha * s * s), h == 1.0))
    })?;
    Ok((s, stats))
}

/// Checks `η·E[h⟨∇f, g⟩] − η·α₀·E[h]·‖∇f‖² ≥ η·A(‖∇f‖)` for normalization
/// with regularizer `r`.
#[allow(clippy::too_many_arguments)]
pub fn first_order_check_nsgd<R: Rng + ?Sized>(
    objective: &dyn Objective,
    noise_model: &NoiseModel,
    x: &[f64],
    r: f64,
    eta: f64,
    n_draws: usize,
    rng: &mut R,
) -> Result<FirstOrderReport> {
    let v = require_variance(noise_model)?;
    if r <= v.tau0 {
        return Err(Error::Precondition(format!(
            "need r > tau0 (r={r}, tau0={})",
            v.tau0
        )));
    }
    let alpha = alpha0_nsgd(&v, r);
    let (s, stats) = first_order_stats(
        objective,
        noise_model,
        x,
        eta,
        alpha,
        |n| normalize_factor(n, r),
        n_draws,
        rng,
    )?;
    Ok(FirstOrderReport {
        grad_norm: s,
        mc_estimate: stats.mean,
        mc_stderr: stats.stderr(),
        bound: eta * normalized_first_order_bound(s, &v, r, alpha),
        n_draws: stats.n,
        all_unscaled: stats.all,
    })
}

/// Clipping analogue of [`first_order_check_nsgd`] with bound `η·B(‖∇f‖)`.
#[allow(clippy::too_many_arguments)]
pub fn first_order_check_sgd<R: Rng + ?Sized>(
    objective: &dyn Objective,
    noise_model: &NoiseModel,
    x: &[f64],
    c: f64,
    eta: f64,
    n_draws: usize,
    rng: &mut R,
) -> Result<FirstOrderReport> {
    let v = require_variance(noise_model)?;
    let min_c = 2.0 * v.tau0 / (1.0 - v.tau1);
    if c < min_c {
        return Err(Error::Precondition(format!(
            "need c >= 2*tau0/(1-tau1) = {min_c}, got {c}"
        )));
    }
    let alpha = alpha0_sgd(&v, c);
    let (s, stats) = first_order_stats(
        objective,
        noise_model,
        x,
        eta,
        alpha,
        |n| clip_factor(n, c),
        n_draws,
        rng,
    )?;
    Ok(FirstOrderReport {
        grad_norm: s,
        mc_estimate: stats.mean,
        mc_stderr: stats.stderr(),
        bound: eta * clipped_first_order_bound(s, &v, c, alpha),
        n_draws: stats.n,
        all_unscaled: stats.all,
    })
}

/// Outcome of a one-step descent check: `slack = rhs − lhs`, where `lhs`
/// estimates `E[f(x⁺)] − f(x)` and `rhs` the first- plus second-order bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentReport {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// Standard error of `slack`.
    pub stderr: f64,
    pub n_draws: usize,
}

impl DescentReport {
    pub fn passes(&self) -> bool {
        self.slack >= -Z_ALLOWANCE * self.stderr
    }
}

/// Estimates both sides of the one-step descent inequality of a private
/// step at `x`.
///
/// Each draw takes a full step (batch plus Gaussian noise) for the left-hand
/// side and uses the first batch element as the independent realization `g`
/// on the right-hand side.
pub fn descent_inequality_check<R: Rng + ?Sized>(
    objective: &dyn Objective,
    noise_model: &NoiseModel,
    x: &[f64],
    config: &OptimizerConfig,
    n_draws: usize,
    rng: &mut R,
) -> Result<DescentReport> {
    let grad = objective.grad(x);
    let s = norm(&grad);
    let f0 = objective.value(x);
    let sm = objective.smoothness();
    let curvature = 0.5 * (sm.l0 + sm.l1 * s);
    let eta = config.eta();
    let noise_var = config.noise_std().powi(2) * x.len() as f64;
    let b = config.batch_size();

    let [lhs, rhs, slack] = mc::try_run_many(n_draws, fork_seed(rng), |rng| {
        let mut sampler = noise_model.sampler();
        let grads = sample_grads(objective, &mut sampler, x, &grad, b, rng)?;
        let g = &grads[0];
        let h = config.factor(norm(g));
        let rhs =
            -eta * h * dot(&grad, g) + curvature * eta * eta * (noise_var + h * h * dot(g, g));
        let next = config.step(x, &grads, rng)?;
        let lhs = objective.value(&next) - f0;
        Ok::<_, Error>([lhs, rhs, rhs - lhs])
    })?;
    Ok(DescentReport {
        lhs: lhs.mean,
        rhs: rhs.mean,
        slack: slack.mean,
        stderr: slack.stderr(),
        n_draws: slack.n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DirectionMode {
    Normalize(f64),
    Clip(f64),
}

impl DirectionMode {
    fn factor(&self, g_norm: f64) -> f64 {
        match *self {
            Self::Normalize(r) => normalize_factor(g_norm, r),
            Self::Clip(c) => clip_factor(g_norm, c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionReport {
    /// `(1/N) Σᵢ hᵢ∇ℓᵢ(x)`
    pub direction: Vec<f64>,
    /// `‖direction − ∇f(x)‖`
    pub bias_norm: f64,
    /// Cosine similarity between `direction` and `∇f(x)`.
    pub cosine: f64,
}

/// Exact expected processed direction over the full data set.
pub fn expected_direction(
    objective: &dyn Objective,
    x: &[f64],
    mode: DirectionMode,
) -> Result<DirectionReport> {
    if !objective.is_finite_sum() {
        return Err(Error::NotFiniteSum);
    }
    let n = objective.n_terms();
    let mut direction = vec![0.0; x.len()];
    for i in 0..n {
        let gi = objective.per_sample_grad(x, i).expect("finite sum");
        axpy(mode.factor(norm(&gi)), &gi, &mut direction);
    }
    direction.iter_mut().for_each(|v| *v /= n as f64);
    let grad = objective.grad(x);
    let bias_norm = norm(&sub(&direction, &grad));
    let denom = norm(&direction) * norm(&grad);
    let cosine = if denom > 0.0 {
        (dot(&direction, &grad) / denom).clamp(-1.0, 1.0)
    } else if norm(&direction) == norm(&grad) {
        1.0
    } else {
        0.0
    };
    Ok(DirectionReport {
        direction,
        bias_norm,
        cosine,
    })
}

/// One row of a check report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: String,
    pub params: String,
    pub estimate: f64,
    pub stderr: f64,
    pub bound: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn first_order(name: &str, params: String, rep: &FirstOrderReport) -> Self {
        Self {
            check: name.into(),
            params,
            estimate: rep.mc_estimate,
            stderr: rep.mc_stderr,
            bound: rep.bound,
            pass: rep.passes(),
        }
    }

    /// Descent rows report the slack against a bound of zero.
    pub fn descent(params: String, rep: &DescentReport) -> Self {
        Self {
            check: "descent".into(),
            params,
            estimate: rep.slack,
            stderr: rep.stderr,
            bound: 0.0,
            pass: rep.passes(),
        }
    }
}

/// Columns: check, params, estimate, stderr, bound, pass.
pub fn write_report(records: &[CheckRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<Vec<CheckRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Exact-vs-closed-form agreement on a 4×4×4 grid of `(τ₀, r, s/τ₀)` and
/// the sign of the closed form at `s = τ₀²/(10r)`.
pub fn toy_records() -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    for tau0 in [0.25, 0.5, 1.0, 2.0] {
        for r in [0.05, 0.5, 1.0, 4.0] {
            for frac in [0.01, 0.1, 0.3, 0.49] {
                let p = ToyParams::new(tau0, r, 1.0, frac * tau0)?;
                let exact = toy_a_exact(&p)?;
                let closed = toy_a_closed_form(&p)?;
                out.push(CheckRecord {
                    check: "toy_exact".into(),
                    params: format!("tau0={tau0};r={r};s={}", p.grad_norm),
                    estimate: exact,
                    stderr: 0.0,
                    bound: closed,
                    pass: (exact - closed).abs() <= 1e-12,
                });
            }
        }
    }
    for (tau0, r) in [(1.0, 1.0), (1.0, 2.0), (0.5, 1.0)] {
        let p = ToyParams::new(tau0, r, 1.0, tau0 * tau0 / (10.0 * r))?;
        let v = toy_a_closed_form(&p)?;
        out.push(CheckRecord {
            check: "toy_sign".into(),
            params: format!("tau0={tau0};r={r};s={}", p.grad_norm),
            estimate: v,
            stderr: 0.0,
            bound: 0.0,
            pass: v < 0.0,
        });
    }
    Ok(out)
}

/// First-order checks for both factors at each point.
#[allow(clippy::too_many_arguments)]
pub fn first_order_records<R: Rng + ?Sized>(
    objective: &dyn Objective,
    noise_model: &NoiseModel,
    points: &[Vec<f64>],
    r: f64,
    c: f64,
    eta: f64,
    n_draws: usize,
    rng: &mut R,
) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    for x in points {
        let n = first_order_check_nsgd(objective, noise_model, x, r, eta, n_draws, rng)?;
        out.push(CheckRecord::first_order(
            "first_order_nsgd",
            format!("s={};r={r}", n.grad_norm),
            &n,
        ));
        let s = first_order_check_sgd(objective, noise_model, x, c, eta, n_draws, rng)?;
        out.push(CheckRecord::first_order(
            "first_order_sgd",
            format!("s={};c={c}", s.grad_norm),
            &s,
        ));
    }
    Ok(out)
}

/// Descent checks at each point.
pub fn descent_records<R: Rng + ?Sized>(
    objective: &dyn Objective,
    noise_model: &NoiseModel,
    points: &[Vec<f64>],
    config: &OptimizerConfig,
    n_draws: usize,
    rng: &mut R,
) -> Result<Vec<CheckRecord>> {
    points
        .iter()
        .map(|x| {
            let rep = descent_inequality_check(objective, noise_model, x, config, n_draws, rng)?;
            Ok(CheckRecord::descent(
                format!("grad_norm={}", norm(&objective.grad(x))),
                &rep,
            ))
        })
        .collect()
}

/// Point on the first axis where the cosh objective has gradient norm `s`.
pub fn cosh_point_with_grad_norm(dim: usize, s: f64) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    x[0] = s.asinh();
    x
}

/// Random point in `[-radius, radius]^dim`.
pub fn random_point<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.random_range(-radius..=radius))
        .collect()
}

/// Random point at Gaussian scale `std` around the origin.
pub fn gaussian_point<R: Rng + ?Sized>(dim: usize, std: f64, rng: &mut R) -> Vec<f64> {
    (0..dim)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect()
}
