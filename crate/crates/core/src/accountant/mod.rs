//! Rényi-DP accounting for the subsampled Gaussian mechanism.
//!
//! Two per-step accountants are provided:
//!
//!  - [`Accountant::ClosedForm`]: the tCDP-style amplification bound for
//!    uniform subsampling without replacement, `ε(α) ≤ 7γ²α/σ²`, valid for
//!    `α ≤ (σ²/2)·ln(1/γ)` and `γ < 0.1`. Orders outside the window are
//!    dropped from the grid.
//!  - [`Accountant::NumericPoisson`]: the Rényi divergence of the Poisson
//!    subsampled Gaussian at integer orders, evaluated by adaptive quadrature
//!    in log space.
//!
//! Curves compose additively over steps and convert to (ε, δ)-DP through
//! `ε = min_α [ε(α) + ln(1/δ)/(α−1)]`.

mod quadrature;

use std::f64::consts::PI;

use crate::error::domain;
use crate::{Error, Result};

/// Largest integer order on the default grid.
pub const MAX_ORDER: u32 = 256;

/// Relative tolerance of [`calibrate_sigma`].
pub const CALIBRATION_RTOL: f64 = 1e-3;

/// Noise multiplier above which calibration gives up.
pub const SIGMA_CEILING: f64 = 1e6;

/// Absolute tolerance of the moment quadrature (on the max-normalized integrand).
pub const QUADRATURE_TOL: f64 = 1e-12;

/// Target (ε, δ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    pub eps: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(domain(format!("eps must be positive, got {eps}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(domain(format!("delta must lie in (0,1), got {delta}")));
        }
        Ok(Self { eps, delta })
    }
}

/// Mechanism schedule: dataset size N, batch size B, number of steps T.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccountantConfig {
    pub n_samples: u64,
    pub batch_size: u64,
    pub steps: u64,
}

impl AccountantConfig {
    /// Requires `0 < B < N` and `T ≥ 1`. The closed-form accountant further
    /// requires `B < 0.1·N`; see [`AccountantConfig::check_amplification`].
    pub fn new(n_samples: u64, batch_size: u64, steps: u64) -> Result<Self> {
        if n_samples == 0 || batch_size == 0 || steps == 0 {
            return Err(domain("n_samples, batch_size and steps must be positive"));
        }
        if batch_size >= n_samples {
            return Err(domain(format!(
                "batch_size {batch_size} must be below n_samples {n_samples}"
            )));
        }
        Ok(Self {
            n_samples,
            batch_size,
            steps,
        })
    }

    /// γ = B/N.
    pub fn sampling_ratio(&self) -> f64 {
        self.batch_size as f64 / self.n_samples as f64
    }

    /// `B < 0.1·N`, the precondition of the amplification bound.
    pub fn check_amplification(&self) -> Result<()> {
        if self.batch_size.saturating_mul(10) < self.n_samples {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "batch_size {} must be below 0.1 * n_samples {}",
                self.batch_size, self.n_samples
            )))
        }
    }
}

/// Rényi-DP values on an ascending grid of orders.
#[derive(Debug, Clone, PartialEq)]
pub struct RdpCurve {
    orders: Vec<f64>,
    values: Vec<f64>,
}

impl RdpCurve {
    pub fn new(orders: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if orders.len() != values.len() {
            return Err(domain("orders and values differ in length"));
        }
        if orders.iter().any(|&a| !(a > 1.0)) {
            return Err(domain("orders must exceed 1"));
        }
        if orders.windows(2).any(|w| w[0] >= w[1]) {
            return Err(domain("orders must be strictly ascending"));
        }
        if values.iter().any(|&v| !(v >= 0.0)) {
            return Err(domain("RDP values must be nonnegative"));
        }
        Ok(Self { orders, values })
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    pub fn len(&self) -> usize {
        self.orders.len()
    }
}

/// Integers 2..=256 plus {1.25, 1.5}, ascending.
pub fn default_orders() -> Vec<f64> {
    let mut orders = vec![1.25, 1.5];
    orders.extend((2..=MAX_ORDER).map(f64::from));
    orders
}

/// RDP of the Gaussian mechanism with unit sensitivity: `α/(2σ²)`.
pub fn gaussian_rdp(order: f64, sigma: f64) -> Result<f64> {
    if !(order > 1.0) {
        return Err(domain(format!("order must exceed 1, got {order}")));
    }
    if !(sigma > 0.0) {
        return Err(domain(format!("sigma must be positive, got {sigma}")));
    }
    Ok(order / (2.0 * sigma * sigma))
}

/// Largest order at which [`subsampled_rdp_bound`] applies: `(σ²/2)·ln(1/γ)`.
pub fn max_valid_order(sigma: f64, gamma: f64) -> f64 {
    0.5 * sigma * sigma * (1.0 / gamma).ln()
}

/// Amplification bound for uniform subsampling without replacement,
/// `7γ²α/σ²`.
pub fn subsampled_rdp_bound(order: f64, sigma: f64, gamma: f64) -> Result<f64> {
    if !(order > 1.0) {
        return Err(domain(format!("order must exceed 1, got {order}")));
    }
    if !(sigma > 0.0) {
        return Err(domain(format!("sigma must be positive, got {sigma}")));
    }
    if !(gamma > 0.0 && gamma < 0.1) {
        return Err(domain(format!("gamma must lie in (0, 0.1), got {gamma}")));
    }
    let max_order = max_valid_order(sigma, gamma);
    if order > max_order {
        return Err(Error::OrderOutOfRange { order, max_order });
    }
    Ok(7.0 * gamma * gamma * order / (sigma * sigma))
}

/// T-fold adaptive composition: values scale by `steps`.
pub fn compose(per_step: &RdpCurve, steps: u64) -> RdpCurve {
    let t = steps as f64;
    RdpCurve {
        orders: per_step.orders.clone(),
        values: per_step.values.iter().map(|v| v * t).collect(),
    }
}

/// Converts an RDP curve to (ε, δ)-DP. Returns `(ε, best order)`; ties go to
/// the smaller order.
pub fn rdp_to_dp(curve: &RdpCurve, delta: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(domain(format!("delta must lie in (0,1), got {delta}")));
    }
    if curve.is_empty() {
        return Err(Error::EmptyCurve);
    }
    let log_inv_delta = (1.0 / delta).ln();
    let mut best = (f64::INFINITY, curve.orders[0]);
    for (&a, &v) in curve.orders.iter().zip(&curve.values) {
        let eps = v + log_inv_delta / (a - 1.0);
        if eps < best.0 {
            best = (eps, a);
        }
    }
    Ok(best)
}

/// Which per-step RDP bound to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Accountant {
    /// Uniform subsampling without replacement, closed-form bound (requires B < 0.1N).
    #[default]
    ClosedForm,
    /// Poisson subsampling, numerical quadrature on integer orders.
    NumericPoisson,
}

impl std::str::FromStr for Accountant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed" | "closed-form" => Ok(Accountant::ClosedForm),
            "numeric" | "poisson" => Ok(Accountant::NumericPoisson),
            other => Err(Error::Config(format!("unknown accountant '{other}'"))),
        }
    }
}

/// Per-step curve of the chosen accountant. For the closed form, orders
/// outside the validity window are dropped (the curve may be empty).
pub fn per_step_curve(accountant: Accountant, sigma: f64, gamma: f64) -> Result<RdpCurve> {
    let mut orders = Vec::new();
    let mut values = Vec::new();
    match accountant {
        Accountant::ClosedForm => {
            for a in default_orders() {
                match subsampled_rdp_bound(a, sigma, gamma) {
                    Ok(v) => {
                        orders.push(a);
                        values.push(v);
                    }
                    Err(Error::OrderOutOfRange { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        Accountant::NumericPoisson => {
            for a in 2..=MAX_ORDER {
                orders.push(f64::from(a));
                values.push(numeric_poisson_rdp(a, sigma, gamma)?);
            }
        }
    }
    Ok(RdpCurve { orders, values })
}

/// ε with the Rényi order that attains it. `order` is `None` when no order is
/// admissible, in which case `eps` is `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Epsilon {
    pub eps: f64,
    pub order: Option<f64>,
}

/// ε spent after `config.steps` steps at noise multiplier `sigma`.
pub fn epsilon(
    accountant: Accountant,
    sigma: f64,
    config: &AccountantConfig,
    delta: f64,
) -> Result<Epsilon> {
    if accountant == Accountant::ClosedForm {
        config.check_amplification()?;
    }
    let per_step = per_step_curve(accountant, sigma, config.sampling_ratio())?;
    if per_step.is_empty() {
        return Ok(Epsilon {
            eps: f64::INFINITY,
            order: None,
        });
    }
    let (eps, order) = rdp_to_dp(&compose(&per_step, config.steps), delta)?;
    Ok(Epsilon {
        eps,
        order: Some(order),
    })
}

/// Closed-form ε; `+∞` when no order on the grid is admissible.
pub fn eps_at(sigma: f64, config: &AccountantConfig, delta: f64) -> Result<f64> {
    Ok(epsilon(Accountant::ClosedForm, sigma, config, delta)?.eps)
}

/// Outcome of a noise calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub sigma: f64,
    pub eps: f64,
    pub order: f64,
}

/// Smallest σ with `eps_at(σ) ≤ budget.eps` under the closed-form accountant.
pub fn calibrate_sigma(budget: &PrivacyBudget, config: &AccountantConfig) -> Result<f64> {
    Ok(calibrate(Accountant::ClosedForm, budget, config)?.sigma)
}

/// Geometric bracketing followed by bisection on σ, to relative tolerance
/// [`CALIBRATION_RTOL`]. ε is nonincreasing in σ for both accountants.
pub fn calibrate(
    accountant: Accountant,
    budget: &PrivacyBudget,
    config: &AccountantConfig,
) -> Result<Calibration> {
    let eval = |sigma: f64| epsilon(accountant, sigma, config, budget.delta);
    let ok = |e: &Epsilon| e.eps <= budget.eps;

    let mut hi = 1.0;
    let mut hi_eps = eval(hi)?;
    let mut lo;
    if ok(&hi_eps) {
        lo = hi;
        loop {
            lo *= 0.5;
            if lo < 1e-6 {
                break;
            }
            let e = eval(lo)?;
            if !ok(&e) {
                break;
            }
            hi = lo;
            hi_eps = e;
        }
    } else {
        loop {
            lo = hi;
            hi *= 2.0;
            if hi > SIGMA_CEILING {
                let top = eval(SIGMA_CEILING)?;
                if ok(&top) {
                    hi = SIGMA_CEILING;
                    hi_eps = top;
                    break;
                }
                return Err(Error::Infeasible {
                    eps: budget.eps,
                    delta: budget.delta,
                    sigma_max: SIGMA_CEILING,
                });
            }
            hi_eps = eval(hi)?;
            if ok(&hi_eps) {
                break;
            }
        }
    }
    while (hi - lo) > CALIBRATION_RTOL * 0.1 * hi {
        let mid = 0.5 * (lo + hi);
        let e = eval(mid)?;
        if ok(&e) {
            hi = mid;
            hi_eps = e;
        } else {
            lo = mid;
        }
    }
    Ok(Calibration {
        sigma: hi,
        eps: hi_eps.eps,
        order: hi_eps.order.unwrap_or(f64::NAN),
    })
}

/// `ln((1−γ) + γ·e^u)` without overflow.
fn log_mixture_ratio(gamma: f64, u: f64) -> f64 {
    if gamma >= 1.0 {
        return u;
    }
    let a = (1.0 - gamma).ln();
    let b = gamma.ln() + u;
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// RDP at integer order α of the Poisson-subsampled Gaussian: with
/// `μ₀ = N(0,σ²)` and `μ = (1−γ)N(0,σ²) + γN(1,σ²)`, returns
/// `ln E_{μ₀}[(μ/μ₀)^α] / (α−1)`.
///
/// The integrand is a mixture of Gaussian bumps centred at 0..α. It is
/// evaluated in log space, normalized by its largest value at the centres and
/// integrated over `[−40σ, α+40σ]`.
pub fn numeric_poisson_rdp(order: u32, sigma: f64, gamma: f64) -> Result<f64> {
    if order < 2 {
        return Err(domain(format!(
            "order must be an integer >= 2, got {order}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(domain(format!("sigma must be positive, got {sigma}")));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(domain(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let alpha = f64::from(order);
    let s2 = sigma * sigma;
    let log_norm = -(sigma * (2.0 * PI).sqrt()).ln();
    let log_integrand = |t: f64| {
        log_norm - t * t / (2.0 * s2)
            + alpha * log_mixture_ratio(gamma, (2.0 * t - 1.0) / (2.0 * s2))
    };

    let shift = (0..=order)
        .map(|k| log_integrand(f64::from(k)))
        .fold(f64::NEG_INFINITY, f64::max);

    let lo = -40.0 * sigma;
    let hi = alpha + 40.0 * sigma;
    let pieces = ((hi - lo) / sigma).ceil() as usize;
    // the log integrand cancels terms of size ~α²/(2σ²); its rounding noise
    // sets a floor on the attainable relative accuracy
    let magnitude = alpha * alpha / (2.0 * s2) + alpha * gamma.ln().abs();
    let tol = QUADRATURE_TOL.max(256.0 * f64::EPSILON * magnitude);
    let integral =
        quadrature::integrate(|t| (log_integrand(t) - shift).exp(), lo, hi, pieces, tol)?;
    if !(integral > 0.0) {
        return Err(Error::QuadratureNonConvergence { lo, hi });
    }
    Ok(((shift + integral.ln()) / (alpha - 1.0)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_rdp_examples() {
        assert_eq!(gaussian_rdp(2.0, 1.0).unwrap(), 1.0);
        assert_eq!(gaussian_rdp(4.0, 2.0).unwrap(), 0.5);
        assert!(gaussian_rdp(2.0, 1e6).unwrap() < 1e-9);
        assert!(gaussian_rdp(1.0, 1.0).is_err());
        assert!(gaussian_rdp(2.0, 0.0).is_err());
    }

    #[test]
    fn subsampled_bound_examples() {
        let v = subsampled_rdp_bound(2.0, 2.0, 0.02).unwrap();
        assert!((v - 0.0014).abs() < 1e-15);
        assert!((max_valid_order(2.0, 0.02) - 2.0 * 50f64.ln()).abs() < 1e-12);
        assert!(matches!(
            subsampled_rdp_bound(20.0, 2.0, 0.02),
            Err(Error::OrderOutOfRange { .. })
        ));
        assert!(matches!(
            subsampled_rdp_bound(2.0, 2.0, 0.1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn composition_examples() {
        let c = RdpCurve::new(vec![2.0, 3.0], vec![0.25, 0.5]).unwrap();
        assert_eq!(compose(&c, 1), c);
        assert_eq!(compose(&c, 1000).values(), &[250.0, 500.0]);
        assert_eq!(compose(&compose(&c, 3), 5), compose(&c, 15));
    }

    #[test]
    fn rdp_to_dp_examples() {
        let one = RdpCurve::new(vec![2.0], vec![1.0]).unwrap();
        let (eps, a) = rdp_to_dp(&one, (-1.0f64).exp()).unwrap();
        assert!((eps - 2.0).abs() < 1e-12);
        assert_eq!(a, 2.0);

        // order 2 is worse in both terms
        let two = RdpCurve::new(vec![2.0, 3.0], vec![5.0, 1.0]).unwrap();
        let (_, a) = rdp_to_dp(&two, 0.1).unwrap();
        assert_eq!(a, 3.0);

        let empty = RdpCurve::new(vec![], vec![]).unwrap();
        assert!(matches!(rdp_to_dp(&empty, 0.1), Err(Error::EmptyCurve)));
    }

    #[test]
    fn rdp_to_dp_ties_prefer_smaller_order() {
        let l = 2.0f64.ln();
        let curve = RdpCurve::new(vec![2.0, 3.0], vec![l / 2.0, l]).unwrap();
        // ε(2) = l/2 + l, ε(3) = l + l/2
        let (_, a) = rdp_to_dp(&curve, 0.5).unwrap();
        assert_eq!(a, 2.0);
    }

    #[test]
    fn config_validation() {
        assert!(AccountantConfig::new(100, 0, 1).is_err());
        assert!(AccountantConfig::new(100, 100, 1).is_err());
        let c = AccountantConfig::new(50_000, 1000, 5000).unwrap();
        assert_eq!(c.sampling_ratio(), 0.02);
        assert!(c.check_amplification().is_ok());
        let wide = AccountantConfig::new(100, 10, 5).unwrap();
        assert!(wide.check_amplification().is_err());
        assert!(eps_at(1.0, &wide, 1e-5).is_err());
        assert!(PrivacyBudget::new(0.0, 1e-5).is_err());
        assert!(PrivacyBudget::new(1.0, 1.0).is_err());
    }

    #[test]
    fn eps_at_limits() {
        let c = AccountantConfig::new(50_000, 1000, 5000).unwrap();
        // RDP term vanishes, leaving the conversion cost at the top order
        let floor = 1e5f64.ln() / 255.0;
        assert!((eps_at(1e4, &c, 1e-5).unwrap() - floor).abs() < 1e-3);
        // below the window for every grid order
        assert!(eps_at(0.1, &c, 1e-5).unwrap().is_infinite());
        let mut prev = f64::INFINITY;
        for k in 0..8 {
            let e = eps_at(0.5 * 2f64.powi(k), &c, 1e-5).unwrap();
            assert!(e < prev || (prev.is_infinite() && e.is_infinite()));
            prev = e;
        }
    }

    #[test]
    fn numeric_rdp_no_subsampling_is_gaussian() {
        let v = numeric_poisson_rdp(2, 1.0, 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "{v}");
        let v = numeric_poisson_rdp(7, 2.5, 1.0).unwrap();
        assert!((v - 7.0 / 12.5).abs() < 1e-6, "{v}");
    }

    #[test]
    fn numeric_rdp_vanishes_without_sampling() {
        let v = numeric_poisson_rdp(8, 1.2, 1e-9).unwrap();
        assert!((0.0..1e-9).contains(&v), "{v}");
    }

    #[test]
    fn numeric_rdp_domain() {
        assert!(numeric_poisson_rdp(1, 1.0, 0.1).is_err());
        assert!(numeric_poisson_rdp(2, 0.0, 0.1).is_err());
        assert!(numeric_poisson_rdp(2, 1.0, 0.0).is_err());
        assert!(numeric_poisson_rdp(2, 1.0, 1.5).is_err());
    }

    #[test]
    fn numeric_rdp_large_order_no_overflow() {
        let v = numeric_poisson_rdp(256, 0.5, 0.3).unwrap();
        assert!(v.is_finite() && v > 0.0);
        let g = gaussian_rdp(256.0, 0.5).unwrap();
        assert!(v <= g * (1.0 + 1e-9));
    }
}
