use rand::Rng;
use rand_distr::StandardNormal;

use super::VarianceParams;
use crate::error::domain;
use crate::linalg::{norm, scale};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// `+τ₀u` w.p. 1/3 and `−(τ₀/2)u` w.p. 2/3, `u = ∇f/‖∇f‖`.
    TwoPointRadial,
    /// Uniform direction, uniform radius in `[0, τ₀ + τ₁‖∇f‖]`, emitted in
    /// antithetic pairs.
    SphericalBounded,
    None,
}

/// Zero-mean gradient noise bounded almost surely by `τ₀ + τ₁‖∇f(x)‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
    variance: Option<VarianceParams>,
    radius_scale: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, variance: Option<VarianceParams>) -> Result<Self> {
        if kind != NoiseKind::None && variance.is_none() {
            return Err(domain("noise model needs variance parameters"));
        }
        let variance = if kind == NoiseKind::None {
            None
        } else {
            variance
        };
        Ok(Self {
            kind,
            variance,
            radius_scale: 1.0,
        })
    }

    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            variance: None,
            radius_scale: 1.0,
        }
    }

    pub fn two_point(tau0: f64) -> Result<Self> {
        Self::new(
            NoiseKind::TwoPointRadial,
            Some(VarianceParams::new(tau0, 0.0)?),
        )
    }

    /// Emits draws `scale` times larger than the declared bound allows. Only
    /// useful to exercise the violation path of the assumption check.
    pub fn with_radius_scale(mut self, scale: f64) -> Self {
        self.radius_scale = scale;
        self
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn variance(&self) -> Option<VarianceParams> {
        self.variance
    }

    pub fn radius_scale(&self) -> f64 {
        self.radius_scale
    }

    pub fn sampler(&self) -> NoiseSampler {
        NoiseSampler {
            model: *self,
            pending: None,
        }
    }
}

/// Stateful sampler; holds the antithetic partner of the last spherical draw.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    model: NoiseModel,
    pending: Option<Vec<f64>>,
}

impl NoiseSampler {
    pub fn model(&self) -> &NoiseModel {
        &self.model
    }

    /// Draws one deviation `e` at a point whose true gradient is `grad`.
    pub fn draw<R: Rng + ?Sized>(&mut self, grad: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let d = grad.len();
        let Some(var) = self.model.variance else {
            return Ok(vec![0.0; d]);
        };
        let g_norm = norm(grad);
        match self.model.kind {
            NoiseKind::None => Ok(vec![0.0; d]),
            NoiseKind::TwoPointRadial => {
                if g_norm == 0.0 {
                    return Err(Error::ZeroGradient);
                }
                let tau0 = var.tau0 * self.model.radius_scale;
                let coef = if rng.random_range(0..3u8) == 0 {
                    tau0
                } else {
                    -0.5 * tau0
                };
                Ok(scale(grad, coef / g_norm))
            }
            NoiseKind::SphericalBounded => {
                let bound = var.bound(g_norm) * self.model.radius_scale;
                if let Some(e) = self.pending.take() {
                    if norm(&e) <= bound {
                        return Ok(e);
                    }
                }
                let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let dn = norm(&dir);
                let radius = rng.random_range(0.0..=bound);
                let e = scale(&dir, radius / dn);
                self.pending = Some(scale(&e, -1.0));
                Ok(e)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn two_point_atoms_and_zero_gradient() {
        let m = NoiseModel::two_point(0.8).unwrap();
        let mut s = m.sampler();
        let mut rng = stream_rng(0, 0);
        let g = [3.0, 4.0];
        for _ in 0..100 {
            let e = s.draw(&g, &mut rng).unwrap();
            let n = norm(&e);
            assert!((n - 0.8).abs() < 1e-12 || (n - 0.4).abs() < 1e-12);
            // collinear with the gradient
            assert!((e[0] * g[1] - e[1] * g[0]).abs() < 1e-12);
        }
        assert!(matches!(
            s.draw(&[0.0, 0.0], &mut rng),
            Err(Error::ZeroGradient)
        ));
    }

    #[test]
    fn two_point_exact_mean_is_zero() {
        let tau0: f64 = 0.7;
        let mean = (1.0 / 3.0) * tau0 - (2.0 / 3.0) * (tau0 / 2.0);
        assert!(mean.abs() < 1e-15);
    }

    #[test]
    fn two_point_empirical_mean() {
        let m = NoiseModel::two_point(1.0).unwrap();
        let mut s = m.sampler();
        let mut rng = stream_rng(11, 0);
        let g = [1.0, 0.0, 0.0];
        let n = 1_000_000;
        let mut sum = [0.0; 3];
        for _ in 0..n {
            let e = s.draw(&g, &mut rng).unwrap();
            for j in 0..3 {
                sum[j] += e[j];
            }
        }
        // per-draw std along u: sqrt(1/3 + 2/3·1/4) = sqrt(1/2)
        let se = (0.5f64 / n as f64).sqrt();
        let mean_norm = norm(&sum) / n as f64;
        assert!(mean_norm < 5.0 * se, "{mean_norm} vs {se}");
    }

    #[test]
    fn spherical_pairs_cancel_and_stay_bounded() {
        let v = VarianceParams::new(0.5, 0.5).unwrap();
        let m = NoiseModel::new(NoiseKind::SphericalBounded, Some(v)).unwrap();
        let mut s = m.sampler();
        let mut rng = stream_rng(5, 0);
        let g = [1.0, -2.0, 0.5, 0.0];
        let bound = v.bound(norm(&g));
        for _ in 0..500 {
            let a = s.draw(&g, &mut rng).unwrap();
            let b = s.draw(&g, &mut rng).unwrap();
            assert!(norm(&a) <= bound && norm(&b) <= bound);
            for j in 0..4 {
                assert_eq!(a[j] + b[j], 0.0);
            }
        }
    }

    #[test]
    fn none_is_zero_and_needs_no_variance() {
        let m = NoiseModel::none();
        let mut rng = stream_rng(0, 0);
        assert_eq!(
            m.sampler().draw(&[0.0, 0.0], &mut rng).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(NoiseModel::new(NoiseKind::SphericalBounded, None).is_err());
    }
}
