use super::{Objective, SmoothnessParams};
use crate::error::domain;
use crate::Result;

/// `f(x) = Σⱼ cosh(xⱼ) − d`, (1, 1)-generalized smooth with `inf f = 0`.
///
/// The Hessian is `diag(cosh xⱼ)` and `cosh t ≤ 1 + |sinh t|`, so its norm is
/// at most `1 + ‖∇f(x)‖`.
#[derive(Debug, Clone)]
pub struct CoshObjective {
    dim: usize,
}

impl CoshObjective {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(domain("dim must be at least 1"));
        }
        Ok(Self { dim })
    }
}

impl Objective for CoshObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v.cosh() - 1.0).sum()
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v.sinh()).collect()
    }

    fn smoothness(&self) -> SmoothnessParams {
        SmoothnessParams { l0: 1.0, l1: 1.0 }
    }

    fn f_star_lower_bound(&self) -> f64 {
        0.0
    }
}

/// `f(x) = ½ xᵀDx` with `D` log-spaced on `[1, κ]`.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    diag: Vec<f64>,
    condition_number: f64,
}

impl QuadraticObjective {
    pub fn new(dim: usize, condition_number: f64) -> Result<Self> {
        if dim == 0 {
            return Err(domain("dim must be at least 1"));
        }
        if !(condition_number >= 1.0 && condition_number.is_finite()) {
            return Err(domain(format!(
                "condition number must be >= 1, got {condition_number}"
            )));
        }
        let diag = if dim == 1 {
            vec![1.0]
        } else {
            (0..dim)
                .map(|j| condition_number.powf(j as f64 / (dim - 1) as f64))
                .collect()
        };
        Ok(Self {
            diag,
            condition_number,
        })
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }
}

impl Objective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x
            .iter()
            .zip(&self.diag)
            .map(|(v, d)| d * v * v)
            .sum::<f64>()
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.diag).map(|(v, d)| d * v).collect()
    }

    fn smoothness(&self) -> SmoothnessParams {
        SmoothnessParams {
            l0: self.condition_number,
            l1: 0.0,
        }
    }

    fn f_star_lower_bound(&self) -> f64 {
        0.0
    }
}
