use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Objective, SmoothnessParams};
use crate::error::domain;
use crate::linalg::{axpy, dot};
use crate::rng::stream_rng;
use crate::{Error, Result};

/// Ridge weight of the per-sample loss.
pub const LOGISTIC_L2: f64 = 1e-4;

const LABEL_NOISE: f64 = 0.05;

/// Binary-classification data: two unit-variance Gaussian blobs at `±m`,
/// `‖m‖ = 1`, with 5% of labels flipped.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl LogisticDataset {
    pub fn synthetic(n: usize, dim: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(domain("need at least two samples"));
        }
        if dim == 0 {
            return Err(domain("dim must be at least 1"));
        }
        let mut rng = stream_rng(seed, 0);
        let m = 1.0 / (dim as f64).sqrt();
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let y: u8 = rng.random_range(0..2);
            let sign = if y == 1 { 1.0 } else { -1.0 };
            let a: Vec<f64> = (0..dim)
                .map(|_| sign * m + rng.sample::<f64, _>(StandardNormal))
                .collect();
            let flip = rng.random::<f64>() < LABEL_NOISE;
            features.push(a);
            labels.push(if flip { 1 - y } else { y });
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// One row per sample: `f0, …, f{d-1}, label`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (a, y) in self.features.iter().zip(&self.labels) {
            let mut row: Vec<String> = a.iter().map(|v| v.to_string()).collect();
            row.push(y.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let k = rec.len();
            if k < 2 {
                return Err(Error::Config(
                    "dataset rows need features and a label".into(),
                ));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad feature '{s}': {e}")))
            };
            let a = rec
                .iter()
                .take(k - 1)
                .map(parse)
                .collect::<Result<Vec<_>>>()?;
            let y = rec[k - 1]
                .parse::<u8>()
                .map_err(|e| Error::Config(format!("bad label: {e}")))?;
            features.push(a);
            labels.push(y);
        }
        Ok(Self { features, labels })
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `f(w) = (1/N) Σᵢ [log(1 + exp(−ỹᵢ wᵀaᵢ)) + λ‖w‖²/2]`, `ỹ ∈ {−1, +1}`.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    data: LogisticDataset,
    smoothness: SmoothnessParams,
}

impl LogisticObjective {
    pub fn new(data: LogisticDataset) -> Result<Self> {
        if data.len() < 2 {
            return Err(domain("need at least two samples"));
        }
        // per-sample Hessian ≼ (‖aᵢ‖²/4 + λ) I
        let max_sq = data.features.iter().map(|a| dot(a, a)).fold(0.0, f64::max);
        let smoothness = SmoothnessParams {
            l0: 0.25 * max_sq + LOGISTIC_L2,
            l1: 0.0,
        };
        Ok(Self { data, smoothness })
    }

    pub fn synthetic(n: usize, dim: usize, seed: u64) -> Result<Self> {
        Self::new(LogisticDataset::synthetic(n, dim, seed)?)
    }

    pub fn data(&self) -> &LogisticDataset {
        &self.data
    }

    fn signed_label(&self, i: usize) -> f64 {
        if self.data.labels[i] == 1 {
            1.0
        } else {
            -1.0
        }
    }

    fn sample_loss(&self, w: &[f64], i: usize) -> f64 {
        let margin = self.signed_label(i) * dot(w, &self.data.features[i]);
        softplus(-margin) + 0.5 * LOGISTIC_L2 * dot(w, w)
    }

    fn sample_grad(&self, w: &[f64], i: usize) -> Vec<f64> {
        let y = self.signed_label(i);
        let a = &self.data.features[i];
        let coef = -y * sigmoid(-y * dot(w, a));
        let mut g: Vec<f64> = w.iter().map(|v| LOGISTIC_L2 * v).collect();
        axpy(coef, a, &mut g);
        g
    }
}

impl Objective for LogisticObjective {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        (0..self.data.len())
            .map(|i| self.sample_loss(x, i))
            .sum::<f64>()
            / self.data.len() as f64
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let n = self.data.len();
        let mut acc = vec![0.0; x.len()];
        for i in 0..n {
            axpy(1.0, &self.sample_grad(x, i), &mut acc);
        }
        acc.iter_mut().for_each(|v| *v /= n as f64);
        acc
    }

    fn smoothness(&self) -> SmoothnessParams {
        self.smoothness
    }

    fn f_star_lower_bound(&self) -> f64 {
        0.0
    }

    fn n_terms(&self) -> usize {
        self.data.len()
    }

    fn per_sample_grad(&self, x: &[f64], index: usize) -> Option<Vec<f64>> {
        (index < self.data.len()).then(|| self.sample_grad(x, index))
    }
}
