//! Isotropic Gaussian kernel density estimation with Scott's rule.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Scott's rule factor `n^(-1/(d+4))`.
pub fn scott_factor(n: usize, d: usize) -> Result<f64> {
    if n == 0 || d == 0 {
        return Err(Error::arg(format!(
            "Scott's rule needs n >= 1 and d >= 1, got n={n}, d={d}"
        )));
    }
    Ok((n as f64).powf(-1.0 / (d as f64 + 4.0)))
}

/// Isotropic Scott bandwidth: the Scott factor times the mean of the
/// per-axis sample standard deviations (n - 1 denominator).
pub fn scott_bandwidth(points: &[[f64; 2]]) -> Result<f64> {
    let factor = scott_factor(points.len(), 2)?;
    if points.len() < 2 {
        return Err(Error::arg(
            "Scott bandwidth needs at least two points to measure spread",
        ));
    }
    let n = points.len() as f64;
    let spread: f64 = (0..2)
        .map(|axis| {
            let mean = points.iter().map(|p| p[axis]).sum::<f64>() / n;
            let var = points.iter().map(|p| (p[axis] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            var.sqrt()
        })
        .sum::<f64>()
        / 2.0;
    Ok(factor * spread)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    support_points: Vec<[f64; 2]>,
    bandwidth: f64,
}

impl KdeModel {
    pub fn new(support_points: Vec<[f64; 2]>, bandwidth: f64) -> Result<Self> {
        if support_points.is_empty() {
            return Err(Error::arg("KDE needs at least one support point"));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::arg(format!(
                "KDE bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(KdeModel {
            support_points,
            bandwidth,
        })
    }

    pub fn support_points(&self) -> &[[f64; 2]] {
        &self.support_points
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn density(&self, x: [f64; 2]) -> f64 {
        let h2 = self.bandwidth * self.bandwidth;
        let norm = 1.0 / (2.0 * std::f64::consts::PI * h2 * self.support_points.len() as f64);
        self.support_points
            .iter()
            .map(|p| {
                let d2 = (x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2);
                (-0.5 * d2 / h2).exp()
            })
            .sum::<f64>()
            * norm
    }

    pub fn sample(&self, rng: &mut Rng) -> [f64; 2] {
        let p = self.support_points[rng.random_range(0..self.support_points.len())];
        let dx: f64 = StandardNormal.sample(rng);
        let dy: f64 = StandardNormal.sample(rng);
        [p[0] + self.bandwidth * dx, p[1] + self.bandwidth * dy]
    }
}

/// Fits a KDE; without an explicit bandwidth Scott's rule is used.
pub fn fit_kde(points: &[[f64; 2]], bandwidth: Option<f64>) -> Result<KdeModel> {
    if points.is_empty() {
        return Err(Error::arg("KDE needs at least one point"));
    }
    let h = match bandwidth {
        Some(h) => h,
        None => scott_bandwidth(points)?,
    };
    KdeModel::new(points.to_vec(), h)
}
