use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Ridge added to both covariances when either sample is smaller than the
/// feature dimension.
pub const SHRINKAGE: f64 = 1e-6;

/// Gaussian summary `(mu, sigma)` of a feature sample.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub n: usize,
}

impl FeatureStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Sample mean and unbiased sample covariance.
pub fn fit_stats(features: &[Vec<f64>]) -> Result<FeatureStats> {
    if features.len() < 2 {
        return Err(Error::arg(format!(
            "feature statistics need at least 2 vectors, got {}",
            features.len()
        )));
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::arg("feature vectors have different lengths"));
    }
    let n = features.len();
    let mut mu = DVector::<f64>::zeros(d);
    for f in features {
        mu += DVector::from_column_slice(f);
    }
    mu /= n as f64;
    let mut centered = DMatrix::<f64>::zeros(d, n);
    for (j, f) in features.iter().enumerate() {
        for i in 0..d {
            centered[(i, j)] = f[i] - mu[i];
        }
    }
    let mut sigma = &centered * centered.transpose() / (n as f64 - 1.0);
    sigma = (&sigma + sigma.transpose()) * 0.5;
    Ok(FeatureStats { mu, sigma, n })
}

/// Square root of a symmetric PSD matrix; negative eigenvalues are clamped.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&roots) * v.transpose();
    (&out + out.transpose()) * 0.5
}

/// Fréchet distance between Gaussians,
/// `|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))`.
///
/// The cross term is evaluated as `tr((S_a^(1/2) S_b S_a^(1/2))^(1/2))`, which
/// only needs symmetric eigendecompositions.
pub fn frechet_distance(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    if a.dim() != b.dim()
        || a.sigma.shape() != (a.dim(), a.dim())
        || b.sigma.shape() != (b.dim(), b.dim())
    {
        return Err(Error::arg(format!(
            "feature dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let finite = |s: &FeatureStats| s.mu.iter().chain(s.sigma.iter()).all(|v| v.is_finite());
    if !finite(a) || !finite(b) {
        return Err(Error::arg("feature statistics contain non-finite values"));
    }
    let d = a.dim();
    let (mut sa, mut sb) = (a.sigma.clone(), b.sigma.clone());
    if a.n < d || b.n < d {
        for i in 0..d {
            sa[(i, i)] += SHRINKAGE;
            sb[(i, i)] += SHRINKAGE;
        }
    }
    let root_a = psd_sqrt(&sa);
    let inner = &root_a * &sb * &root_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = inner
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    let mean_term = (&a.mu - &b.mu).norm_squared();
    Ok((mean_term + sa.trace() + sb.trace() - 2.0 * cross).max(0.0))
}
