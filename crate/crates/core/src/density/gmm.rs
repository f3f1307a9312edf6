//! Gaussian mixtures in `D` dimensions fitted by expectation-maximization,
//! with k-means++ seeding and BIC order selection.
//!
//! The covariance floor is enforced as a lower bound on eigenvalues. With
//! that constraint the M-step remains the exact maximizer of the expected
//! complete-data log-likelihood, so the log-likelihood trace never decreases.

use nalgebra::{DMatrix, SMatrix, SVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::normal::LN_2PI;
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};

pub type Vector<const D: usize> = SVector<f64, D>;
pub type Matrix<const D: usize> = SMatrix<f64, D, D>;

/// A single multivariate normal with a cached Cholesky factor.
#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian<const D: usize> {
    mean: Vector<D>,
    cov: Matrix<D>,
    chol: Matrix<D>,
    ln_norm: f64,
}

impl<const D: usize> Gaussian<D> {
    pub fn new(mean: Vector<D>, cov: Matrix<D>) -> Result<Self> {
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::arg("gaussian parameters must be finite"));
        }
        if (cov - cov.transpose()).abs().max() > 1e-12 * cov.abs().max().max(1.0) {
            return Err(Error::arg("covariance must be symmetric"));
        }
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::arg("covariance is not positive definite"))?
            .l();
        let ln_det: f64 = 2.0 * (0..D).map(|i| chol[(i, i)].ln()).sum::<f64>();
        Ok(Gaussian {
            mean,
            cov,
            chol,
            ln_norm: -0.5 * (D as f64 * LN_2PI + ln_det),
        })
    }

    pub fn mean(&self) -> &Vector<D> {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix<D> {
        &self.cov
    }

    pub fn ln_pdf(&self, x: &Vector<D>) -> f64 {
        // forward substitution L y = x - mean
        let mut y = [0.0; D];
        let mut quad = 0.0;
        for i in 0..D {
            let mut s = x[i] - self.mean[i];
            for (j, yj) in y.iter().enumerate().take(i) {
                s -= self.chol[(i, j)] * yj;
            }
            y[i] = s / self.chol[(i, i)];
            quad += y[i] * y[i];
        }
        self.ln_norm - 0.5 * quad
    }

    pub fn sample(&self, rng: &mut Rng) -> Vector<D> {
        let z = Vector::<D>::from_fn(|_, _| StandardNormal.sample(rng));
        self.mean + self.chol * z
    }
}

/// Weighted sum of Gaussians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureParams", into = "MixtureParams")]
pub struct GaussianMixture<const D: usize> {
    weights: Vec<f64>,
    components: Vec<Gaussian<D>>,
}

/// 2-D mixture used for spatial densities and copulas.
pub type GmmModel = GaussianMixture<2>;

impl<const D: usize> GaussianMixture<D> {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian<D>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::arg(format!(
                "mixture needs matching non-empty weights and components, got {} and {}",
                weights.len(),
                components.len()
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::arg("mixture weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(GaussianMixture {
            weights,
            components,
        })
    }

    pub fn single(mean: Vector<D>, cov: Matrix<D>) -> Result<Self> {
        GaussianMixture::new(vec![1.0], vec![Gaussian::new(mean, cov)?])
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Gaussian<D>] {
        &self.components
    }

    /// Free parameter count: weights, means and symmetric covariances.
    pub fn free_parameters(&self) -> usize {
        mixture_free_parameters(self.n_components(), D)
    }

    pub fn ln_pdf(&self, x: &Vector<D>) -> f64 {
        let mut terms = [0.0f64; 64];
        let m = self.n_components();
        if m <= terms.len() {
            for (t, (w, g)) in terms
                .iter_mut()
                .zip(self.weights.iter().zip(&self.components))
            {
                *t = w.ln() + g.ln_pdf(x);
            }
            log_sum_exp(&terms[..m])
        } else {
            let v: Vec<f64> = self
                .weights
                .iter()
                .zip(&self.components)
                .map(|(w, g)| w.ln() + g.ln_pdf(x))
                .collect();
            log_sum_exp(&v)
        }
    }

    pub fn pdf(&self, x: &Vector<D>) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn log_likelihood(&self, points: &[Vector<D>]) -> f64 {
        points.iter().map(|x| self.ln_pdf(x)).sum()
    }

    pub fn sample(&self, rng: &mut Rng) -> Vector<D> {
        let k = pick_weighted(&self.weights, rng);
        self.components[k].sample(rng)
    }

    /// One EM iteration on `points`; returns the log-likelihood of the
    /// parameters *before* the update.
    pub fn em_step(&mut self, points: &[Vector<D>], cov_floor: f64) -> Result<f64> {
        let mut resp = vec![0.0; points.len() * self.n_components()];
        let ll = self.e_step(points, &mut resp);
        self.m_step(points, &resp, cov_floor)?;
        Ok(ll)
    }

    fn e_step(&self, points: &[Vector<D>], resp: &mut [f64]) -> f64 {
        let m = self.n_components();
        let ln_w: Vec<f64> = self.weights.iter().map(|w| w.ln()).collect();
        let mut ll = 0.0;
        for (x, row) in points.iter().zip(resp.chunks_exact_mut(m)) {
            for (k, r) in row.iter_mut().enumerate() {
                *r = ln_w[k] + self.components[k].ln_pdf(x);
            }
            let lse = log_sum_exp(row);
            ll += lse;
            for r in row.iter_mut() {
                *r = (*r - lse).exp();
            }
        }
        ll
    }

    fn m_step(&mut self, points: &[Vector<D>], resp: &[f64], cov_floor: f64) -> Result<()> {
        let m = self.n_components();
        let n = points.len() as f64;
        let mut weights = Vec::with_capacity(m);
        let mut components = Vec::with_capacity(m);
        for k in 0..m {
            let nk: f64 = resp.iter().skip(k).step_by(m).sum();
            if nk < 1e-12 {
                // Component has lost all support; keep its shape.
                weights.push((nk / n).max(1e-300));
                components.push(self.components[k].clone());
                continue;
            }
            let mut mean = Vector::<D>::zeros();
            for (x, r) in points.iter().zip(resp.iter().skip(k).step_by(m)) {
                mean += x * *r;
            }
            mean /= nk;
            let mut cov = Matrix::<D>::zeros();
            for (x, r) in points.iter().zip(resp.iter().skip(k).step_by(m)) {
                let d = x - mean;
                cov += d * d.transpose() * *r;
            }
            cov /= nk;
            weights.push(nk / n);
            components.push(Gaussian::new(mean, floor_covariance(&cov, cov_floor))?);
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        self.weights = weights;
        self.components = components;
        Ok(())
    }
}

impl GaussianMixture<1> {
    pub fn cdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(w, g)| w * super::normal::std_normal_cdf((x - g.mean[0]) / g.cov[(0, 0)].sqrt()))
            .sum()
    }

    pub fn pdf_1d(&self, x: f64) -> f64 {
        self.pdf(&Vector::<1>::new(x))
    }

    pub fn ln_pdf_1d(&self, x: f64) -> f64 {
        self.ln_pdf(&Vector::<1>::new(x))
    }

    pub fn mean_1d(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(w, g)| w * g.mean[0])
            .sum()
    }

    /// Inverse CDF by safeguarded Newton/bisection. The bracket spans every
    /// component mean widened by 12 of the largest standard deviation.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        let max_sd = self
            .components
            .iter()
            .map(|g| g.cov[(0, 0)].sqrt())
            .fold(0.0, f64::max);
        let lo = self
            .components
            .iter()
            .map(|g| g.mean[0])
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .components
            .iter()
            .map(|g| g.mean[0])
            .fold(f64::NEG_INFINITY, f64::max);
        super::normal::invert_cdf(
            |x| (self.cdf(x), self.pdf_1d(x)),
            u,
            lo - 12.0 * max_sd,
            hi + 12.0 * max_sd,
        )
    }
}

pub fn mixture_free_parameters(m: usize, d: usize) -> usize {
    (m - 1) + m * d + m * d * (d + 1) / 2
}

/// `p ln n - 2 ln L`.
pub fn bic(log_likelihood: f64, free_parameters: usize, n: usize) -> f64 {
    free_parameters as f64 * (n as f64).ln() - 2.0 * log_likelihood
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub(crate) fn pick_weighted(weights: &[f64], rng: &mut Rng) -> usize {
    let mut u: f64 = rng.random::<f64>() * weights.iter().sum::<f64>();
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            return k;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Raises every eigenvalue of a symmetric matrix to at least `floor`.
pub fn floor_covariance<const D: usize>(cov: &Matrix<D>, floor: f64) -> Matrix<D> {
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = DMatrix::from_column_slice(D, D, sym.as_slice()).symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return sym;
    }
    let mut out = Matrix::<D>::zeros();
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        let lam = l.max(floor);
        for r in 0..D {
            for c in 0..D {
                out[(r, c)] += lam * v[r] * v[c];
            }
        }
    }
    (out + out.transpose()) * 0.5
}

/// EM stopping rules.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Stop once the log-likelihood gain falls below `tol * max(|ll|, 1)`.
    pub tol: f64,
    pub cov_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iter: 500,
            tol: 1e-6,
            cov_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MixtureFit<const D: usize> {
    pub model: GaussianMixture<D>,
    pub log_likelihood: f64,
    /// Log-likelihood after every iteration; the last entry belongs to `model`.
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl<const D: usize> MixtureFit<D> {
    pub fn bic(&self, n: usize) -> f64 {
        bic(self.log_likelihood, self.model.free_parameters(), n)
    }
}

/// Fits an `m`-component mixture, seeding with k-means++ under `seed`.
pub fn fit_mixture<const D: usize>(
    points: &[Vector<D>],
    m: usize,
    seed: u64,
    config: &EmConfig,
) -> Result<MixtureFit<D>> {
    if m == 0 {
        return Err(Error::arg("mixture needs at least one component"));
    }
    if points.len() < m {
        return Err(Error::arg(format!(
            "cannot fit {m} components to {} points",
            points.len()
        )));
    }
    if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::arg("points must be finite"));
    }
    let init = kmeans_init(points, m, seed, config.cov_floor)?;
    run_em(init, points, config)
}

/// Runs EM from the given starting mixture.
pub fn run_em<const D: usize>(
    mut model: GaussianMixture<D>,
    points: &[Vector<D>],
    config: &EmConfig,
) -> Result<MixtureFit<D>> {
    let mut resp = vec![0.0; points.len() * model.n_components()];
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    for iter in 0..config.max_iter.max(1) {
        let ll = model.e_step(points, &mut resp);
        if let Some(&prev) = trace.last() {
            if ll - prev < config.tol * prev.abs().max(1.0) {
                converged = true;
            }
        }
        trace.push(ll);
        if converged || iter + 1 == config.max_iter.max(1) {
            break;
        }
        model.m_step(points, &resp, config.cov_floor)?;
    }
    Ok(MixtureFit {
        log_likelihood: *trace.last().expect("at least one iteration"),
        model,
        trace,
        converged,
    })
}

fn kmeans_init<const D: usize>(
    points: &[Vector<D>],
    m: usize,
    seed: u64,
    cov_floor: f64,
) -> Result<GaussianMixture<D>> {
    let mut rng = seeded(seed);
    let n = points.len();
    let mut centers: Vec<Vector<D>> = Vec::with_capacity(m);
    centers.push(points[rng.random_range(0..n)]);
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| (p - centers[0]).norm_squared())
        .collect();
    while centers.len() < m {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            pick_weighted(&d2, &mut rng)
        } else {
            rng.random_range(0..n)
        };
        let c = points[next];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min((p - c).norm_squared());
        }
        centers.push(c);
    }

    let mut labels = vec![0usize; n];
    for _ in 0..25 {
        let mut changed = false;
        for (label, p) in labels.iter_mut().zip(points) {
            let best = nearest(&centers, p);
            if best != *label {
                *label = best;
                changed = true;
            }
        }
        for (k, center) in centers.iter_mut().enumerate() {
            let (sum, count) = points
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == k)
                .fold((Vector::<D>::zeros(), 0usize), |(s, c), (p, _)| {
                    (s + p, c + 1)
                });
            if count > 0 {
                *center = sum / count as f64;
            }
        }
        if !changed {
            break;
        }
    }
    for (label, p) in labels.iter_mut().zip(points) {
        *label = nearest(&centers, p);
    }

    let global_mean = points.iter().fold(Vector::<D>::zeros(), |s, p| s + p) / n as f64;
    let global_cov = points.iter().fold(Matrix::<D>::zeros(), |s, p| {
        let d = p - global_mean;
        s + d * d.transpose()
    }) / n as f64;
    let mut weights = Vec::with_capacity(m);
    let mut components = Vec::with_capacity(m);
    for (k, center) in centers.iter().enumerate() {
        let members: Vec<&Vector<D>> = points
            .iter()
            .zip(&labels)
            .filter(|(_, &l)| l == k)
            .map(|(p, _)| p)
            .collect();
        let cov = if members.len() >= 2 {
            members.iter().fold(Matrix::<D>::zeros(), |s, p| {
                let d = *p - center;
                s + d * d.transpose()
            }) / members.len() as f64
        } else {
            global_cov
        };
        weights.push(members.len().max(1) as f64);
        components.push(Gaussian::new(*center, floor_covariance(&cov, cov_floor))?);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    GaussianMixture::new(weights, components)
}

fn nearest<const D: usize>(centers: &[Vector<D>], p: &Vector<D>) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centers.iter().enumerate() {
        let d = (p - c).norm_squared();
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Result of choosing the component count by BIC.
#[derive(Clone, Debug)]
pub struct BicSelection<const D: usize> {
    pub components: usize,
    pub fit: MixtureFit<D>,
    /// `(m, bic)` for every candidate, in candidate order.
    pub scores: Vec<(usize, f64)>,
}

/// Fits every candidate order and keeps the lowest BIC; ties go to the
/// smaller order.
pub fn select_components_bic<const D: usize>(
    points: &[Vector<D>],
    candidates: &[usize],
    seed: u64,
    config: &EmConfig,
) -> Result<BicSelection<D>> {
    if candidates.is_empty() {
        return Err(Error::arg("BIC selection needs at least one candidate"));
    }
    let mut best: Option<(usize, MixtureFit<D>, f64)> = None;
    let mut scores = Vec::with_capacity(candidates.len());
    for &m in candidates {
        let fit = fit_mixture(points, m, seed, config)?;
        let score = fit.bic(points.len());
        scores.push((m, score));
        let better = match &best {
            None => true,
            Some((bm, _, bs)) => score < *bs || (score == *bs && m < *bm),
        };
        if better {
            best = Some((m, fit, score));
        }
    }
    let (components, fit, _) = best.expect("non-empty candidates");
    Ok(BicSelection {
        components,
        fit,
        scores,
    })
}

pub fn to_vectors(points: &[[f64; 2]]) -> Vec<Vector<2>> {
    points
        .iter()
        .map(|p| Vector::<2>::new(p[0], p[1]))
        .collect()
}

/// 2-D convenience wrapper over [`fit_mixture`].
pub fn fit_gmm(points: &[[f64; 2]], m: usize, seed: u64) -> Result<MixtureFit<2>> {
    fit_mixture(&to_vectors(points), m, seed, &EmConfig::default())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct MixtureParams {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Vec<Vec<f64>>>,
}

impl<const D: usize> From<GaussianMixture<D>> for MixtureParams {
    fn from(g: GaussianMixture<D>) -> Self {
        MixtureParams {
            means: g
                .components
                .iter()
                .map(|c| c.mean.iter().copied().collect())
                .collect(),
            covariances: g
                .components
                .iter()
                .map(|c| {
                    (0..D)
                        .map(|r| (0..D).map(|q| c.cov[(r, q)]).collect())
                        .collect()
                })
                .collect(),
            weights: g.weights,
        }
    }
}

impl<const D: usize> TryFrom<MixtureParams> for GaussianMixture<D> {
    type Error = Error;

    fn try_from(p: MixtureParams) -> Result<Self> {
        if p.means.len() != p.weights.len() || p.covariances.len() != p.weights.len() {
            return Err(Error::Format(
                "mixture arrays have different lengths".into(),
            ));
        }
        let mut components = Vec::with_capacity(p.weights.len());
        for (mean, cov) in p.means.iter().zip(&p.covariances) {
            if mean.len() != D || cov.len() != D || cov.iter().any(|r| r.len() != D) {
                return Err(Error::Format(format!(
                    "mixture component is not {D}-dimensional"
                )));
            }
            let mean = Vector::<D>::from_fn(|i, _| mean[i]);
            let cov = Matrix::<D>::from_fn(|r, q| cov[r][q]);
            components.push(Gaussian::new(mean, cov)?);
        }
        GaussianMixture::new(p.weights, components)
    }
}
