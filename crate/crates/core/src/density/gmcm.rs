//! Gaussian mixture copula model: 1-D mixture marginals joined by a
//! Gaussian-mixture copula on a latent scale.
//!
//! Fitting is two-stage. The marginals are fitted first, giving pseudo
//! observations `u = F_j(x_j)`. The copula mixture is then fitted by
//! alternating between latent coordinates `z_j = G_j^-1(u_j)` (where `G_j` is
//! the copula mixture's own marginal CDF) and EM steps on those coordinates.
//! After every update the copula is standardized so each latent marginal has
//! zero mean and unit variance; the copula density is invariant to this.

use serde::{Deserialize, Serialize};

use super::gmm::{
    bic, fit_mixture, mixture_free_parameters, run_em, select_components_bic, EmConfig, Gaussian,
    GaussianMixture, Matrix, Vector,
};
use super::normal::std_normal_quantile;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Pseudo-observations are kept this far from 0 and 1.
const U_EPS: f64 = 1e-10;
const OUTER_ROUNDS: usize = 100;
const OUTER_TOL: f64 = 1e-5;
const EM_STEPS_PER_ROUND: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GmcmParams", into = "GmcmParams")]
pub struct GmcmModel {
    marginals: [GaussianMixture<1>; 2],
    copula: GaussianMixture<2>,
    latent_marginals: [GaussianMixture<1>; 2],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GmcmParams {
    marginals: [GaussianMixture<1>; 2],
    copula: GaussianMixture<2>,
}

impl From<GmcmModel> for GmcmParams {
    fn from(m: GmcmModel) -> Self {
        GmcmParams {
            marginals: m.marginals,
            copula: m.copula,
        }
    }
}

impl TryFrom<GmcmParams> for GmcmModel {
    type Error = Error;

    fn try_from(p: GmcmParams) -> Result<Self> {
        GmcmModel::new(p.marginals, p.copula)
    }
}

/// Marginal mixture of one latent axis of a 2-D mixture.
fn latent_marginal(copula: &GaussianMixture<2>, axis: usize) -> Result<GaussianMixture<1>> {
    let comps = copula
        .components()
        .iter()
        .map(|g| {
            Gaussian::new(
                Vector::<1>::new(g.mean()[axis]),
                Matrix::<1>::new(g.cov()[(axis, axis)]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianMixture::new(copula.weights().to_vec(), comps)
}

impl GmcmModel {
    pub fn new(marginals: [GaussianMixture<1>; 2], copula: GaussianMixture<2>) -> Result<Self> {
        let latent_marginals = [latent_marginal(&copula, 0)?, latent_marginal(&copula, 1)?];
        Ok(GmcmModel {
            marginals,
            copula,
            latent_marginals,
        })
    }

    pub fn marginals(&self) -> &[GaussianMixture<1>; 2] {
        &self.marginals
    }

    pub fn copula(&self) -> &GaussianMixture<2> {
        &self.copula
    }

    pub fn free_parameters(&self) -> usize {
        self.marginals
            .iter()
            .map(|m| m.free_parameters())
            .sum::<usize>()
            + copula_free_parameters(self.copula.n_components())
    }

    fn latent(&self, x: [f64; 2]) -> Result<Vector<2>> {
        let mut z = Vector::<2>::zeros();
        for j in 0..2 {
            let u = self.marginals[j].cdf(x[j]).clamp(U_EPS, 1.0 - U_EPS);
            z[j] = self.latent_marginals[j].quantile(u)?;
        }
        Ok(z)
    }

    /// `ln c(u)` at latent point `z`: joint latent density over the product
    /// of its marginals.
    fn ln_copula_density(&self, z: &Vector<2>) -> f64 {
        self.copula.ln_pdf(z)
            - self.latent_marginals[0].ln_pdf_1d(z[0])
            - self.latent_marginals[1].ln_pdf_1d(z[1])
    }

    pub fn ln_density(&self, x: [f64; 2]) -> Result<f64> {
        let z = self.latent(x)?;
        Ok(self.ln_copula_density(&z)
            + self.marginals[0].ln_pdf_1d(x[0])
            + self.marginals[1].ln_pdf_1d(x[1]))
    }

    pub fn density(&self, x: [f64; 2]) -> Result<f64> {
        Ok(self.ln_density(x)?.exp())
    }

    /// Product of the two marginal densities, the independence baseline.
    pub fn marginal_product(&self, x: [f64; 2]) -> f64 {
        self.marginals[0].pdf_1d(x[0]) * self.marginals[1].pdf_1d(x[1])
    }

    pub fn sample(&self, rng: &mut Rng) -> Result<[f64; 2]> {
        let z = self.copula.sample(rng);
        let mut x = [0.0; 2];
        for j in 0..2 {
            let u = self.latent_marginals[j].cdf(z[j]).clamp(U_EPS, 1.0 - U_EPS);
            x[j] = self.marginals[j].quantile(u)?;
        }
        Ok(x)
    }

    pub fn log_likelihood(&self, points: &[[f64; 2]]) -> Result<f64> {
        points.iter().map(|&p| self.ln_density(p)).sum()
    }
}

/// Copula parameters once per-axis location and scale are fixed.
pub fn copula_free_parameters(m: usize) -> usize {
    mixture_free_parameters(m, 2) - 4
}

#[derive(Clone, Debug)]
pub struct GmcmFit {
    pub model: GmcmModel,
    pub log_likelihood: f64,
    /// Copula pseudo-log-likelihood after each outer round.
    pub copula_trace: Vec<f64>,
}

impl GmcmFit {
    pub fn bic(&self, n: usize) -> f64 {
        bic(self.log_likelihood, self.model.free_parameters(), n)
    }
}

fn axis(points: &[[f64; 2]], j: usize) -> Vec<Vector<1>> {
    points.iter().map(|p| Vector::<1>::new(p[j])).collect()
}

/// Fits a GMCM with fixed marginal and copula orders.
pub fn fit_gmcm(
    points: &[[f64; 2]],
    m_marginal: usize,
    m_copula: usize,
    seed: u64,
) -> Result<GmcmFit> {
    let config = EmConfig::default();
    let marginals = [
        fit_mixture(&axis(points, 0), m_marginal, seed, &config)?.model,
        fit_mixture(&axis(points, 1), m_marginal, seed.wrapping_add(1), &config)?.model,
    ];
    fit_copula(points, marginals, m_copula, seed)
}

/// Fits a GMCM choosing each marginal order and the copula order by BIC.
/// Marginal orders are chosen independently per axis.
pub fn fit_gmcm_bic(
    points: &[[f64; 2]],
    max_marginal: usize,
    max_copula: usize,
    seed: u64,
) -> Result<GmcmFit> {
    let n = points.len();
    if n == 0 {
        return Err(Error::arg("GMCM needs at least one point"));
    }
    let config = EmConfig::default();
    let marginal_candidates: Vec<usize> = (1..=max_marginal.min(n)).collect();
    let marginals = [
        select_components_bic(&axis(points, 0), &marginal_candidates, seed, &config)?
            .fit
            .model,
        select_components_bic(
            &axis(points, 1),
            &marginal_candidates,
            seed.wrapping_add(1),
            &config,
        )?
        .fit
        .model,
    ];
    let mut best: Option<(f64, GmcmFit)> = None;
    for m in 1..=max_copula.min(n) {
        let fit = fit_copula(points, marginals.clone(), m, seed)?;
        let score = fit.bic(n);
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, fit));
        }
    }
    Ok(best.expect("at least one copula order").1)
}

fn fit_copula(
    points: &[[f64; 2]],
    marginals: [GaussianMixture<1>; 2],
    m_copula: usize,
    seed: u64,
) -> Result<GmcmFit> {
    if m_copula == 0 || points.len() < m_copula {
        return Err(Error::arg(format!(
            "cannot fit a {m_copula}-component copula to {} points",
            points.len()
        )));
    }
    let u: Vec<[f64; 2]> = points
        .iter()
        .map(|p| {
            [
                marginals[0].cdf(p[0]).clamp(U_EPS, 1.0 - U_EPS),
                marginals[1].cdf(p[1]).clamp(U_EPS, 1.0 - U_EPS),
            ]
        })
        .collect();
    let z0: Vec<Vector<2>> = u
        .iter()
        .map(|u| Vector::<2>::new(std_normal_quantile(u[0]), std_normal_quantile(u[1])))
        .collect();
    let config = EmConfig::default();
    let mut copula = standardize(&fit_mixture(&z0, m_copula, seed, &config)?.model)?;

    let step_config = EmConfig {
        max_iter: EM_STEPS_PER_ROUND + 1,
        tol: 0.0,
        ..config
    };
    let mut best = (copula_log_likelihood(&copula, &u)?, copula.clone());
    let mut trace = vec![best.0];
    let mut prev = best.0;
    for _ in 0..OUTER_ROUNDS {
        let z = latent_points(&copula, &u)?;
        let stepped = run_em(copula.clone(), &z, &step_config)?.model;
        copula = standardize(&stepped)?;
        let ll = copula_log_likelihood(&copula, &u)?;
        trace.push(ll);
        if ll > best.0 {
            best = (ll, copula.clone());
        }
        if ll - prev < OUTER_TOL * prev.abs().max(1.0) {
            break;
        }
        prev = ll;
    }
    let model = GmcmModel::new(marginals, best.1)?;
    let log_likelihood = model.log_likelihood(points)?;
    Ok(GmcmFit {
        model,
        log_likelihood,
        copula_trace: trace,
    })
}

fn latent_points(copula: &GaussianMixture<2>, u: &[[f64; 2]]) -> Result<Vec<Vector<2>>> {
    let g = [latent_marginal(copula, 0)?, latent_marginal(copula, 1)?];
    u.iter()
        .map(|u| Ok(Vector::<2>::new(g[0].quantile(u[0])?, g[1].quantile(u[1])?)))
        .collect()
}

fn copula_log_likelihood(copula: &GaussianMixture<2>, u: &[[f64; 2]]) -> Result<f64> {
    let g = [latent_marginal(copula, 0)?, latent_marginal(copula, 1)?];
    let z = latent_points(copula, u)?;
    Ok(z.iter()
        .map(|z| copula.ln_pdf(z) - g[0].ln_pdf_1d(z[0]) - g[1].ln_pdf_1d(z[1]))
        .sum())
}

/// Affine per-axis rescaling giving each latent marginal mean 0, variance 1.
fn standardize(copula: &GaussianMixture<2>) -> Result<GaussianMixture<2>> {
    let w = copula.weights();
    let comps = copula.components();
    let mut shift = Vector::<2>::zeros();
    let mut scale = Vector::<2>::zeros();
    for j in 0..2 {
        let mean: f64 = w.iter().zip(comps).map(|(w, g)| w * g.mean()[j]).sum();
        let second: f64 = w
            .iter()
            .zip(comps)
            .map(|(w, g)| w * (g.cov()[(j, j)] + g.mean()[j] * g.mean()[j]))
            .sum();
        shift[j] = mean;
        scale[j] = (second - mean * mean).max(f64::MIN_POSITIVE).sqrt();
    }
    let d = Matrix::<2>::from_diagonal(&scale.map(|s| 1.0 / s));
    let comps = comps
        .iter()
        .map(|g| {
            let mean = d * (g.mean() - shift);
            let cov = d * g.cov() * d;
            Gaussian::new(mean, (cov + cov.transpose()) * 0.5)
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianMixture::new(w.to_vec(), comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_1d(mean: f64, var: f64) -> GaussianMixture<1> {
        GaussianMixture::single(Vector::<1>::new(mean), Matrix::<1>::new(var)).unwrap()
    }

    #[test]
    fn identity_copula_is_independence() {
        let marginals = [normal_1d(0.3, 0.01), normal_1d(0.6, 0.04)];
        let copula =
            GaussianMixture::single(Vector::<2>::zeros(), Matrix::<2>::identity()).unwrap();
        let model = GmcmModel::new(marginals, copula).unwrap();
        for &x in &[[0.3, 0.6], [0.1, 0.9], [0.45, 0.2]] {
            let f = model.density(x).unwrap();
            let g = model.marginal_product(x);
            assert!((f / g - 1.0).abs() < 1e-9, "{f} vs {g}");
        }
    }

    #[test]
    fn standardize_gives_unit_latent_marginals() {
        let copula = GaussianMixture::new(
            vec![0.4, 0.6],
            vec![
                Gaussian::new(
                    Vector::<2>::new(1.0, -2.0),
                    Matrix::<2>::new(2.0, 0.3, 0.3, 0.5),
                )
                .unwrap(),
                Gaussian::new(
                    Vector::<2>::new(-3.0, 0.5),
                    Matrix::<2>::new(0.7, -0.1, -0.1, 1.5),
                )
                .unwrap(),
            ],
        )
        .unwrap();
        let s = standardize(&copula).unwrap();
        for j in 0..2 {
            let g = latent_marginal(&s, j).unwrap();
            let mean = g.mean_1d();
            let var: f64 = g
                .weights()
                .iter()
                .zip(g.components())
                .map(|(w, c)| w * (c.cov()[(0, 0)] + c.mean()[0].powi(2)))
                .sum::<f64>()
                - mean * mean;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_and_sample_correlated_data() {
        let mut rng = seeded(17);
        let pts: Vec<[f64; 2]> = (0..600)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                [0.5 + 0.1 * a, 0.5 + 0.08 * (0.8 * a + 0.6 * b)]
            })
            .collect();
        let fit = fit_gmcm(&pts, 1, 1, 3).unwrap();
        let rho = {
            let c = fit.model.copula().components()[0].cov();
            c[(0, 1)] / (c[(0, 0)] * c[(1, 1)]).sqrt()
        };
        let n = pts.len() as f64;
        let (mx, my) = (
            pts.iter().map(|p| p[0]).sum::<f64>() / n,
            pts.iter().map(|p| p[1]).sum::<f64>() / n,
        );
        let sxy: f64 = pts.iter().map(|p| (p[0] - mx) * (p[1] - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p[0] - mx).powi(2)).sum();
        let syy: f64 = pts.iter().map(|p| (p[1] - my).powi(2)).sum();
        let sample_rho = sxy / (sxx * syy).sqrt();
        assert!((rho - sample_rho).abs() < 1e-6, "{rho} vs {sample_rho}");
        assert!(fit.copula_trace.len() >= 2);
        let mut rng = seeded(5);
        let s = fit.model.sample(&mut rng).unwrap();
        assert!(s.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn serde_roundtrip() {
        let model = GmcmModel::new(
            [normal_1d(0.2, 0.01), normal_1d(0.7, 0.02)],
            GaussianMixture::single(Vector::<2>::zeros(), Matrix::<2>::new(1.0, 0.4, 0.4, 1.0))
                .unwrap(),
        )
        .unwrap();
        let text = serde_json::to_string(&model).unwrap();
        let back: GmcmModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn copula_parameter_count() {
        assert_eq!(copula_free_parameters(1), 1);
        assert_eq!(copula_free_parameters(2), 7);
    }
}
