//! Spatial density models (KDE, GMM, GMCM) for one cell type of one patch,
//! and their rasterization into density channels.
//!
//! All coordinates here are normalized to the unit square of the patch.

pub mod gmcm;
pub mod gmm;
pub mod kde;
pub mod normal;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gmcm::{fit_gmcm, fit_gmcm_bic, GmcmFit, GmcmModel};
pub use gmm::{
    bic, fit_gmm, fit_mixture, select_components_bic, BicSelection, EmConfig, Gaussian,
    GaussianMixture, GmmModel, MixtureFit,
};
pub use kde::{fit_kde, scott_bandwidth, scott_factor, KdeModel};

use crate::error::{Error, Result};
use crate::layout::CellTypeId;
use crate::rng::seeded;

/// Spread used when a cell type has a single point (or no measurable spread).
pub const LONE_POINT_SCALE: f64 = 0.05;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityKind {
    None,
    Kde,
    #[default]
    Gmm,
    Gmcm,
}

impl fmt::Display for DensityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DensityKind::None => "none",
            DensityKind::Kde => "kde",
            DensityKind::Gmm => "gmm",
            DensityKind::Gmcm => "gmcm",
        })
    }
}

impl FromStr for DensityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(DensityKind::None),
            "kde" => Ok(DensityKind::Kde),
            "gmm" => Ok(DensityKind::Gmm),
            "gmcm" => Ok(DensityKind::Gmcm),
            other => Err(Error::arg(format!(
                "unknown density kind {other:?} (expected none, kde, gmm or gmcm)"
            ))),
        }
    }
}

/// How many mixture components to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentChoice {
    /// BIC over `1..=max`, capped by the point count.
    Bic { max: usize },
    /// Fixed order, capped by the point count.
    Fixed(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub kind: DensityKind,
    /// KDE bandwidth; `None` selects Scott's rule.
    pub bandwidth: Option<f64>,
    pub gmm_components: ComponentChoice,
    pub gmcm_max_marginal: usize,
    pub gmcm_max_copula: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            kind: DensityKind::Gmm,
            bandwidth: None,
            gmm_components: ComponentChoice::Bic { max: 10 },
            gmcm_max_marginal: 4,
            gmcm_max_copula: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DensityEstimate {
    /// No cells of this type; evaluates to zero everywhere.
    Empty,
    Kde(KdeModel),
    Gmm(GmmModel),
    Gmcm(GmcmModel),
}

/// A fitted density for one cell type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityModel {
    pub cell_type: CellTypeId,
    pub point_count: usize,
    #[serde(flatten)]
    pub estimate: DensityEstimate,
}

impl DensityModel {
    pub fn ln_density(&self, x: [f64; 2]) -> f64 {
        match &self.estimate {
            DensityEstimate::Empty => f64::NEG_INFINITY,
            DensityEstimate::Kde(k) => k.density(x).ln(),
            DensityEstimate::Gmm(g) => g.ln_pdf(&gmm::Vector::<2>::new(x[0], x[1])),
            DensityEstimate::Gmcm(g) => g
                .ln_density(x)
                .expect("clamped pseudo-observations are always bracketed"),
        }
    }

    pub fn density(&self, x: [f64; 2]) -> f64 {
        match &self.estimate {
            DensityEstimate::Kde(k) => k.density(x),
            _ => self.ln_density(x).exp(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("density model: {e}")))
    }
}

pub fn evaluate_density(model: &DensityModel, x: [f64; 2]) -> f64 {
    model.density(x)
}

/// Fits the configured density to normalized points of one cell type.
///
/// Zero points give an empty model. A single point (or KDE data without
/// spread) gets one isotropic kernel of scale [`LONE_POINT_SCALE`].
pub fn fit_density(
    points: &[[f64; 2]],
    cell_type: CellTypeId,
    config: &DensityConfig,
    seed: u64,
) -> Result<DensityModel> {
    let n = points.len();
    let estimate = if n == 0 || config.kind == DensityKind::None {
        DensityEstimate::Empty
    } else if n == 1 {
        lone_point(points[0], config.kind)?
    } else {
        match config.kind {
            DensityKind::None => unreachable!(),
            DensityKind::Kde => {
                let h = match config.bandwidth {
                    Some(h) => h,
                    None => {
                        let h = scott_bandwidth(points)?;
                        if h > 0.0 {
                            h
                        } else {
                            LONE_POINT_SCALE
                        }
                    }
                };
                DensityEstimate::Kde(fit_kde(points, Some(h))?)
            }
            DensityKind::Gmm => {
                let pts = gmm::to_vectors(points);
                let em = EmConfig::default();
                let model = match config.gmm_components {
                    ComponentChoice::Fixed(m) => fit_mixture(&pts, m.clamp(1, n), seed, &em)?.model,
                    ComponentChoice::Bic { max } => {
                        let candidates: Vec<usize> = (1..=max.clamp(1, n)).collect();
                        select_components_bic(&pts, &candidates, seed, &em)?
                            .fit
                            .model
                    }
                };
                DensityEstimate::Gmm(model)
            }
            DensityKind::Gmcm => DensityEstimate::Gmcm(
                fit_gmcm_bic(
                    points,
                    config.gmcm_max_marginal.max(1),
                    config.gmcm_max_copula.max(1),
                    seed,
                )?
                .model,
            ),
        }
    };
    Ok(DensityModel {
        cell_type,
        point_count: n,
        estimate,
    })
}

fn lone_point(p: [f64; 2], kind: DensityKind) -> Result<DensityEstimate> {
    let var = LONE_POINT_SCALE * LONE_POINT_SCALE;
    Ok(match kind {
        DensityKind::None => DensityEstimate::Empty,
        DensityKind::Kde => DensityEstimate::Kde(KdeModel::new(vec![p], LONE_POINT_SCALE)?),
        DensityKind::Gmm => DensityEstimate::Gmm(GaussianMixture::single(
            gmm::Vector::<2>::new(p[0], p[1]),
            gmm::Matrix::<2>::identity() * var,
        )?),
        DensityKind::Gmcm => {
            let axis = |v: f64| {
                GaussianMixture::single(gmm::Vector::<1>::new(v), gmm::Matrix::<1>::new(var))
            };
            DensityEstimate::Gmcm(GmcmModel::new(
                [axis(p[0])?, axis(p[1])?],
                GaussianMixture::single(gmm::Vector::<2>::zeros(), gmm::Matrix::<2>::identity())?,
            )?)
        }
    })
}

/// Draws `n` i.i.d. points from a fitted model.
pub fn sample_density(model: &DensityModel, n: usize, seed: u64) -> Result<Vec<[f64; 2]>> {
    let mut rng = seeded(seed);
    match &model.estimate {
        DensityEstimate::Empty if n > 0 => Err(Error::arg("cannot sample an empty density")),
        DensityEstimate::Empty => Ok(Vec::new()),
        DensityEstimate::Kde(k) => Ok((0..n).map(|_| k.sample(&mut rng)).collect()),
        DensityEstimate::Gmm(g) => Ok((0..n)
            .map(|_| {
                let v = g.sample(&mut rng);
                [v[0], v[1]]
            })
            .collect()),
        DensityEstimate::Gmcm(g) => (0..n).map(|_| g.sample(&mut rng)).collect(),
    }
}

/// One density channel: the density at every grid-cell center, scaled so
/// the maximum is 1. Empty models give an all-zero channel.
pub fn rasterize_density(model: &DensityModel, grid_h: usize, grid_w: usize) -> Vec<f64> {
    let mut out = vec![0.0; grid_h * grid_w];
    if model.point_count == 0 || matches!(model.estimate, DensityEstimate::Empty) {
        return out;
    }
    out.par_chunks_mut(grid_w.max(1))
        .enumerate()
        .for_each(|(row, line)| {
            let y = (row as f64 + 0.5) / grid_h as f64;
            for (col, v) in line.iter_mut().enumerate() {
                let x = (col as f64 + 0.5) / grid_w as f64;
                *v = model.ln_density([x, y]);
            }
        });
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        out.iter_mut().for_each(|v| *v = 0.0);
        return out;
    }
    out.iter_mut().for_each(|v| *v = (*v - max).exp());
    out
}
