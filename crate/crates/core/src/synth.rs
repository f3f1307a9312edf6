//! Synthetic clustered datasets.
//!
//! Tumor cells follow a Thomas cluster process whose spread shrinks as the
//! patch cell count grows, lymphocytes form tight satellite clusters around
//! the tumor parents, and stromal cells are scattered uniformly.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{Cell, Dataset, PointPattern};
use crate::rng::{stream, Rng as ChainRng};

pub const CELL_TYPES: [&str; 3] = ["tumor", "lymph", "stromal"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub patches: usize,
    pub width: u32,
    pub height: u32,
    pub min_cells: usize,
    pub max_cells: usize,
    /// Cluster spread, as a fraction of the patch side, for the sparsest patch.
    pub loose_spread: f64,
    /// Cluster spread for the densest patch.
    pub tight_spread: f64,
    /// Spread of lymphocyte satellites around their parent.
    pub satellite_spread: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            patches: 80,
            width: 256,
            height: 256,
            min_cells: 15,
            max_cells: 60,
            loose_spread: 0.2,
            tight_spread: 0.06,
            satellite_spread: 0.04,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::arg(
                "synthetic patches need positive width and height",
            ));
        }
        if self.min_cells > self.max_cells {
            return Err(Error::arg(format!(
                "min_cells {} exceeds max_cells {}",
                self.min_cells, self.max_cells
            )));
        }
        for (name, v) in [
            ("loose_spread", self.loose_spread),
            ("tight_spread", self.tight_spread),
            ("satellite_spread", self.satellite_spread),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::arg(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Tumor cluster spread for a patch with `count` cells.
    pub fn spread_for(&self, count: usize) -> f64 {
        if self.max_cells == self.min_cells {
            return self.tight_spread;
        }
        let f = (count - self.min_cells) as f64 / (self.max_cells - self.min_cells) as f64;
        self.loose_spread + f * (self.tight_spread - self.loose_spread)
    }
}

fn uniform_point(rng: &mut impl Rng, w: f64, h: f64) -> (f64, f64) {
    (rng.random_range(0.0..w), rng.random_range(0.0..h))
}

/// Gaussian offset around `center`, redrawn until it lands inside the patch.
fn clustered_point(rng: &mut impl Rng, center: (f64, f64), sd: f64, w: f64, h: f64) -> (f64, f64) {
    let n = Normal::new(0.0, sd).expect("positive spread");
    for _ in 0..100 {
        let (x, y) = (center.0 + n.sample(rng), center.1 + n.sample(rng));
        if (0.0..w).contains(&x) && (0.0..h).contains(&y) {
            return (x, y);
        }
    }
    center
}

fn clustered_patch(config: &SynthConfig, index: usize, rng: &mut ChainRng) -> PointPattern {
    let (w, h) = (config.width as f64, config.height as f64);
    let side = w.min(h);
    let count = rng.random_range(config.min_cells..=config.max_cells);
    let spread = config.spread_for(count) * side;
    let satellite = config.satellite_spread * side;

    let parents: Vec<(f64, f64)> = (0..rng.random_range(1..=3usize))
        .map(|_| {
            (
                rng.random_range(0.2 * w..0.8 * w),
                rng.random_range(0.2 * h..0.8 * h),
            )
        })
        .collect();
    let tumor = count / 2;
    let lymph = (count * 3) / 10;
    let mut cells = Vec::with_capacity(count);
    for i in 0..count {
        let (cell_type, (x, y)) = if i < tumor {
            let p = parents[rng.random_range(0..parents.len())];
            (0, clustered_point(rng, p, spread, w, h))
        } else if i < tumor + lymph {
            let p = parents[rng.random_range(0..parents.len())];
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let ring = (
                p.0 + 1.5 * spread * angle.cos(),
                p.1 + 1.5 * spread * angle.sin(),
            );
            let ring = (ring.0.clamp(0.0, w - 1.0), ring.1.clamp(0.0, h - 1.0));
            (1, clustered_point(rng, ring, satellite, w, h))
        } else {
            (2, uniform_point(rng, w, h))
        };
        cells.push(Cell::new(x, y, cell_type));
    }
    PointPattern::new(
        format!("synth-{index:04}"),
        config.width,
        config.height,
        cells,
    )
}

/// Clustered dataset; patch `i` depends only on `(seed, i)`.
pub fn clustered_dataset(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let patches = (0..config.patches)
        .map(|i| clustered_patch(config, i, &mut stream(config.seed, i as u64)))
        .collect();
    Ok(Dataset {
        cell_types: CELL_TYPES.iter().map(|s| s.to_string()).collect(),
        patches,
    })
}

/// Complete spatial randomness with the same per-patch counts and type mix as
/// `reference`.
pub fn uniform_like(reference: &Dataset, seed: u64) -> Dataset {
    let patches = reference
        .patches
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = stream(seed, i as u64);
            let (w, h) = (p.width as f64, p.height as f64);
            let cells = p
                .cells
                .iter()
                .map(|c| {
                    let (x, y) = uniform_point(&mut rng, w, h);
                    Cell::new(x, y, c.cell_type.index())
                })
                .collect();
            PointPattern::new(format!("uniform-{i:04}"), p.width, p.height, cells)
        })
        .collect();
    Dataset {
        cell_types: reference.cell_types.clone(),
        patches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_is_valid_and_reproducible() {
        let cfg = SynthConfig {
            patches: 12,
            seed: 5,
            ..SynthConfig::default()
        };
        let a = clustered_dataset(&cfg).unwrap();
        a.validate().unwrap();
        assert_eq!(a.patches.len(), 12);
        assert_eq!(a, clustered_dataset(&cfg).unwrap());
        for p in &a.patches {
            assert!((cfg.min_cells..=cfg.max_cells).contains(&p.cell_count()));
        }
        let u = uniform_like(&a, 1);
        u.validate().unwrap();
        for (p, q) in a.patches.iter().zip(&u.patches) {
            assert_eq!(p.cell_count(), q.cell_count());
        }
    }

    #[test]
    fn denser_patches_are_tighter() {
        let cfg = SynthConfig::default();
        assert!(cfg.spread_for(cfg.max_cells) < cfg.spread_for(cfg.min_cells));
        assert_eq!(cfg.spread_for(cfg.min_cells), cfg.loose_spread);
    }

    #[test]
    fn tumor_cells_are_more_clustered_than_uniform() {
        let ds = clustered_dataset(&SynthConfig {
            patches: 20,
            seed: 2,
            ..SynthConfig::default()
        })
        .unwrap();
        let u = uniform_like(&ds, 3);
        let spread = |d: &Dataset| -> f64 {
            d.patches
                .iter()
                .map(|p| {
                    let pts: Vec<_> = p
                        .cells
                        .iter()
                        .filter(|c| c.cell_type.index() == 0)
                        .collect();
                    let n = pts.len() as f64;
                    let mx = pts.iter().map(|c| c.x).sum::<f64>() / n;
                    let my = pts.iter().map(|c| c.y).sum::<f64>() / n;
                    pts.iter()
                        .map(|c| (c.x - mx).powi(2) + (c.y - my).powi(2))
                        .sum::<f64>()
                        / n
                })
                .sum::<f64>()
        };
        assert!(spread(&ds) < spread(&u));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SynthConfig {
            min_cells: 9,
            max_cells: 3,
            ..SynthConfig::default()
        };
        assert!(clustered_dataset(&cfg).is_err());
    }
}
