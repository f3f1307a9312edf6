//! Spatial feature extraction and the Fréchet distance between layout sets.

mod features;
mod stats;

pub use features::{pyramid_features, FeatureExtractor, PyramidExtractor};
pub use stats::{fit_stats, frechet_distance, psd_sqrt, FeatureStats, SHRINKAGE};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ChannelStack;

/// Extracts features for every layout in parallel, checking shapes agree.
pub fn extract_all(
    layouts: &[ChannelStack],
    extractor: &dyn FeatureExtractor,
) -> Result<Vec<Vec<f64>>> {
    if let Some(first) = layouts.first() {
        let shape = first.shape();
        if let Some(bad) = layouts.iter().find(|l| l.shape() != shape) {
            return Err(Error::ShapeMismatch {
                expected: shape.to_string(),
                actual: bad.shape().to_string(),
            });
        }
    }
    layouts.par_iter().map(|l| extractor.extract(l)).collect()
}

/// Spatial-FID between two layout sets.
pub fn spatial_fid(
    reference: &[ChannelStack],
    generated: &[ChannelStack],
    extractor: &dyn FeatureExtractor,
) -> Result<f64> {
    check_pair(reference, generated)?;
    let a = fit_stats(&extract_all(reference, extractor)?)?;
    let b = fit_stats(&extract_all(generated, extractor)?)?;
    frechet_distance(&a, &b)
}

fn check_pair(reference: &[ChannelStack], generated: &[ChannelStack]) -> Result<()> {
    if reference.len() < 2 || generated.len() < 2 {
        return Err(Error::arg(format!(
            "spatial-FID needs at least 2 layouts per set, got {} and {}",
            reference.len(),
            generated.len()
        )));
    }
    if reference[0].shape() != generated[0].shape() {
        return Err(Error::ShapeMismatch {
            expected: reference[0].shape().to_string(),
            actual: generated[0].shape().to_string(),
        });
    }
    Ok(())
}

/// Per-group feature summary for the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelNorm {
    pub level: usize,
    pub reference_mean_norm: f64,
    pub generated_mean_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub reference_count: usize,
    pub generated_count: usize,
    pub feature_dim: usize,
    pub spatial_fid: f64,
    pub per_level_norms: Vec<LevelNorm>,
    /// Spatial-FID between the two halves of the reference set, when it has
    /// at least four layouts.
    pub split_half_baseline: Option<f64>,
}

/// Computes spatial-FID plus the diagnostics written to a metric report.
///
/// The split-half baseline puts even-indexed reference layouts in one half and
/// odd-indexed ones in the other.
pub fn metric_report(
    reference: &[ChannelStack],
    generated: &[ChannelStack],
    extractor: &dyn FeatureExtractor,
) -> Result<MetricReport> {
    check_pair(reference, generated)?;
    let shape = reference[0].shape();
    let fr = extract_all(reference, extractor)?;
    let fg = extract_all(generated, extractor)?;
    let sr = fit_stats(&fr)?;
    let sg = fit_stats(&fg)?;
    let fid = frechet_distance(&sr, &sg)?;

    let mean_norm =
        |mu: &nalgebra::DVector<f64>, r: &std::ops::Range<usize>| mu.rows(r.start, r.len()).norm();
    let per_level_norms = extractor
        .groups(shape)?
        .iter()
        .enumerate()
        .map(|(i, r)| LevelNorm {
            level: i + 1,
            reference_mean_norm: mean_norm(&sr.mu, r),
            generated_mean_norm: mean_norm(&sg.mu, r),
        })
        .collect();

    let split_half_baseline = if fr.len() >= 4 {
        let even: Vec<Vec<f64>> = fr.iter().step_by(2).cloned().collect();
        let odd: Vec<Vec<f64>> = fr.iter().skip(1).step_by(2).cloned().collect();
        Some(frechet_distance(&fit_stats(&even)?, &fit_stats(&odd)?)?)
    } else {
        None
    };

    Ok(MetricReport {
        reference_count: reference.len(),
        generated_count: generated.len(),
        feature_dim: sr.dim(),
        spatial_fid: fid,
        per_level_norms,
        split_half_baseline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{rasterize_layout, Cell, PointPattern};
    use crate::rng::seeded;
    use rand::Rng;

    fn random_layout(rng: &mut impl Rng, n: usize) -> ChannelStack {
        let cells = (0..n)
            .map(|_| {
                Cell::new(
                    rng.random_range(0.0..64.0),
                    rng.random_range(0.0..64.0),
                    rng.random_range(0..2),
                )
            })
            .collect();
        rasterize_layout(&PointPattern::new("r", 64, 64, cells), 32, 32, 2).unwrap()
    }

    #[test]
    fn same_set_scores_zero_and_is_symmetric() {
        let mut rng = seeded(3);
        let a: Vec<_> = (0..20).map(|_| random_layout(&mut rng, 15)).collect();
        let b: Vec<_> = (0..20).map(|_| random_layout(&mut rng, 30)).collect();
        let ex = PyramidExtractor::new(3);
        assert!(spatial_fid(&a, &a, &ex).unwrap() < 1e-8);
        let (ab, ba) = (
            spatial_fid(&a, &b, &ex).unwrap(),
            spatial_fid(&b, &a, &ex).unwrap(),
        );
        assert!((ab - ba).abs() < 1e-8 * ab.max(1.0));
        assert!(ab > 0.0);
    }

    #[test]
    fn features_are_deterministic() {
        let mut rng = seeded(8);
        let l = random_layout(&mut rng, 25);
        let ex = PyramidExtractor::new(4);
        assert_eq!(ex.extract(&l).unwrap(), ex.extract(&l.clone()).unwrap());
    }

    #[test]
    fn report_fields() {
        let mut rng = seeded(4);
        let a: Vec<_> = (0..10).map(|_| random_layout(&mut rng, 10)).collect();
        let b: Vec<_> = (0..6).map(|_| random_layout(&mut rng, 10)).collect();
        let r = metric_report(&a, &b, &PyramidExtractor::new(3)).unwrap();
        assert_eq!(
            (r.reference_count, r.generated_count, r.feature_dim),
            (10, 6, 2 * 21)
        );
        assert_eq!(r.per_level_norms.len(), 3);
        assert!(r.split_half_baseline.unwrap() >= 0.0);
    }

    #[test]
    fn errors() {
        let ex = PyramidExtractor::new(2);
        let one = vec![ChannelStack::zeros(1, 8, 8)];
        let two = vec![ChannelStack::zeros(1, 8, 8); 2];
        assert!(spatial_fid(&one, &two, &ex).is_err());
        let other = vec![ChannelStack::zeros(2, 8, 8); 2];
        assert!(spatial_fid(&two, &other, &ex).is_err());
    }
}
