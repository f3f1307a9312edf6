use std::ops::Range;

use crate::error::{Error, Result};
use crate::tensor::{ChannelStack, Shape};

/// Maps layout channels `(num_types, H, W)` to a fixed-length feature vector.
pub trait FeatureExtractor: Send + Sync {
    /// Feature length for inputs of `shape`; errors if the shape is unsupported.
    fn dim(&self, shape: Shape) -> Result<usize>;

    fn extract(&self, layout: &ChannelStack) -> Result<Vec<f64>>;

    /// Index ranges of named feature groups, used for per-group reporting.
    fn groups(&self, shape: Shape) -> Result<Vec<Range<usize>>> {
        Ok(vec![0..self.dim(shape)?])
    }
}

/// Multi-resolution count pyramid: at level `l` (1-based) each channel is cut
/// into `2^(l-1) x 2^(l-1)` blocks and the foreground pixels of every block are
/// counted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PyramidExtractor {
    pub levels: usize,
    pub threshold: f64,
}

impl PyramidExtractor {
    pub fn new(levels: usize) -> Self {
        PyramidExtractor {
            levels,
            threshold: 0.5,
        }
    }
}

impl Default for PyramidExtractor {
    fn default() -> Self {
        PyramidExtractor::new(4)
    }
}

impl PyramidExtractor {
    fn check(&self, shape: Shape) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::arg("pyramid needs at least one level"));
        }
        let finest = 1usize << (self.levels - 1);
        if !shape.height.is_multiple_of(finest)
            || !shape.width.is_multiple_of(finest)
            || shape.height == 0
            || shape.width == 0
        {
            return Err(Error::arg(format!(
                "grid {}x{} is not divisible by {finest} for {} pyramid levels",
                shape.height, shape.width, self.levels
            )));
        }
        Ok(())
    }
}

impl FeatureExtractor for PyramidExtractor {
    fn dim(&self, shape: Shape) -> Result<usize> {
        self.check(shape)?;
        Ok(shape.channels * (0..self.levels).map(|l| 1usize << (2 * l)).sum::<usize>())
    }

    fn extract(&self, layout: &ChannelStack) -> Result<Vec<f64>> {
        pyramid_features_with(layout, self.levels, self.threshold)
    }

    fn groups(&self, shape: Shape) -> Result<Vec<Range<usize>>> {
        self.check(shape)?;
        let mut start = 0;
        Ok((0..self.levels)
            .map(|l| {
                let len = shape.channels << (2 * l);
                let r = start..start + len;
                start += len;
                r
            })
            .collect())
    }
}

/// Count-pyramid features with the default 0.5 threshold.
pub fn pyramid_features(layout: &ChannelStack, levels: usize) -> Result<Vec<f64>> {
    pyramid_features_with(layout, levels, 0.5)
}

fn pyramid_features_with(layout: &ChannelStack, levels: usize, threshold: f64) -> Result<Vec<f64>> {
    let extractor = PyramidExtractor { levels, threshold };
    let dim = extractor.dim(layout.shape())?;
    let (h, w) = (layout.height(), layout.width());
    let finest = 1usize << (levels - 1);
    let (bh, bw) = (h / finest, w / finest);

    // Counts on the finest grid, then sum 2x2 groups for coarser levels.
    let mut fine: Vec<Vec<f64>> = (0..layout.channels())
        .map(|c| {
            let plane = layout.channel(c);
            let mut counts = vec![0.0; finest * finest];
            for r in 0..h {
                for q in 0..w {
                    if plane[r * w + q] >= threshold {
                        counts[(r / bh) * finest + q / bw] += 1.0;
                    }
                }
            }
            counts
        })
        .collect();

    let mut per_level: Vec<Vec<f64>> = Vec::with_capacity(levels);
    let mut side = finest;
    loop {
        per_level.push(fine.iter().flatten().copied().collect());
        if side == 1 {
            break;
        }
        let half = side / 2;
        fine = fine
            .iter()
            .map(|counts| {
                let mut out = vec![0.0; half * half];
                for r in 0..side {
                    for q in 0..side {
                        out[(r / 2) * half + q / 2] += counts[r * side + q];
                    }
                }
                out
            })
            .collect();
        side = half;
    }
    let features: Vec<f64> = per_level.into_iter().rev().flatten().collect();
    debug_assert_eq!(features.len(), dim);
    Ok(features)
}
