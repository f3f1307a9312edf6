use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quantile bins over per-patch cell counts.
///
/// Category `i` holds counts in `[C_{i/K}, C_{(i+1)/K})`; the top category is
/// closed above, so every non-negative count has exactly one category.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingCategorizer {
    k: usize,
    boundaries: Vec<f64>,
}

impl CountingCategorizer {
    pub fn k(&self) -> usize {
        self.k
    }

    /// The `K - 1` interior quantiles, non-decreasing.
    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn from_boundaries(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.windows(2).any(|w| w[0] > w[1]) || boundaries.iter().any(|b| !b.is_finite()) {
            return Err(Error::arg(
                "category boundaries must be finite and non-decreasing",
            ));
        }
        Ok(CountingCategorizer {
            k: boundaries.len() + 1,
            boundaries,
        })
    }

    pub fn categorize(&self, count: usize) -> usize {
        let c = count as f64;
        self.boundaries.partition_point(|&b| b <= c)
    }
}

/// Fits `K` counting categories from the empirical count distribution.
///
/// Boundaries are type-7 (linear interpolation) quantiles; the order-statistic
/// position `(n - 1) p` is evaluated in exact integer arithmetic so that
/// quantiles landing on an order statistic do not drift across it.
pub fn fit_categorizer(counts: &[usize], k: usize) -> Result<CountingCategorizer> {
    if k == 0 {
        return Err(Error::arg(
            "number of counting categories must be at least 1",
        ));
    }
    if counts.is_empty() {
        return Err(Error::arg(
            "cannot fit counting categories to an empty count list",
        ));
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let boundaries = (1..k)
        .map(|i| {
            let num = (n - 1) * i;
            let (lo, rem) = (num / k, num % k);
            let base = sorted[lo] as f64;
            if rem == 0 {
                base
            } else {
                base + (sorted[lo + 1] as f64 - base) * rem as f64 / k as f64
            }
        })
        .collect();
    Ok(CountingCategorizer { k, boundaries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Sizes of each category when every count in `counts` is binned.
    fn populations(cat: &CountingCategorizer, counts: &[usize]) -> Vec<usize> {
        let mut pops = vec![0; cat.k()];
        for &c in counts {
            pops[cat.categorize(c)] += 1;
        }
        pops
    }

    #[test]
    fn hundred_distinct_counts_five_bins() {
        let counts: Vec<usize> = (0..100).collect();
        let cat = fit_categorizer(&counts, 5).unwrap();
        assert_eq!(cat.boundaries().len(), 4);
        assert_eq!(populations(&cat, &counts), vec![20; 5]);
        assert_eq!(cat.categorize(0), 0);
        assert_eq!(cat.categorize(99), 4);
        assert_eq!(cat.categorize(20), 1);
        assert_eq!(cat.categorize(19), 0);
        assert_eq!(cat.categorize(10_000), 4);
    }

    #[test]
    fn single_category() {
        let cat = fit_categorizer(&[3, 9, 1], 1).unwrap();
        assert!(cat.boundaries().is_empty());
        assert!((0..50).all(|c| cat.categorize(c) == 0));
    }

    #[test]
    fn all_equal_counts() {
        let cat = fit_categorizer(&[7; 12], 4).unwrap();
        assert!(cat.boundaries().iter().all(|&b| b == 7.0));
        let pops = populations(&cat, &[7; 12]);
        assert_eq!(pops.iter().filter(|&&p| p > 0).count(), 1);
        assert_eq!(pops.iter().sum::<usize>(), 12);
    }

    #[test]
    fn eighty_distinct_counts() {
        let counts: Vec<usize> = (0..80).map(|i| 3 * i + 11).collect();
        let cat = fit_categorizer(&counts, 5).unwrap();
        assert_eq!(populations(&cat, &counts), vec![16; 5]);
    }

    #[test]
    fn argument_errors() {
        assert!(fit_categorizer(&[1, 2], 0).is_err());
        assert!(fit_categorizer(&[], 3).is_err());
        assert!(CountingCategorizer::from_boundaries(vec![2.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn partition_is_total_and_monotone(
            counts in prop::collection::vec(0usize..500, 1..200),
            k in 1usize..25,
        ) {
            let cat = fit_categorizer(&counts, k).unwrap();
            prop_assert!(cat.boundaries().windows(2).all(|w| w[0] <= w[1]));
            let mut prev = 0;
            for c in 0..600 {
                let idx = cat.categorize(c);
                prop_assert!(idx < k);
                prop_assert!(idx >= prev);
                prev = idx;
            }
        }

        #[test]
        fn distinct_counts_are_balanced(
            n in 1usize..300,
            k in 1usize..30,
            stride in 1usize..5,
            offset in 0usize..50,
        ) {
            let counts: Vec<usize> = (0..n).map(|i| offset + stride * i).collect();
            let cat = fit_categorizer(&counts, k).unwrap();
            let target = n as f64 / k as f64;
            for p in populations(&cat, &counts) {
                prop_assert!((p as f64 - target).abs() <= 1.0 + 1e-12, "{p} vs {target}");
            }
        }
    }
}
