use crate::error::{Error, Result};
use crate::tensor::{ChannelStack, Shape};

use super::schedule::NoiseSchedule;

/// Predicts the noise `eps` contained in `x_t` at step `t` for a counting
/// category. Implementations must return a tensor of the input's shape and
/// be deterministic in their inputs.
pub trait Denoiser: Send + Sync {
    fn predict_noise(&self, x_t: &ChannelStack, t: usize, category: usize) -> Result<ChannelStack>;
}

/// Always predicts zero noise.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn predict_noise(
        &self,
        x_t: &ChannelStack,
        _t: usize,
        _category: usize,
    ) -> Result<ChannelStack> {
        Ok(ChannelStack::zeros(
            x_t.channels(),
            x_t.height(),
            x_t.width(),
        ))
    }
}

/// Exact posterior-mean denoiser for the empirical distribution of a finite
/// training set, one set per counting category.
///
/// Given `x_t`, the clean-data posterior puts weight
/// `w_i ∝ exp(-|x_t - sqrt(abar_t) x0_i|^2 / (2 (1 - abar_t)))` on training
/// tensor `i` of the category; the predicted noise is the one implied by the
/// weighted mean of the training tensors.
#[derive(Clone, Debug)]
pub struct EmpiricalBayesDenoiser {
    schedule: NoiseSchedule,
    shape: Shape,
    categories: Vec<Vec<ChannelStack>>,
}

impl EmpiricalBayesDenoiser {
    /// Categories may be empty; querying an empty one is an error.
    pub fn new(schedule: NoiseSchedule, categories: Vec<Vec<ChannelStack>>) -> Result<Self> {
        let shape = categories
            .iter()
            .flatten()
            .map(ChannelStack::shape)
            .next()
            .ok_or_else(|| {
                Error::arg("empirical-Bayes denoiser needs at least one training tensor")
            })?;
        if let Some(bad) = categories.iter().flatten().find(|x| x.shape() != shape) {
            return Err(Error::ShapeMismatch {
                expected: shape.to_string(),
                actual: bad.shape().to_string(),
            });
        }
        Ok(EmpiricalBayesDenoiser {
            schedule,
            shape,
            categories,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn category(&self, category: usize) -> Result<&[ChannelStack]> {
        match self.categories.get(category) {
            Some(set) if !set.is_empty() => Ok(set),
            Some(_) => Err(Error::arg(format!(
                "counting category {category} has no training tensors"
            ))),
            None => Err(Error::arg(format!(
                "counting category {category} out of range (have {})",
                self.categories.len()
            ))),
        }
    }

    fn check(&self, x_t: &ChannelStack, t: usize) -> Result<()> {
        self.schedule.check_step(t)?;
        if x_t.shape() != self.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape.to_string(),
                actual: x_t.shape().to_string(),
            });
        }
        Ok(())
    }

    /// Normalized posterior weights over the category's training tensors.
    pub fn posterior_weights(
        &self,
        x_t: &ChannelStack,
        t: usize,
        category: usize,
    ) -> Result<Vec<f64>> {
        self.check(x_t, t)?;
        let set = self.category(category)?;
        let scale = self.schedule.alpha_bar(t).sqrt();
        let var = 1.0 - self.schedule.alpha_bar(t);
        let mut logits: Vec<f64> = set
            .iter()
            .map(|x0| {
                let d2: f64 = x_t
                    .data()
                    .iter()
                    .zip(x0.data())
                    .map(|(a, b)| {
                        let r = a - scale * b;
                        r * r
                    })
                    .sum();
                -d2 / (2.0 * var)
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            total += *l;
        }
        logits.iter_mut().for_each(|w| *w /= total);
        Ok(logits)
    }

    /// Posterior mean of the clean tensor, `sum_i w_i x0_i`.
    pub fn posterior_mean(
        &self,
        x_t: &ChannelStack,
        t: usize,
        category: usize,
    ) -> Result<ChannelStack> {
        let weights = self.posterior_weights(x_t, t, category)?;
        let set = self.category(category)?;
        let mut mean = vec![0.0; self.shape.len()];
        for (w, x0) in weights.iter().zip(set) {
            if *w == 0.0 {
                continue;
            }
            for (m, v) in mean.iter_mut().zip(x0.data()) {
                *m += w * v;
            }
        }
        ChannelStack::from_vec(self.shape, mean)
    }
}

impl EmpiricalBayesDenoiser {
    /// `(x_t - sqrt(abar_t) x0_hat) / sqrt(1 - abar_t)`
    fn noise_from_mean(&self, x_t: &ChannelStack, x0_hat: &ChannelStack, t: usize) -> ChannelStack {
        let scale = self.schedule.alpha_bar(t).sqrt();
        let inv_sd = 1.0 / (1.0 - self.schedule.alpha_bar(t)).sqrt();
        let eps = x_t
            .data()
            .iter()
            .zip(x0_hat.data())
            .map(|(x, m)| (x - scale * m) * inv_sd)
            .collect();
        ChannelStack::from_vec(self.shape, eps).expect("same shape as x_t")
    }
}

impl Denoiser for EmpiricalBayesDenoiser {
    fn predict_noise(&self, x_t: &ChannelStack, t: usize, category: usize) -> Result<ChannelStack> {
        let x0_hat = self.posterior_mean(x_t, t, category)?;
        Ok(self.noise_from_mean(x_t, &x0_hat, t))
    }
}

/// Noise prediction of the empirical-Bayes denoiser.
pub fn empirical_bayes_epsilon(
    store: &EmpiricalBayesDenoiser,
    x_t: &ChannelStack,
    t: usize,
    category: usize,
) -> Result<ChannelStack> {
    store.predict_noise(x_t, t, category)
}
