use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{seeded, stream, Rng};
use crate::tensor::{ChannelStack, Shape};

use super::denoiser::Denoiser;
use super::schedule::NoiseSchedule;

fn gaussian(shape: Shape, rng: &mut Rng) -> ChannelStack {
    let data = (0..shape.len())
        .map(|_| StandardNormal.sample(rng))
        .collect();
    ChannelStack::from_vec(shape, data).expect("length matches shape")
}

/// Draws `x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`, returning `(x_t, eps)`.
pub fn forward_marginal_with_noise(
    schedule: &NoiseSchedule,
    x0: &ChannelStack,
    t: usize,
    rng: &mut Rng,
) -> Result<(ChannelStack, ChannelStack)> {
    schedule.check_step(t)?;
    let eps = gaussian(x0.shape(), rng);
    let a = schedule.alpha_bar(t).sqrt();
    let b = (1.0 - schedule.alpha_bar(t)).sqrt();
    let data = x0
        .data()
        .iter()
        .zip(eps.data())
        .map(|(x, e)| a * x + b * e)
        .collect();
    Ok((ChannelStack::from_vec(x0.shape(), data)?, eps))
}

pub fn forward_marginal_sample(
    schedule: &NoiseSchedule,
    x0: &ChannelStack,
    t: usize,
    seed: u64,
) -> Result<ChannelStack> {
    Ok(forward_marginal_with_noise(schedule, x0, t, &mut seeded(seed))?.0)
}

/// One ancestral step `x_t -> x_{t-1}`; no noise is added at `t = 1`.
pub fn reverse_step<D: Denoiser + ?Sized>(
    schedule: &NoiseSchedule,
    denoiser: &D,
    x_t: &ChannelStack,
    t: usize,
    category: usize,
    rng: &mut Rng,
) -> Result<ChannelStack> {
    schedule.check_step(t)?;
    let eps = denoiser.predict_noise(x_t, t, category)?;
    if eps.shape() != x_t.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("denoiser output {}", x_t.shape()),
            actual: eps.shape().to_string(),
        });
    }
    let inv_sqrt_alpha = 1.0 / schedule.alpha(t).sqrt();
    let coef = (1.0 - schedule.alpha(t)) / (1.0 - schedule.alpha_bar(t)).sqrt();
    let sigma = if t > 1 { schedule.sigma(t) } else { 0.0 };
    let data = x_t
        .data()
        .iter()
        .zip(eps.data())
        .map(|(x, e)| {
            let mean = inv_sqrt_alpha * (x - coef * e);
            if sigma > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                mean + sigma * z
            } else {
                mean
            }
        })
        .collect();
    ChannelStack::from_vec(x_t.shape(), data)
}

/// Full reverse chain from `x_T ~ N(0, I)` down to `x_0`.
pub fn run_chain<D: Denoiser + ?Sized>(
    schedule: &NoiseSchedule,
    denoiser: &D,
    category: usize,
    shape: Shape,
    rng: &mut Rng,
) -> Result<ChannelStack> {
    let mut x = gaussian(shape, rng);
    for t in (1..=schedule.steps()).rev() {
        x = reverse_step(schedule, denoiser, &x, t, category, rng)?;
    }
    Ok(x)
}

/// Generates `n` independent samples; sample `i` uses random stream `i`
/// under `seed`, so the output does not depend on thread scheduling.
pub fn sample_layouts<D: Denoiser + ?Sized>(
    schedule: &NoiseSchedule,
    denoiser: &D,
    category: usize,
    n: usize,
    shape: Shape,
    seed: u64,
) -> Result<Vec<ChannelStack>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            run_chain(
                schedule,
                denoiser,
                category,
                shape,
                &mut stream(seed, i as u64),
            )
        })
        .collect()
}

/// Mean squared error between injected and predicted noise at step `t`.
pub fn simple_loss<D: Denoiser + ?Sized>(
    schedule: &NoiseSchedule,
    denoiser: &D,
    x0: &ChannelStack,
    t: usize,
    category: usize,
    seed: u64,
) -> Result<f64> {
    let (x_t, eps) = forward_marginal_with_noise(schedule, x0, t, &mut seeded(seed))?;
    let pred = denoiser.predict_noise(&x_t, t, category)?;
    if pred.shape() != eps.shape() {
        return Err(Error::ShapeMismatch {
            expected: eps.shape().to_string(),
            actual: pred.shape().to_string(),
        });
    }
    Ok(eps.squared_distance(&pred) / eps.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::denoiser::{EmpiricalBayesDenoiser, ZeroDenoiser};
    use crate::diffusion::schedule::VarianceRule;

    struct WrongShape;

    impl Denoiser for WrongShape {
        fn predict_noise(&self, _x: &ChannelStack, _t: usize, _c: usize) -> Result<ChannelStack> {
            Ok(ChannelStack::zeros(1, 1, 1))
        }
    }

    /// Returns the noise that `forward_marginal_with_noise` injects for a
    /// fixed seed, standing in for a perfect network.
    struct Oracle {
        eps: ChannelStack,
    }

    impl Denoiser for Oracle {
        fn predict_noise(&self, _x: &ChannelStack, _t: usize, _c: usize) -> Result<ChannelStack> {
            Ok(self.eps.clone())
        }
    }

    fn schedule() -> NoiseSchedule {
        NoiseSchedule::scaled_linear(200, VarianceRule::BetaTilde).unwrap()
    }

    #[test]
    fn zero_prediction_at_first_step_rescales() {
        let s = NoiseSchedule::linear(10, 0.01, 0.2, VarianceRule::Beta).unwrap();
        let x1 = ChannelStack::from_vec(Shape::new(1, 1, 3), vec![0.5, -1.0, 2.0]).unwrap();
        let x0 = reverse_step(&s, &ZeroDenoiser, &x1, 1, 0, &mut seeded(0)).unwrap();
        for (a, b) in x0.data().iter().zip(x1.data()) {
            assert_eq!(*a, b / s.alpha(1).sqrt());
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let x = ChannelStack::zeros(2, 2, 2);
        let err = reverse_step(&schedule(), &WrongShape, &x, 5, 0, &mut seeded(0)).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
        assert!(reverse_step(&schedule(), &ZeroDenoiser, &x, 201, 0, &mut seeded(0)).is_err());
    }

    #[test]
    fn forward_sample_is_deterministic() {
        let x0 = ChannelStack::zeros(2, 4, 4);
        let a = forward_marginal_sample(&schedule(), &x0, 50, 7).unwrap();
        let b = forward_marginal_sample(&schedule(), &x0, 50, 7).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(forward_marginal_sample(&schedule(), &x0, 0, 7).is_err());
    }

    #[test]
    fn small_noise_limit() {
        let s = NoiseSchedule::linear(10, 1e-6, 1e-3, VarianceRule::Beta).unwrap();
        let x0 = ChannelStack::from_vec(
            Shape::new(1, 4, 4),
            (0..16).map(|v| v as f64 / 16.0).collect(),
        )
        .unwrap();
        let x1 = forward_marginal_sample(&s, &x0, 1, 3).unwrap();
        assert!(x1.max_abs_difference(&x0) < 5.0 * 1e-6f64.sqrt());
    }

    #[test]
    fn sample_zero_layouts() {
        let d = EmpiricalBayesDenoiser::new(schedule(), vec![vec![ChannelStack::zeros(1, 2, 2)]])
            .unwrap();
        assert!(
            sample_layouts(&schedule(), &d, 0, 0, Shape::new(1, 2, 2), 1)
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn perfect_noise_prediction_has_zero_loss() {
        let s = schedule();
        let x0 = ChannelStack::zeros(1, 3, 3);
        let (_, eps) = forward_marginal_with_noise(&s, &x0, 40, &mut seeded(11)).unwrap();
        let loss = simple_loss(&s, &Oracle { eps }, &x0, 40, 0, 11).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn chains_are_reproducible() {
        let s = schedule();
        let set = vec![
            ChannelStack::from_vec(Shape::new(1, 2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            ChannelStack::from_vec(Shape::new(1, 2, 2), vec![0.0, 1.0, 1.0, 0.0]).unwrap(),
        ];
        let d = EmpiricalBayesDenoiser::new(s.clone(), vec![set]).unwrap();
        let a = sample_layouts(&s, &d, 0, 8, Shape::new(1, 2, 2), 99).unwrap();
        let b = sample_layouts(&s, &d, 0, 8, Shape::new(1, 2, 2), 99).unwrap();
        assert_eq!(a, b);
    }
}
