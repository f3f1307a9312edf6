//! DDPM forward noising and ancestral sampling over layout tensors,
//! conditioned on counting category through a pluggable denoiser.

mod denoiser;
mod sampler;
mod schedule;

pub use denoiser::{empirical_bayes_epsilon, Denoiser, EmpiricalBayesDenoiser, ZeroDenoiser};
pub use sampler::{
    forward_marginal_sample, forward_marginal_with_noise, reverse_step, run_chain, sample_layouts,
    simple_loss,
};
pub use schedule::{scaled_linear_range, NoiseSchedule, VarianceRule, DEFAULT_STEPS};
