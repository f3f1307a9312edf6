use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which reverse-process variance `sigma_t^2` to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceRule {
    /// `sigma_t^2 = beta_t`
    Beta,
    /// `sigma_t^2 = (1 - abar_{t-1}) / (1 - abar_t) * beta_t`
    #[default]
    BetaTilde,
}

impl fmt::Display for VarianceRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarianceRule::Beta => "beta",
            VarianceRule::BetaTilde => "beta-tilde",
        })
    }
}

impl FromStr for VarianceRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta" => Ok(VarianceRule::Beta),
            "beta-tilde" | "beta_tilde" => Ok(VarianceRule::BetaTilde),
            other => Err(Error::arg(format!(
                "unknown variance rule {other:?} (expected beta or beta-tilde)"
            ))),
        }
    }
}

/// Default step count for desk-scale runs.
pub const DEFAULT_STEPS: usize = 200;

/// Tables of `beta_t`, `alpha_t`, `abar_t` and `sigma_t` for `t = 1..=T`.
///
/// Accessors take the 1-based step index; `alpha_bar(0)` is 1.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    posterior_variances: Vec<f64>,
    sigmas: Vec<f64>,
    rule: VarianceRule,
}

impl NoiseSchedule {
    /// Betas linearly spaced from `beta_start` to `beta_end` inclusive.
    pub fn linear(
        steps: usize,
        beta_start: f64,
        beta_end: f64,
        rule: VarianceRule,
    ) -> Result<Self> {
        if steps == 0 {
            return Err(Error::arg("schedule needs at least one step"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::arg(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start} and {beta_end}"
            )));
        }
        let betas = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        Self::from_betas(betas, rule)
    }

    /// The linear schedule `1e-4 .. 0.02` defined for 1000 steps, rescaled by
    /// `1000 / steps` so shorter chains still end close to pure noise.
    pub fn scaled_linear(steps: usize, rule: VarianceRule) -> Result<Self> {
        let (start, end) = scaled_linear_range(steps)?;
        Self::linear(steps, start, end, rule)
    }

    pub fn from_betas(betas: Vec<f64>, rule: VarianceRule) -> Result<Self> {
        if betas.is_empty() || betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::arg("every beta must lie in (0, 1)"));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        let posterior_variances: Vec<f64> = (0..betas.len())
            .map(|i| {
                let prev = if i == 0 { 1.0 } else { alpha_bars[i - 1] };
                (1.0 - prev) / (1.0 - alpha_bars[i]) * betas[i]
            })
            .collect();
        let sigmas = match rule {
            VarianceRule::Beta => betas.iter().map(|b| b.sqrt()).collect(),
            VarianceRule::BetaTilde => posterior_variances.iter().map(|v| v.sqrt()).collect(),
        };
        Ok(NoiseSchedule {
            betas,
            alphas,
            alpha_bars,
            posterior_variances,
            sigmas,
            rule,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn rule(&self) -> VarianceRule {
        self.rule
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::arg(format!("step {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// `beta~_t`, the variance of `q(x_{t-1} | x_t, x_0)`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.posterior_variances[t - 1]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }
}

pub fn scaled_linear_range(steps: usize) -> Result<(f64, f64)> {
    if steps == 0 {
        return Err(Error::arg("schedule needs at least one step"));
    }
    let scale = 1000.0 / steps as f64;
    Ok((1e-4 * scale, (0.02 * scale).min(0.999)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_step_constant_schedule() {
        let s = NoiseSchedule::linear(2, 0.1, 0.1, VarianceRule::Beta).unwrap();
        assert!((s.alpha_bar(1) - 0.9).abs() < 1e-15);
        assert!((s.alpha_bar(2) - 0.81).abs() < 1e-15);
    }

    #[test]
    fn single_step() {
        let s = NoiseSchedule::linear(1, 0.3, 0.3, VarianceRule::BetaTilde).unwrap();
        assert_eq!(s.alpha_bar(1), 1.0 - 0.3);
        assert_eq!(s.posterior_variance(1), 0.0);
        assert_eq!(s.sigma(1), 0.0);
    }

    #[test]
    fn endpoints_are_inclusive() {
        let s = NoiseSchedule::linear(5, 0.01, 0.05, VarianceRule::Beta).unwrap();
        assert_eq!(s.beta(1), 0.01);
        assert_eq!(s.beta(5), 0.05);
        assert!((s.beta(3) - 0.03).abs() < 1e-17);
        assert_eq!(s.sigma(2), s.beta(2).sqrt());
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(NoiseSchedule::linear(0, 0.1, 0.2, VarianceRule::Beta).is_err());
        assert!(NoiseSchedule::linear(10, 0.2, 0.1, VarianceRule::Beta).is_err());
        assert!(NoiseSchedule::linear(10, 0.0, 0.1, VarianceRule::Beta).is_err());
        assert!(NoiseSchedule::linear(10, 0.1, 1.0, VarianceRule::Beta).is_err());
        assert!(NoiseSchedule::scaled_linear(0, VarianceRule::Beta).is_err());
    }

    #[test]
    fn algebra_holds_for_default_schedule() {
        let s = NoiseSchedule::scaled_linear(DEFAULT_STEPS, VarianceRule::BetaTilde).unwrap();
        for t in 1..=s.steps() {
            assert_eq!(s.alpha_bar(t), s.alpha_bar(t - 1) * s.alpha(t));
            assert!(s.posterior_variance(t) <= s.beta(t));
            if t > 1 {
                assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            }
        }
        assert!(s.alpha_bar(s.steps()) < 1e-3);
    }

    #[test]
    fn rule_parsing() {
        assert_eq!(
            "beta-tilde".parse::<VarianceRule>().unwrap(),
            VarianceRule::BetaTilde
        );
        assert!("learned".parse::<VarianceRule>().is_err());
    }
}
