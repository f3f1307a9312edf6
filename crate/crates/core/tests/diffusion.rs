use layoutforge_core::diffusion::{
    sample_layouts, simple_loss, EmpiricalBayesDenoiser, NoiseSchedule, VarianceRule, ZeroDenoiser,
};
use layoutforge_core::pipeline::{prepare, PipelineConfig};
use layoutforge_core::synth::{clustered_dataset, SynthConfig};
use layoutforge_core::tensor::ChannelStack;
use proptest::prelude::*;

fn schedule() -> NoiseSchedule {
    NoiseSchedule::scaled_linear(200, VarianceRule::BetaTilde).unwrap()
}

fn training_tensors() -> Vec<ChannelStack> {
    let ds = clustered_dataset(&SynthConfig {
        patches: 12,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = PipelineConfig {
        grid: 16,
        k: 1,
        levels: 2,
        ..PipelineConfig::default()
    };
    prepare(&ds, &cfg)
        .unwrap()
        .patches
        .into_iter()
        .map(|p| p.tensor)
        .collect()
}

#[test]
fn zero_denoiser_loss_is_unit_variance() {
    let s = schedule();
    let tensors = training_tensors();
    let mut total = 0.0;
    let mut n = 0.0;
    for (i, x0) in tensors.iter().enumerate() {
        for t in [1, 50, 100, 150, 200] {
            total += simple_loss(&s, &ZeroDenoiser, x0, t, 0, (i * 1000 + t) as u64).unwrap();
            n += 1.0;
        }
    }
    let mean = total / n;
    assert!((mean - 1.0).abs() <= 0.05, "mean loss {mean}");
}

#[test]
fn empirical_bayes_beats_zero_prediction() {
    let s = schedule();
    let tensors = training_tensors();
    let eb = EmpiricalBayesDenoiser::new(s.clone(), vec![tensors.clone()]).unwrap();
    for t in [1, 20, 100, 199] {
        let (mut zero, mut exact) = (0.0, 0.0);
        for (i, x0) in tensors.iter().enumerate() {
            zero += simple_loss(&s, &ZeroDenoiser, x0, t, 0, i as u64).unwrap();
            exact += simple_loss(&s, &eb, x0, t, 0, i as u64).unwrap();
        }
        assert!(exact < zero, "t={t}: {exact} vs {zero}");
    }
}

proptest! {
    #[test]
    fn linear_schedule_invariants(steps in 1usize..400, lo in 1e-5f64..0.01, span in 0.0f64..0.3) {
        for rule in [VarianceRule::Beta, VarianceRule::BetaTilde] {
            let s = NoiseSchedule::linear(steps, lo, lo + span, rule).unwrap();
            prop_assert_eq!(s.alpha_bar(0), 1.0);
            for t in 1..=steps {
                prop_assert_eq!(s.alpha_bar(t), s.alpha_bar(t - 1) * s.alpha(t));
                prop_assert!(s.alpha_bar(t) > 0.0 && s.alpha_bar(t) < s.alpha_bar(t - 1));
                prop_assert!(s.posterior_variance(t) <= s.beta(t) * (1.0 + 1e-12));
                let var = s.sigma(t).powi(2);
                let expected = match rule {
                    VarianceRule::Beta => s.beta(t),
                    VarianceRule::BetaTilde => s.posterior_variance(t),
                };
                prop_assert!((var - expected).abs() <= 1e-15 * expected.max(1.0));
            }
        }
    }
}

#[test]
fn single_example_chain_collapses_onto_it() {
    let s = schedule();
    let example = training_tensors().swap_remove(3);
    let d = example.len() as f64;
    let eb = EmpiricalBayesDenoiser::new(s.clone(), vec![vec![example.clone()]]).unwrap();
    let samples = sample_layouts(&s, &eb, 0, 10, example.shape(), 8).unwrap();
    let hits = samples
        .iter()
        .filter(|x| x.squared_distance(&example).sqrt() <= 0.05 * d.sqrt())
        .count();
    assert!(hits >= 9, "{hits}/10");
}
