//! Shared fixtures for the benchmarks.

use layoutforge_core::layout::rasterize_layout;
use layoutforge_core::synth::{clustered_dataset, SynthConfig};
use layoutforge_core::tensor::ChannelStack;
use layoutforge_core::Dataset;

pub fn dataset(patches: usize, seed: u64) -> Dataset {
    clustered_dataset(&SynthConfig {
        patches,
        seed,
        ..SynthConfig::default()
    })
    .expect("default synthetic config is valid")
}

pub fn layouts(dataset: &Dataset, grid: usize) -> Vec<ChannelStack> {
    dataset
        .patches
        .iter()
        .map(|p| {
            rasterize_layout(p, grid, grid, dataset.num_cell_types())
                .expect("synthetic patches are valid")
        })
        .collect()
}
