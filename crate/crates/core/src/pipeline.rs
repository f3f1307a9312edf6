//! End-to-end commands: build a tensor store from a dataset, generate layouts
//! from it, score them with spatial-FID, and sweep one parameter.
//!
//! Every command validates its configuration and inputs before touching the
//! file system, and no output file carries timestamps, so identical inputs
//! produce byte-identical output trees.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{
    fit_density, rasterize_density, ComponentChoice, DensityConfig, DensityKind, DensityModel,
};
use crate::diffusion::{
    sample_layouts, EmpiricalBayesDenoiser, NoiseSchedule, VarianceRule, DEFAULT_STEPS,
};
use crate::error::{Error, Result};
use crate::fid::{metric_report, MetricReport, PyramidExtractor};
use crate::io::{read_lft1, write_lft1, write_pgm, write_ppm};
use crate::layout::{
    derasterize_layout, fit_categorizer, rasterize_layout, CellTypeId, CountingCategorizer,
    Dataset, PointPattern,
};
use crate::rng::derive_seed;
use crate::tensor::{ChannelStack, Shape};

pub const STORE_MANIFEST: &str = "manifest.json";
pub const GENERATED_FILE: &str = "generated.json";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Square raster size.
    pub grid: usize,
    /// Number of counting categories.
    pub k: usize,
    pub density: DensityConfig,
    pub steps: usize,
    /// Explicit linear schedule endpoints; both unset selects the default
    /// range scaled to `steps`.
    pub beta_start: Option<f64>,
    pub beta_end: Option<f64>,
    pub variance: VarianceRule,
    pub seed: u64,
    /// Pyramid levels of the spatial-FID feature extractor.
    pub levels: usize,
    /// Map clean values from [0, 1] to [-1, 1] before diffusion.
    pub rescale: bool,
    /// Foreground threshold for turning samples back into points.
    pub threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            grid: 64,
            k: 5,
            density: DensityConfig::default(),
            steps: DEFAULT_STEPS,
            beta_start: None,
            beta_end: None,
            variance: VarianceRule::BetaTilde,
            seed: 0,
            levels: 4,
            rescale: false,
            threshold: 0.5,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid == 0 {
            return Err(Error::arg("grid must be positive"));
        }
        if self.k == 0 {
            return Err(Error::arg(
                "number of counting categories must be at least 1",
            ));
        }
        if self.levels == 0
            || self.levels > 16
            || !self.grid.is_multiple_of(1usize << (self.levels - 1))
        {
            return Err(Error::arg(format!(
                "grid {} is not divisible into {} pyramid levels",
                self.grid, self.levels
            )));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::arg(format!(
                "threshold must be in (0, 1], got {}",
                self.threshold
            )));
        }
        if let Some(h) = self.density.bandwidth {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::arg(format!("bandwidth must be positive, got {h}")));
            }
        }
        match self.density.gmm_components {
            ComponentChoice::Bic { max: 0 } | ComponentChoice::Fixed(0) => {
                return Err(Error::arg("GMM component count must be at least 1"))
            }
            _ => {}
        }
        self.schedule().map(|_| ())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        match (self.beta_start, self.beta_end) {
            (None, None) => NoiseSchedule::scaled_linear(self.steps, self.variance),
            (Some(a), Some(b)) => NoiseSchedule::linear(self.steps, a, b, self.variance),
            _ => Err(Error::arg("beta start and beta end must be given together")),
        }
    }
}

/// One training patch after rasterization and density fitting.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedPatch {
    pub id: String,
    pub cell_count: usize,
    pub category: usize,
    /// Layout channels followed by density channels.
    pub tensor: ChannelStack,
    pub models: Vec<DensityModel>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreparedStore {
    pub cell_types: Vec<String>,
    pub grid: usize,
    pub density: DensityConfig,
    pub seed: u64,
    pub categorizer: CountingCategorizer,
    pub patches: Vec<PreparedPatch>,
}

impl PreparedStore {
    pub fn num_types(&self) -> usize {
        self.cell_types.len()
    }

    pub fn shape(&self) -> Shape {
        Shape::new(2 * self.num_types(), self.grid, self.grid)
    }

    /// Training tensors grouped by counting category.
    pub fn by_category(&self) -> Vec<Vec<ChannelStack>> {
        let mut groups = vec![Vec::new(); self.categorizer.k()];
        for p in &self.patches {
            groups[p.category].push(p.tensor.clone());
        }
        groups
    }
}

/// Rasterizes every patch, fits one density per cell type, and assigns
/// counting categories.
///
/// Tensor values are rounded to `f32`, the precision of the on-disk store,
/// so a store read back from disk equals the one built in memory.
pub fn prepare(dataset: &Dataset, config: &PipelineConfig) -> Result<PreparedStore> {
    config.validate()?;
    dataset.validate()?;
    if dataset.patches.is_empty() {
        return Err(Error::arg("dataset has no patches"));
    }
    let types = dataset.num_cell_types();
    let g = config.grid;
    let patches: Vec<(ChannelStack, Vec<DensityModel>)> =
        dataset
            .patches
            .par_iter()
            .enumerate()
            .map(|(i, patch)| {
                let layout = rasterize_layout(patch, g, g, types)?;
                let mut density = ChannelStack::zeros(types, g, g);
                let mut models = Vec::with_capacity(types);
                for c in 0..types {
                    let points = patch.normalized_points(CellTypeId(c));
                    let seed = derive_seed(config.seed, &[i as u64, c as u64]);
                    let model = fit_density(&points, CellTypeId(c), &config.density, seed)
                        .map_err(|e| Error::Validation {
                            patch_id: patch.patch_id.clone(),
                            message: format!("fitting density for type {c}: {e}"),
                        })?;
                    density
                        .channel_mut(c)
                        .copy_from_slice(&rasterize_density(&model, g, g));
                    models.push(model);
                }
                let mut tensor = ChannelStack::concat(&layout, &density)?;
                tensor
                    .data_mut()
                    .iter_mut()
                    .for_each(|v| *v = *v as f32 as f64);
                Ok((tensor, models))
            })
            .collect::<Result<_>>()?;

    let counts: Vec<usize> = dataset
        .patches
        .iter()
        .map(PointPattern::cell_count)
        .collect();
    let categorizer = fit_categorizer(&counts, config.k)?;
    let patches = dataset
        .patches
        .iter()
        .zip(patches)
        .map(|(p, (tensor, models))| PreparedPatch {
            id: p.patch_id.clone(),
            cell_count: p.cell_count(),
            category: categorizer.categorize(p.cell_count()),
            tensor,
            models,
        })
        .collect();
    Ok(PreparedStore {
        cell_types: dataset.cell_types.clone(),
        grid: g,
        density: config.density,
        seed: config.seed,
        categorizer,
        patches,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct StoreEntry {
    id: String,
    cell_count: usize,
    category: usize,
    tensor: String,
    models: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct StoreManifest {
    command: String,
    cell_types: Vec<String>,
    grid: usize,
    channels: usize,
    density: DensityConfig,
    seed: u64,
    categorizer: CountingCategorizer,
    category_sizes: Vec<usize>,
    patches: Vec<StoreEntry>,
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `manifest.json`, `tensors/NNNN.lft1` and `models/NNNN.json`. With
/// `render`, also writes a PPM of each layout and a PGM per density channel.
pub fn write_store(store: &PreparedStore, dir: &Path, render: bool) -> Result<()> {
    create_dir(&dir.join("tensors"))?;
    create_dir(&dir.join("models"))?;
    if render {
        create_dir(&dir.join("renders"))?;
    }
    let types = store.num_types();
    let mut entries = Vec::with_capacity(store.patches.len());
    for (i, p) in store.patches.iter().enumerate() {
        let tensor = format!("tensors/{i:04}.lft1");
        let models = format!("models/{i:04}.json");
        write_lft1(&dir.join(&tensor), &p.tensor)?;
        write_text(&dir.join(&models), &to_json(&p.models)?)?;
        if render {
            write_ppm(
                &dir.join(format!("renders/{i:04}.ppm")),
                &p.tensor.slice_channels(0, types),
                0.5,
            )?;
            for c in 0..types {
                let path = dir.join(format!("renders/{i:04}_density_{c}.pgm"));
                write_pgm(&path, p.tensor.channel(types + c), store.grid, store.grid)?;
            }
        }
        entries.push(StoreEntry {
            id: p.id.clone(),
            cell_count: p.cell_count,
            category: p.category,
            tensor,
            models,
        });
    }
    let manifest = StoreManifest {
        command: "prepare".into(),
        cell_types: store.cell_types.clone(),
        grid: store.grid,
        channels: 2 * types,
        density: store.density,
        seed: store.seed,
        categorizer: store.categorizer.clone(),
        category_sizes: store.by_category().iter().map(Vec::len).collect(),
        patches: entries,
    };
    write_text(&dir.join(STORE_MANIFEST), &to_json(&manifest)?)
}

pub fn read_store(dir: &Path) -> Result<PreparedStore> {
    let manifest_path = dir.join(STORE_MANIFEST);
    if !manifest_path.is_file() {
        return Err(Error::arg(format!(
            "no prepared store at {} (run prepare first)",
            dir.display()
        )));
    }
    let manifest: StoreManifest = read_json(&manifest_path)?;
    let shape = Shape::new(manifest.channels, manifest.grid, manifest.grid);
    if manifest.channels != 2 * manifest.cell_types.len() {
        return Err(Error::Format(format!(
            "store declares {} channels for {} cell types",
            manifest.channels,
            manifest.cell_types.len()
        )));
    }
    let patches = manifest
        .patches
        .iter()
        .map(|e| {
            let tensor = read_lft1(&dir.join(&e.tensor))?;
            if tensor.shape() != shape {
                return Err(Error::ShapeMismatch {
                    expected: shape.to_string(),
                    actual: format!("{} in {}", tensor.shape(), e.tensor),
                });
            }
            if e.category >= manifest.categorizer.k() {
                return Err(Error::Format(format!(
                    "patch {} has category {} out of range",
                    e.id, e.category
                )));
            }
            Ok(PreparedPatch {
                id: e.id.clone(),
                cell_count: e.cell_count,
                category: e.category,
                tensor,
                models: read_json(&dir.join(&e.models))?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PreparedStore {
        cell_types: manifest.cell_types,
        grid: manifest.grid,
        density: manifest.density,
        seed: manifest.seed,
        categorizer: manifest.categorizer,
        patches,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl ChannelSummary {
    pub fn of(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        ChannelSummary { min, max, mean }
    }
}

/// One generated layout as written to the generated-batch file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSample {
    pub category: usize,
    /// Seed of the category's sampling run; the sample used stream `index`.
    pub seed: u64,
    pub index: usize,
    pub shape: Shape,
    /// Derasterized cells in grid coordinates.
    pub layout: PointPattern,
    pub density: Vec<ChannelSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub category: usize,
    pub training_patches: usize,
    pub generated: usize,
}

#[derive(Clone, Debug)]
pub struct GeneratedBatch {
    pub samples: Vec<GeneratedSample>,
    /// Raw sampled tensors (after undoing any rescaling), parallel to `samples`.
    pub tensors: Vec<ChannelStack>,
    pub categories: Vec<CategorySummary>,
}

/// Samples `per_category` layouts for every non-empty counting category.
///
/// Categories without training patches produce nothing and are reported with
/// zero generated layouts.
pub fn generate(
    store: &PreparedStore,
    config: &PipelineConfig,
    per_category: usize,
) -> Result<GeneratedBatch> {
    config.validate()?;
    let schedule = config.schedule()?;
    let shape = store.shape();
    let types = store.num_types();
    let mut sets = store.by_category();
    if config.rescale {
        sets.iter_mut().flatten().for_each(|x| {
            x.data_mut().iter_mut().for_each(|v| *v = 2.0 * *v - 1.0);
        });
    }
    let sizes: Vec<usize> = sets.iter().map(Vec::len).collect();
    let denoiser = EmpiricalBayesDenoiser::new(schedule.clone(), sets)?;

    let mut samples = Vec::new();
    let mut tensors = Vec::new();
    let mut categories = Vec::with_capacity(sizes.len());
    for (category, &size) in sizes.iter().enumerate() {
        let n = if size == 0 { 0 } else { per_category };
        let seed = derive_seed(config.seed, &[category as u64]);
        let raw = sample_layouts(&schedule, &denoiser, category, n, shape, seed)?;
        for (index, mut x) in raw.into_iter().enumerate() {
            if config.rescale {
                x.data_mut().iter_mut().for_each(|v| *v = (*v + 1.0) / 2.0);
            }
            let id = format!("gen-c{category}-{index:04}");
            let layout = derasterize_layout(&x.slice_channels(0, types), config.threshold, &id)?;
            let density = (types..2 * types)
                .map(|c| ChannelSummary::of(x.channel(c)))
                .collect();
            samples.push(GeneratedSample {
                category,
                seed,
                index,
                shape,
                layout,
                density,
            });
            tensors.push(x);
        }
        categories.push(CategorySummary {
            category,
            training_patches: size,
            generated: n,
        });
    }
    Ok(GeneratedBatch {
        samples,
        tensors,
        categories,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct GenerateManifest {
    command: String,
    cell_types: Vec<String>,
    per_category: usize,
    steps: usize,
    beta_start: f64,
    beta_end: f64,
    variance: VarianceRule,
    seed: u64,
    rescale: bool,
    threshold: f64,
    layouts: usize,
    categories: Vec<CategorySummary>,
    generated: String,
    renders: Vec<String>,
    tensors: Vec<String>,
}

/// Writes `generated.json`, one PPM per sample under `renders/`, optional
/// LFT1 dumps under `tensors/`, and `manifest.json`.
pub fn write_generated(
    store: &PreparedStore,
    config: &PipelineConfig,
    per_category: usize,
    batch: &GeneratedBatch,
    dir: &Path,
    dump_tensors: bool,
) -> Result<()> {
    let schedule = config.schedule()?;
    let types = store.num_types();
    create_dir(&dir.join("renders"))?;
    if dump_tensors {
        create_dir(&dir.join("tensors"))?;
    }
    write_text(&dir.join(GENERATED_FILE), &to_json(&batch.samples)?)?;
    let mut renders = Vec::with_capacity(batch.samples.len());
    let mut tensors = Vec::new();
    for (s, x) in batch.samples.iter().zip(&batch.tensors) {
        let stem = format!("c{}_{:04}", s.category, s.index);
        let render = format!("renders/{stem}.ppm");
        let clean = rasterize_layout(&s.layout, store.grid, store.grid, types)?;
        write_ppm(&dir.join(&render), &clean, 0.5)?;
        renders.push(render);
        if dump_tensors {
            let path = format!("tensors/{stem}.lft1");
            write_lft1(&dir.join(&path), x)?;
            tensors.push(path);
        }
    }
    let manifest = GenerateManifest {
        command: "generate".into(),
        cell_types: store.cell_types.clone(),
        per_category,
        steps: schedule.steps(),
        beta_start: schedule.beta(1),
        beta_end: schedule.beta(schedule.steps()),
        variance: schedule.rule(),
        seed: config.seed,
        rescale: config.rescale,
        threshold: config.threshold,
        layouts: batch.samples.len(),
        categories: batch.categories.clone(),
        generated: GENERATED_FILE.into(),
        renders,
        tensors,
    };
    write_text(&dir.join(STORE_MANIFEST), &to_json(&manifest)?)
}

pub fn read_generated(path: &Path) -> Result<Vec<GeneratedSample>> {
    let path = if path.is_dir() {
        path.join(GENERATED_FILE)
    } else {
        path.to_path_buf()
    };
    read_json(&path)
}

/// Layout channels of every dataset patch on a `grid x grid` raster.
pub fn dataset_layouts(dataset: &Dataset, grid: usize) -> Result<Vec<ChannelStack>> {
    let types = dataset.num_cell_types();
    dataset
        .patches
        .par_iter()
        .map(|p| rasterize_layout(p, grid, grid, types))
        .collect()
}

/// Layout channels of a generate output for scoring.
///
/// `path` is a generate output directory or a generated-batch file. When the
/// directory's manifest lists raw tensor dumps, their layout channels are
/// used, since derasterization merges touching markers; otherwise the
/// derasterized points are rasterized again.
pub fn load_generated_layouts(path: &Path) -> Result<Vec<ChannelStack>> {
    let manifest_path = path.join(STORE_MANIFEST);
    if path.is_dir() && manifest_path.is_file() {
        let manifest: GenerateManifest = read_json(&manifest_path)?;
        if manifest.layouts > 0 && manifest.tensors.len() == manifest.layouts {
            return manifest
                .tensors
                .iter()
                .map(|t| {
                    let x = read_lft1(&path.join(t))?;
                    Ok(x.slice_channels(0, x.channels() / 2))
                })
                .collect();
        }
    }
    sample_layouts_of(&read_generated(path)?)
}

/// Layout channels of generated samples, re-rasterized from their points.
pub fn sample_layouts_of(samples: &[GeneratedSample]) -> Result<Vec<ChannelStack>> {
    samples
        .par_iter()
        .map(|s| {
            let types = s.shape.channels / 2;
            rasterize_layout(&s.layout, s.shape.height, s.shape.width, types)
        })
        .collect()
}

/// Layout channels of the raw sampled tensors.
pub fn batch_layouts(batch: &GeneratedBatch) -> Vec<ChannelStack> {
    batch
        .tensors
        .iter()
        .map(|x| x.slice_channels(0, x.channels() / 2))
        .collect()
}

/// Spatial-FID report of `generated` against `reference` layouts.
pub fn evaluate(
    reference: &[ChannelStack],
    generated: &[ChannelStack],
    levels: usize,
) -> Result<MetricReport> {
    metric_report(reference, generated, &PyramidExtractor::new(levels))
}

pub fn write_report(report: &MetricReport, path: &Path) -> Result<PathBuf> {
    let path = if path.is_dir() {
        path.join("report.json")
    } else {
        path.to_path_buf()
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_text(&path, &to_json(report)?)?;
    Ok(path)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Bandwidth,
    GmmComponents,
    KCategories,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Bandwidth => "bandwidth",
            SweepAxis::GmmComponents => "gmm_components",
            SweepAxis::KCategories => "k_categories",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "bandwidth" => Ok(SweepAxis::Bandwidth),
            "gmm_components" => Ok(SweepAxis::GmmComponents),
            "k_categories" => Ok(SweepAxis::KCategories),
            _ => Err(Error::arg(format!(
                "unknown sweep axis {s:?} (expected bandwidth, gmm_components or k_categories)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub spatial_fid: f64,
}

fn whole(axis: SweepAxis, v: f64) -> Result<usize> {
    if v.fract() == 0.0 && (1.0..=1e6).contains(&v) {
        Ok(v as usize)
    } else {
        Err(Error::arg(format!(
            "{axis} values must be positive integers, got {v}"
        )))
    }
}

/// Configurations for each sweep row, the adaptive setting first.
pub fn sweep_configs(
    base: &PipelineConfig,
    axis: SweepAxis,
    values: &[f64],
) -> Result<Vec<(String, PipelineConfig)>> {
    let mut rows = Vec::with_capacity(values.len() + 1);
    let mut push = |label: String, f: &dyn Fn(&mut PipelineConfig)| {
        let mut cfg = base.clone();
        f(&mut cfg);
        rows.push((label, cfg));
    };
    match axis {
        SweepAxis::Bandwidth => {
            push("scott".into(), &|c| {
                c.density.kind = DensityKind::Kde;
                c.density.bandwidth = None;
            });
            for &v in values {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::arg(format!(
                        "bandwidth values must be positive, got {v}"
                    )));
                }
                push(v.to_string(), &|c| {
                    c.density.kind = DensityKind::Kde;
                    c.density.bandwidth = Some(v);
                });
            }
        }
        SweepAxis::GmmComponents => {
            push("bic".into(), &|c| {
                c.density.kind = DensityKind::Gmm;
                c.density.gmm_components = DensityConfig::default().gmm_components;
            });
            for &v in values {
                let m = whole(axis, v)?;
                push(m.to_string(), &|c| {
                    c.density.kind = DensityKind::Gmm;
                    c.density.gmm_components = ComponentChoice::Fixed(m);
                });
            }
        }
        SweepAxis::KCategories => {
            push("default".into(), &|c| c.k = base.k);
            for &v in values {
                let k = whole(axis, v)?;
                push(k.to_string(), &|c| c.k = k);
            }
        }
    }
    for (_, cfg) in &rows {
        cfg.validate()?;
    }
    Ok(rows)
}

/// Re-runs prepare, generate and evaluate for each row of the sweep. Scores
/// are against `reference` when given, else against the training layouts.
pub fn sweep(
    dataset: &Dataset,
    reference: Option<&Dataset>,
    base: &PipelineConfig,
    axis: SweepAxis,
    values: &[f64],
    per_category: usize,
) -> Result<Vec<SweepRow>> {
    let rows = sweep_configs(base, axis, values)?;
    dataset.validate()?;
    let reference_layouts = dataset_layouts(reference.unwrap_or(dataset), base.grid)?;
    rows.into_iter()
        .map(|(value, cfg)| {
            let store = prepare(dataset, &cfg)?;
            let batch = generate(&store, &cfg, per_category)?;
            let generated = batch_layouts(&batch);
            let report = evaluate(&reference_layouts, &generated, cfg.levels)?;
            Ok(SweepRow {
                value,
                spatial_fid: report.spatial_fid,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{clustered_dataset, SynthConfig};

    fn small_config() -> PipelineConfig {
        PipelineConfig {
            grid: 16,
            k: 2,
            steps: 20,
            levels: 3,
            ..PipelineConfig::default()
        }
    }

    fn small_dataset(patches: usize) -> Dataset {
        clustered_dataset(&SynthConfig {
            patches,
            width: 64,
            height: 64,
            min_cells: 4,
            max_cells: 12,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        for bad in [
            PipelineConfig {
                k: 0,
                ..small_config()
            },
            PipelineConfig {
                grid: 18,
                ..small_config()
            },
            PipelineConfig {
                beta_start: Some(0.1),
                ..small_config()
            },
            PipelineConfig {
                beta_start: Some(0.2),
                beta_end: Some(0.1),
                ..small_config()
            },
            PipelineConfig {
                threshold: 0.0,
                ..small_config()
            },
            PipelineConfig {
                steps: 0,
                ..small_config()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn prepare_builds_joint_tensors() {
        let ds = small_dataset(10);
        let store = prepare(&ds, &small_config()).unwrap();
        assert_eq!(store.patches.len(), 10);
        for p in &store.patches {
            assert_eq!(p.tensor.shape(), Shape::new(6, 16, 16));
            assert_eq!(p.models.len(), 3);
            for c in 3..6 {
                let max = p.tensor.channel(c).iter().copied().fold(0.0, f64::max);
                assert!(max == 1.0 || max == 0.0);
            }
        }
        assert_eq!(store.by_category().iter().map(Vec::len).sum::<usize>(), 10);
    }

    #[test]
    fn density_none_zeroes_density_channels() {
        let mut cfg = small_config();
        cfg.density.kind = DensityKind::None;
        let store = prepare(&small_dataset(4), &cfg).unwrap();
        for p in &store.patches {
            assert!(p.tensor.data()[3 * 256..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn store_roundtrip() {
        let store = prepare(&small_dataset(6), &small_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_store(&store, dir.path(), true).unwrap();
        assert_eq!(read_store(dir.path()).unwrap(), store);
        assert!(read_store(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn generate_counts_and_rescale() {
        let store = prepare(&small_dataset(8), &small_config()).unwrap();
        for rescale in [false, true] {
            let cfg = PipelineConfig {
                rescale,
                ..small_config()
            };
            let batch = generate(&store, &cfg, 3).unwrap();
            assert_eq!(batch.samples.len(), 6);
            assert!(batch.categories.iter().all(|c| c.generated == 3));
            for s in &batch.samples {
                assert_eq!(s.layout.width, 16);
                s.layout.validate(3).unwrap();
            }
        }
        let empty = generate(&store, &small_config(), 0).unwrap();
        assert!(empty.samples.is_empty());
    }

    #[test]
    fn sweep_rows() {
        let rows = sweep_configs(&small_config(), SweepAxis::Bandwidth, &[0.05, 0.1]).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].0, "scott");
        assert_eq!(rows[0].1.density.bandwidth, None);
        assert_eq!(rows[2].1.density.bandwidth, Some(0.1));
        assert!(sweep_configs(&small_config(), SweepAxis::KCategories, &[2.5]).is_err());
        assert!(sweep_configs(&small_config(), SweepAxis::Bandwidth, &[-1.0]).is_err());
        assert_eq!(
            "k-categories".parse::<SweepAxis>().unwrap(),
            SweepAxis::KCategories
        );
    }
}
