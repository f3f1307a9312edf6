use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use layoutforge_core::density::{ComponentChoice, DensityConfig, DensityKind};
use layoutforge_core::diffusion::{VarianceRule, DEFAULT_STEPS};
use layoutforge_core::fid::MetricReport;
use layoutforge_core::layout::{load_dataset, save_dataset};
use layoutforge_core::pipeline::{
    dataset_layouts, evaluate, generate, load_generated_layouts, prepare, read_store, sweep,
    sweep_configs, write_generated, write_report, write_store, PipelineConfig, SweepAxis, SweepRow,
    STORE_MANIFEST, SWEEP_FILE,
};
use layoutforge_core::synth::{clustered_dataset, uniform_like, SynthConfig};

const THREADS_VAR: &str = "LAYOUTFORGE_THREADS";

#[derive(Parser)]
#[command(
    name = "layoutforge",
    version,
    about = "Density-guided diffusion for typed cell layouts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize a dataset, fit per-type densities and write a tensor store.
    Prepare(PrepareArgs),
    /// Sample layouts from a prepared store.
    Generate(GenerateArgs),
    /// Score generated layouts against a dataset with spatial-FID.
    Evaluate(EvaluateArgs),
    /// Re-run prepare, generate and evaluate over one parameter.
    Sweep(SweepArgs),
    /// Write a synthetic clustered dataset.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct PrepareOpts {
    /// Raster size (square grid).
    #[arg(long, default_value_t = 64)]
    grid: usize,
    /// Number of counting categories.
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value = "gmm", value_parser = parse_kind)]
    density: DensityKind,
    /// Fixed KDE bandwidth in unit-square coordinates (default: Scott's rule).
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Fixed GMM component count (default: BIC over 1..=10).
    #[arg(long)]
    components: Option<usize>,
}

#[derive(Args, Clone)]
struct GenerateOpts {
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    steps: usize,
    #[arg(long, requires = "beta_end")]
    beta_start: Option<f64>,
    #[arg(long, requires = "beta_start")]
    beta_end: Option<f64>,
    #[arg(long, default_value = "beta-tilde", value_parser = parse_variance)]
    variance: VarianceRule,
    /// Layouts per counting category.
    #[arg(long, default_value_t = 200)]
    per_category: usize,
    /// Diffuse values mapped to [-1, 1] instead of [0, 1].
    #[arg(long)]
    rescale: bool,
    /// Foreground threshold for derasterizing samples.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    opts: PrepareOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write PPM/PGM renders of every training tensor.
    #[arg(long)]
    render: bool,
}

#[derive(Args)]
struct GenerateArgs {
    /// Prepared store directory.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    opts: GenerateOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the raw LFT1 tensor dumps.
    #[arg(long)]
    no_tensors: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Training dataset JSON.
    #[arg(long)]
    dataset: PathBuf,
    /// Generate output directory or generated-batch file.
    #[arg(long)]
    generated: PathBuf,
    /// Score against this dataset instead of the training set.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Report path (a directory gets report.json).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    levels: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = parse_axis)]
    axis: SweepAxis,
    /// Comma-separated values for the swept parameter.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[command(flatten)]
    prepare: PrepareOpts,
    #[command(flatten)]
    generate: GenerateOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    levels: usize,
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset JSON.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 80)]
    patches: usize,
    #[arg(long, default_value_t = 256)]
    size: u32,
    #[arg(long, default_value_t = 15)]
    min_cells: usize,
    #[arg(long, default_value_t = 60)]
    max_cells: usize,
    /// Scatter cells uniformly instead of clustering them.
    #[arg(long)]
    uniform: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_kind(s: &str) -> Result<DensityKind, String> {
    s.parse()
        .map_err(|e: layoutforge_core::Error| e.to_string())
}

fn parse_variance(s: &str) -> Result<VarianceRule, String> {
    s.parse()
        .map_err(|e: layoutforge_core::Error| e.to_string())
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    s.parse()
        .map_err(|e: layoutforge_core::Error| e.to_string())
}

fn build_config(
    prep: Option<&PrepareOpts>,
    gen: Option<&GenerateOpts>,
    seed: u64,
    levels: usize,
) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        seed,
        levels,
        ..PipelineConfig::default()
    };
    if let Some(p) = prep {
        cfg.grid = p.grid;
        cfg.k = p.k;
        cfg.density = DensityConfig {
            kind: p.density,
            bandwidth: p.bandwidth,
            gmm_components: p
                .components
                .map_or(cfg.density.gmm_components, ComponentChoice::Fixed),
            ..cfg.density
        };
    }
    if let Some(g) = gen {
        cfg.steps = g.steps;
        cfg.beta_start = g.beta_start;
        cfg.beta_end = g.beta_end;
        cfg.variance = g.variance;
        cfg.rescale = g.rescale;
        cfg.threshold = g.threshold;
    }
    cfg
}

/// Levels must also divide the grid; a grid that a deeper pyramid cannot
/// split falls back to the deepest level count that fits.
fn fitting_levels(grid: usize, levels: usize) -> usize {
    (1..=levels)
        .rev()
        .find(|l| grid.is_multiple_of(1usize << (l - 1)))
        .unwrap_or(1)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_VAR} must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_prepare(args: PrepareArgs) -> Result<()> {
    let cfg = build_config(
        Some(&args.opts),
        None,
        args.seed,
        fitting_levels(args.opts.grid, 4),
    );
    cfg.validate()?;
    let dataset = load_dataset(&args.dataset)?;
    let store = prepare(&dataset, &cfg)?;
    write_store(&store, &args.out, args.render)?;
    println!(
        "prepared {} patches into {} ({} channels, {} categories)",
        store.patches.len(),
        args.out.display(),
        store.shape().channels,
        store.categorizer.k()
    );
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let store = read_store(&args.dataset)?;
    let mut cfg = build_config(
        None,
        Some(&args.opts),
        args.seed,
        fitting_levels(store.grid, 4),
    );
    cfg.grid = store.grid;
    cfg.k = store.categorizer.k();
    cfg.validate()?;
    let batch = generate(&store, &cfg, args.opts.per_category)?;
    write_generated(
        &store,
        &cfg,
        args.opts.per_category,
        &batch,
        &args.out,
        !args.no_tensors,
    )?;
    println!(
        "generated {} layouts into {}",
        batch.samples.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let train = load_dataset(&args.dataset)?;
    let reference = match &args.reference {
        Some(p) => load_dataset(p)?,
        None => train,
    };
    let generated = load_generated_layouts(&args.generated)?;
    let Some(first) = generated.first() else {
        bail!("no generated layouts in {}", args.generated.display());
    };
    if first.channels() != reference.num_cell_types() {
        bail!(
            "generated layouts have {} cell types but the dataset has {}",
            first.channels(),
            reference.num_cell_types()
        );
    }
    let reference_layouts = dataset_layouts(&reference, first.height())?;
    let report: MetricReport = evaluate(&reference_layouts, &generated, args.levels)?;
    let path = write_report(&report, &args.out)?;
    println!(
        "spatial-FID {:.6} written to {}",
        report.spatial_fid,
        path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SweepManifest<'a> {
    command: &'static str,
    axis: SweepAxis,
    values: &'a [f64],
    config: &'a PipelineConfig,
    per_category: usize,
    rows: &'a [SweepRow],
    table: &'static str,
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let cfg = build_config(
        Some(&args.prepare),
        Some(&args.generate),
        args.seed,
        args.levels,
    );
    sweep_configs(&cfg, args.axis, &args.values)?;
    let dataset = load_dataset(&args.dataset)?;
    let reference = args.reference.as_deref().map(load_dataset).transpose()?;
    let rows = sweep(
        &dataset,
        reference.as_ref(),
        &cfg,
        args.axis,
        &args.values,
        args.generate.per_category,
    )?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let csv_path = args.out.join(SWEEP_FILE);
    let mut writer = csv::Writer::from_path(&csv_path)
        .with_context(|| format!("writing {}", csv_path.display()))?;
    for row in &rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    let manifest = SweepManifest {
        command: "sweep",
        axis: args.axis,
        values: &args.values,
        config: &cfg,
        per_category: args.generate.per_category,
        rows: &rows,
        table: SWEEP_FILE,
    };
    write_json(&args.out.join(STORE_MANIFEST), &manifest)?;
    for row in &rows {
        println!("{}\t{:.6}", row.value, row.spatial_fid);
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        patches: args.patches,
        width: args.size,
        height: args.size,
        min_cells: args.min_cells,
        max_cells: args.max_cells,
        seed: args.seed,
        ..SynthConfig::default()
    };
    let mut dataset = clustered_dataset(&cfg)?;
    if args.uniform {
        dataset = uniform_like(&dataset, args.seed);
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    save_dataset(&dataset, &args.out)?;
    println!(
        "wrote {} patches to {}",
        dataset.patches.len(),
        args.out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
