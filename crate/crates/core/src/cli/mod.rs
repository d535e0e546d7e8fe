//! Command-line front end: `generate`, `annotate`, `estimate`, `evaluate`,
//! `report` and `bench`.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime failure.

pub mod bench;
pub mod config;
pub mod estimate;
pub mod evaluate;
pub mod noise;
pub mod report;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bopstore::{self, list_scenes, read_models_info};
use crate::evalkit::{comparison_csv, comparison_text};
use crate::posesolve::FusionStrategy;
use crate::scenegen::{self, annotate_scene, read_layout, GenerationStats, ModelLibrary};
use config::{DisparitySource, RunConfig};

pub const INCOMPLETE_MARKER: &str = ".incomplete";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    bopstore::write_atomic(path, text.as_bytes()).map_err(|e| CliError::Runtime(e.to_string()))
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

#[derive(Debug, Parser)]
#[command(name = "stereo6d", version, about = "Stereo 6D pose estimation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: config, then $STEREO6D_WORKERS, then all cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic stereo dataset.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Dataset root.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        scenes: Option<u32>,
        #[arg(long)]
        views: Option<u32>,
    },
    /// Recompute images, features and labels from stored scene layouts.
    Annotate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Run pose solvers over a dataset.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Output estimates JSON.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated strategy names.
        #[arg(long, value_delimiter = ',')]
        strategy: Vec<FusionStrategy>,
        #[arg(long)]
        noise_px: Option<f64>,
        #[arg(long)]
        noise_obj_mm: Option<f64>,
        #[arg(long)]
        outlier_fraction: Option<f64>,
        #[arg(long)]
        disparity_sigma: Option<f64>,
        /// gt | block-match
        #[arg(long)]
        disparity_source: Option<DisparitySource>,
        #[arg(long)]
        max_correspondences: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score estimates against ground truth.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        estimates: PathBuf,
        /// Output directory for evaluation.json, report.csv and report.txt.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Merge evaluations into comparison tables and plots.
    Report {
        /// evaluation.json files.
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// pixel-sigma | object-sigma | outlier-fraction | disparity-sigma
        #[arg(long, default_value = "pixel-sigma")]
        x_axis: String,
    },
    /// Measure annotation throughput.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        objects: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        /// Previously recorded result; fail below the configured fraction of it.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Write the result here.
        #[arg(long)]
        record: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::Annotate { .. } => "annotate",
            Command::Estimate { .. } => "estimate",
            Command::Evaluate { .. } => "evaluate",
            Command::Report { .. } => "report",
            Command::Bench { .. } => "bench",
        }
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn load(common: &Common) -> Result<(RunConfig, usize), CliError> {
    let cfg = RunConfig::load(common.config.as_deref())?;
    let workers = cfg.resolve_workers(common.workers)?;
    Ok((cfg, workers))
}

/// Runs `body` with an `.incomplete` marker in `dir` that is removed only on
/// success.
fn guarded<T>(dir: &Path, body: impl FnOnce() -> Result<T, CliError>) -> Result<T, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    let marker = dir.join(INCOMPLETE_MARKER);
    fs::write(&marker, b"").map_err(|e| CliError::Runtime(format!("{}: {e}", marker.display())))?;
    let out = body()?;
    fs::remove_file(&marker).map_err(|e| CliError::Runtime(format!("{}: {e}", marker.display())))?;
    Ok(out)
}

fn print_stats(stats: &GenerationStats) {
    println!(
        "{} scenes, {} frames, {} labels kept, {} removed, mean visibility {:.3}",
        stats.scenes, stats.frames, stats.labels_kept, stats.labels_removed, stats.mean_visibility
    );
}

fn generate(common: &Common, out: &Path, seed: Option<u64>, scenes: Option<u32>, views: Option<u32>) -> Result<(), CliError> {
    let (cfg, workers) = load(common)?;
    let mut gen = cfg.generate.clone();
    if let Some(s) = seed.or(cfg.seed) {
        gen.seed = s;
    }
    if let Some(s) = scenes {
        gen.scenes = s;
    }
    if let Some(v) = views {
        gen.views_per_scene = v;
    }
    gen.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let stats = guarded(out, || {
        pool(workers)?.install(|| scenegen::generate_dataset(&gen, out).map_err(|e| CliError::Runtime(e.to_string())))
    })?;
    print_stats(&stats);
    Ok(())
}

fn annotate(common: &Common, dataset: &Path) -> Result<(), CliError> {
    let (_, workers) = load(common)?;
    let v = |e: String| CliError::Validation(e);
    let info = read_models_info(dataset).map_err(|e| v(e.to_string()))?;
    let ids = list_scenes(dataset).map_err(|e| v(e.to_string()))?;
    let layouts = ids
        .iter()
        .map(|&id| read_layout(dataset, id).map_err(|e| v(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    if layouts.is_empty() {
        return Err(v(format!("{}: no scenes found", dataset.display())));
    }
    let stats = guarded(dataset, || {
        pool(workers)?.install(|| {
            let per: Vec<_> = layouts
                .par_iter()
                .map(|layout| {
                    let lib = ModelLibrary::from_info(&info, layout.region_count)?;
                    annotate_scene(dataset, layout, &lib)
                })
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok(GenerationStats::from_scenes(&per))
        })
    })?;
    write_json(&dataset.join("annotation_stats.json"), &stats)?;
    print_stats(&stats);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_estimate(
    common: &Common,
    dataset: &Path,
    out: &Path,
    strategy: &[FusionStrategy],
    noise_px: Option<f64>,
    noise_obj_mm: Option<f64>,
    outlier_fraction: Option<f64>,
    disparity_sigma: Option<f64>,
    disparity_source: Option<DisparitySource>,
    max_correspondences: Option<usize>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let (mut cfg, workers) = load(common)?;
    let e = &mut cfg.estimate;
    if !strategy.is_empty() {
        e.strategies = strategy.to_vec();
    }
    e.noise.pixel_sigma = noise_px.unwrap_or(e.noise.pixel_sigma);
    e.noise.object_sigma_mm = noise_obj_mm.unwrap_or(e.noise.object_sigma_mm);
    e.noise.outlier_fraction = outlier_fraction.unwrap_or(e.noise.outlier_fraction);
    e.noise.disparity_sigma = disparity_sigma.unwrap_or(e.noise.disparity_sigma);
    e.disparity_source = disparity_source.unwrap_or(e.disparity_source);
    e.max_correspondences = max_correspondences.unwrap_or(e.max_correspondences);
    let seed = seed.or(cfg.seed).unwrap_or(0);
    cfg.validate()?;
    let file = pool(workers)?.install(|| estimate::estimate_dataset(dataset, &cfg.estimate, &cfg.solver, seed))?;
    estimate::write_estimates(out, &file)?;
    let failed = file.records.iter().filter(|r| r.error.is_some()).count();
    println!("{} estimates written to {} ({failed} failed)", file.records.len(), out.display());
    Ok(())
}

fn run_evaluate(common: &Common, dataset: &Path, estimates: &Path, out: &Path, tau: Option<f64>) -> Result<(), CliError> {
    let (cfg, _) = load(common)?;
    let tau = tau.unwrap_or(cfg.evaluate.tau);
    if !(tau > 0.0) {
        return Err(CliError::Validation(format!("tau must be positive, got {tau}")));
    }
    let est = estimate::read_estimates(estimates)?;
    let eval = evaluate::evaluate(dataset, &est, tau)?;
    let reports: Vec<_> = eval.strategies.values().map(|s| s.report.clone()).collect();
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    write_json(&out.join("evaluation.json"), &eval)?;
    write_text(&out.join("report.csv"), &comparison_csv(&reports))?;
    let text = comparison_text(&reports);
    write_text(&out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn run_report(inputs: &[PathBuf], out: &Path, x_axis: &str) -> Result<(), CliError> {
    let axis = report::NoiseAxis::parse(x_axis).map_err(CliError::Validation)?;
    let runs: Vec<evaluate::Evaluation> = inputs.iter().map(|p| read_json(p)).collect::<Result<_, _>>()?;
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    write_text(&out.join("comparison.csv"), &report::runs_csv(&runs))?;
    let mut text = String::new();
    for (path, run) in inputs.iter().zip(&runs) {
        let n = &run.noise;
        text.push_str(&format!(
            "== {} (pixel_sigma {}, object_sigma_mm {}, outlier_fraction {}, disparity_sigma {})\n",
            path.display(),
            n.pixel_sigma,
            n.object_sigma_mm,
            n.outlier_fraction,
            n.disparity_sigma
        ));
        let reports: Vec<_> = run.strategies.values().map(|s| s.report.clone()).collect();
        text.push_str(&comparison_text(&reports));
        text.push('\n');
    }
    write_text(&out.join("comparison.txt"), &text)?;
    let charts: [(&str, &str, &str, fn(&evaluate::StrategySummary) -> Option<f64>); 3] = [
        ("recall_vs_noise.svg", "ADD(-S) recall vs noise", "overall recall [%]", |s| Some(s.report.overall)),
        ("error_vs_noise.svg", "Mean ADD(-S) vs noise", "mean ADD(-S) [mm]", |s| s.mean_error_mm),
        ("dz_vs_noise.svg", "Median depth error vs noise", "median |dz| [mm]", |s| s.median_abs_dz_mm),
    ];
    for (file, title, y_label, f) in charts {
        let data = report::series(&runs, axis, f);
        write_text(&out.join(file), &report::line_chart(title, axis.label(), y_label, &data))?;
    }
    print!("{text}");
    Ok(())
}

fn run_bench(
    common: &Common,
    frames: Option<usize>,
    objects: Option<u32>,
    seed: Option<u64>,
    baseline: Option<&Path>,
    record: Option<&Path>,
) -> Result<(), CliError> {
    let (cfg, workers) = load(common)?;
    cfg.validate()?;
    let frames = frames.unwrap_or(cfg.bench.frames);
    let objects = objects.unwrap_or(cfg.bench.objects);
    let result = bench::run_bench(frames, objects, workers, seed.or(cfg.seed).unwrap_or(0))?;
    println!(
        "{} frames ({}x{}, {} objects) on {} workers: {:.3} s, {:.2} frames/s",
        result.frames, result.width, result.height, result.objects, result.workers, result.seconds, result.frames_per_sec
    );
    if let Some(path) = record {
        write_json(path, &result)?;
    }
    if let Some(path) = baseline {
        let base: bench::BenchResult = read_json(path)?;
        bench::check_gate(&result, &base, cfg.bench.gate)?;
    }
    Ok(())
}

fn dispatch(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Generate {
            common,
            out,
            seed,
            scenes,
            views,
        } => generate(common, out, *seed, *scenes, *views),
        Command::Annotate { common, dataset } => annotate(common, dataset),
        Command::Estimate {
            common,
            dataset,
            out,
            strategy,
            noise_px,
            noise_obj_mm,
            outlier_fraction,
            disparity_sigma,
            disparity_source,
            max_correspondences,
            seed,
        } => run_estimate(
            common,
            dataset,
            out,
            strategy,
            *noise_px,
            *noise_obj_mm,
            *outlier_fraction,
            *disparity_sigma,
            *disparity_source,
            *max_correspondences,
            *seed,
        ),
        Command::Evaluate {
            common,
            dataset,
            estimates,
            out,
            tau,
        } => run_evaluate(common, dataset, estimates, out, *tau),
        Command::Report { inputs, out, x_axis } => run_report(inputs, out, x_axis),
        Command::Bench {
            common,
            frames,
            objects,
            seed,
            baseline,
            record,
        } => run_bench(common, *frames, *objects, *seed, baseline.as_deref(), record.as_deref()),
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("stereo6d {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
