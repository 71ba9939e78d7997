//! `ddpp bench`: quality, sampling and histogram studies.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use serde::Serialize;
use serde_json::json;

use ddpp_core::bench::{
    draw_instance, fit_log_threshold, invalid_fraction, median, run_pipeline, run_quality_study, run_sampling_study,
    threshold_n_meas, weight_histogram, write_csv, Backend, Manifest, PipelineConfig, QualityStudy,
};
use ddpp_core::fixed::Fixed;
use ddpp_core::instances::DdppInstance;
use ddpp_core::schedgraph::build_graph;

use crate::files::{read_json, write_json, UsageError};

#[derive(Args)]
pub struct BenchArgs {
    #[command(subcommand)]
    study: Study,
}

#[derive(Subcommand)]
enum Study {
    /// Pipeline against exact and baseline drone counts, one row per instance.
    Quality(QualityArgs),
    /// Drone-count ratio against the number of shots.
    Sampling(SamplingArgs),
    /// Raw and corrected samples per Hamming weight for one pipeline run.
    Histogram(HistogramArgs),
}

/// Pipeline settings shared by every study.
#[derive(Args)]
struct PipelineArgs {
    /// Base configuration as JSON; flags given explicitly override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    backend: Option<Backend>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    /// Solver time limit per run in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// CSV output; the manifest goes next to it as `<stem>.manifest.json`.
    #[arg(long)]
    out: PathBuf,
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg: PipelineConfig =
            self.config.as_deref().map_or_else(|| Ok(PipelineConfig::default()), read_json)?;
        cfg.backend = self.backend.unwrap_or(cfg.backend);
        cfg.n_meas = self.shots.unwrap_or(cfg.n_meas);
        cfg.noise_rate = self.noise.unwrap_or(cfg.noise_rate);
        if let Some(t) = self.time_limit {
            cfg.time_limit_s = Some(t);
        }
        if cfg.n_meas == 0 {
            return Err(UsageError("--shots must be at least 1".into()).into());
        }
        Ok(cfg)
    }
}

/// Where the instance comes from: a file, or drawn like the quality study.
#[derive(Args)]
struct InstanceArgs {
    #[arg(long, conflicts_with_all = ["sizes", "battery"])]
    inst: Option<PathBuf>,
    /// Instance sizes to draw when no file is given.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long, default_value = "90")]
    battery: Fixed,
    #[arg(long, default_value_t = 0)]
    instance_seed: u64,
}

impl InstanceArgs {
    fn instances(&self) -> Result<Vec<DdppInstance>> {
        if let Some(path) = &self.inst {
            return Ok(vec![DdppInstance::load(path).with_context(|| format!("reading instance {}", path.display()))?]);
        }
        if self.sizes.is_empty() {
            return Err(UsageError("give --inst or --sizes".into()).into());
        }
        Ok(self
            .sizes
            .iter()
            .map(|&n| draw_instance(n, self.battery, self.instance_seed, 0))
            .collect::<Result<_, _>>()?)
    }
}

#[derive(Args)]
struct QualityArgs {
    #[arg(long, value_delimiter = ',', default_value = "5,8,10,12")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    per_size: usize,
    #[arg(long, default_value = "90")]
    battery: Fixed,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct SamplingArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, value_delimiter = ',', default_value = "10,20,50,100,200,500,1000")]
    n_meas: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct HistogramArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

fn git_hash() -> Option<String> {
    let out = std::process::Command::new("git").args(["rev-parse", "HEAD"]).output().ok()?;
    out.status.success().then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
}

fn manifest_path(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().map_or_else(|| "results".into(), |s| s.to_string_lossy().into_owned());
    csv.with_file_name(format!("{stem}.manifest.json"))
}

fn write_outputs<T: Serialize, C: Serialize>(
    out: &Path,
    study: &str,
    config: &C,
    seeds: Vec<u64>,
    rows: &[T],
    summary: serde_json::Value,
) -> Result<()> {
    let file = File::create(out).with_context(|| format!("writing {}", out.display()))?;
    write_csv(rows, BufWriter::new(file))?;
    let mut manifest = Manifest::new(study, config, seeds, rows.len(), git_hash());
    manifest.summary = summary;
    write_json(&manifest_path(out), &manifest)?;
    println!("{}", serde_json::to_string_pretty(&manifest.summary)?);
    Ok(())
}

fn quality(a: QualityArgs) -> Result<()> {
    let study = QualityStudy {
        sizes: a.sizes,
        instances_per_size: a.per_size,
        battery: a.battery,
        seed: a.seed,
        pipeline: a.pipeline.config()?,
    };
    let rows = run_quality_study(&study);
    let per_size: Vec<_> = study
        .sizes
        .iter()
        .map(|&n| {
            let rows: Vec<_> = rows.iter().filter(|r| r.size == n).collect();
            let ok: Vec<_> = rows.iter().filter(|r| r.error.is_none()).collect();
            json!({
                "size": n,
                "instances": rows.len(),
                "errors": rows.len() - ok.len(),
                "median_rho": median(&ok.iter().filter_map(|r| r.rho).collect::<Vec<_>>()),
                "median_baseline_rho": median(&ok.iter().filter_map(|r| r.baseline_rho).collect::<Vec<_>>()),
                "reference_hits": ok.iter().filter(|r| r.delta == Some(0)).count(),
            })
        })
        .collect();
    let seeds = rows.iter().filter_map(|r| r.instance_seed).collect();
    write_outputs(&a.pipeline.out, "quality", &study, seeds, &rows, json!({ "per_size": per_size }))
}

fn sampling(a: SamplingArgs) -> Result<()> {
    let cfg = a.pipeline.config()?;
    let instances = a.instance.instances()?;
    let mut rows = Vec::new();
    let mut thresholds = Vec::new();
    for inst in &instances {
        let study = run_sampling_study(inst, &a.n_meas, a.reps, a.seed, &cfg)?;
        let threshold = threshold_n_meas(&study);
        thresholds.push(json!({ "n": inst.n(), "instance_seed": inst.seed(), "threshold_n_meas": threshold }));
        rows.extend(study);
    }
    let points: Vec<(usize, usize)> = instances
        .iter()
        .zip(&thresholds)
        .filter_map(|(inst, t)| Some((inst.n(), t["threshold_n_meas"].as_u64()? as usize)))
        .collect();
    let summary = json!({ "thresholds": thresholds, "fit": fit_log_threshold(&points) });
    let config = json!({ "pipeline": cfg, "n_meas": a.n_meas, "repetitions": a.reps, "seed": a.seed });
    let seeds = instances.iter().filter_map(DdppInstance::seed).chain([a.seed]).collect();
    write_outputs(&a.pipeline.out, "sampling", &config, seeds, &rows, summary)
}

fn histogram(a: HistogramArgs) -> Result<()> {
    let cfg = a.pipeline.config()?;
    let instances = a.instance.instances()?;
    let [inst] = instances.as_slice() else {
        return Err(UsageError("the histogram study takes a single instance".into()).into());
    };
    let run = run_pipeline(inst, &cfg, a.seed)?;
    let rows = weight_histogram(&run.raw, &run.pool, &build_graph(inst))?;
    let summary = json!({
        "raw_invalid_fraction": invalid_fraction(&rows, false),
        "corrected_invalid_fraction": invalid_fraction(&rows, true),
        "drones": run.solution.drones,
        "target_weight": run.target_weight,
    });
    let config = json!({ "pipeline": cfg, "seed": a.seed });
    let seeds = inst.seed().into_iter().chain([a.seed]).collect();
    write_outputs(&a.pipeline.out, "histogram", &config, seeds, &rows, summary)
}

pub fn run(a: BenchArgs) -> Result<()> {
    match a.study {
        Study::Quality(a) => quality(a),
        Study::Sampling(a) => sampling(a),
        Study::Histogram(a) => histogram(a),
    }
}
