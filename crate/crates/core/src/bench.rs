//! Experiment harness: full pipeline runs, the quality and sampling
//! studies, weight histograms, and run manifests.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::correction::{build_pool, CorrectionError, FeasiblePool};
use crate::embedding::{embed_graph, AtomRegister, EmbeddingError, HardwareLimits};
use crate::emulator::{self, EmulatorError, EvolveOptions, QuantumState};
use crate::fixed::Fixed;
use crate::instances::{generate_instance, DdppInstance, InstanceError};
use crate::partition::{
    enumerate_exact, greedy_baseline, interval_coloring_count, metrics, solve_partition, PartitionError,
    PartitionSolution,
};
use crate::pulses::{make_schedule, select_tuned, PulseError, TuneResult, DEFAULT_DELTA_FACTORS, DEFAULT_DURATIONS_NS};
use crate::sampler::{sample_classical, SamplerConfig, SamplerError};
use crate::samples::{mean_hamming_weight, SamplePool};
use crate::schedgraph::{build_graph, SchedGraph};
use crate::seeds;

pub const MANIFEST_VERSION: u32 = 1;
/// Seeds tried per instance slot before a study gives up on finding an
/// instance whose deliveries all fit the battery.
pub const INSTANCE_DRAWS: u64 = 1_000;

const STREAM_EMBED: u64 = 1;
const STREAM_PILOT: u64 = 2;
const STREAM_SAMPLE: u64 = 3;
const STREAM_CORRECT: u64 = 4;
const STREAM_PIPELINE: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Emulator,
    Classical,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Emulator => "emulator",
            Backend::Classical => "classical",
        })
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "emulator" => Ok(Backend::Emulator),
            "classical" => Ok(Backend::Classical),
            other => Err(format!("unknown backend {other:?}, expected emulator or classical")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Pulse(#[from] PulseError),
    #[error(transparent)]
    Emulator(#[from] EmulatorError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Correction(#[from] CorrectionError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("no instance with {n} deliveries fits battery {battery} in {draws} draws")]
    NoFeasibleInstance { n: usize, battery: Fixed, draws: u64 },
    #[error("sizes disagree: graph has {graph} nodes, raw pool {raw}, corrected pool {corrected}")]
    LengthMismatch { graph: usize, raw: usize, corrected: usize },
    #[error("the n_meas grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything that shapes a pipeline run apart from the instance and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub backend: Backend,
    pub n_meas: usize,
    /// Classical backend only: chance of one injected blockade violation.
    pub noise_rate: f64,
    /// Emulator backend only: shots per grid point while tuning.
    pub pilot_shots: usize,
    /// Final detuning candidates as multiples of the register's Ω_max.
    pub delta_factors: Vec<f64>,
    pub durations_ns: Vec<f64>,
    pub hardware: HardwareLimits,
    pub max_restarts: usize,
    pub n_cap: usize,
    pub time_limit_s: Option<f64>,
    /// Largest size solved by exhaustive enumeration for reference.
    pub exact_cap: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            backend: Backend::Classical,
            n_meas: 500,
            noise_rate: 0.0,
            pilot_shots: crate::pulses::DEFAULT_PILOT_SHOTS,
            delta_factors: DEFAULT_DELTA_FACTORS.to_vec(),
            durations_ns: DEFAULT_DURATIONS_NS.to_vec(),
            hardware: HardwareLimits::default(),
            max_restarts: crate::embedding::DEFAULT_MAX_RESTARTS,
            n_cap: emulator::DEFAULT_N_CAP,
            time_limit_s: Some(60.0),
            exact_cap: crate::partition::DEFAULT_EXACT_CAP,
        }
    }
}

impl PipelineConfig {
    pub fn grid(&self, omega_max: f64) -> Vec<(f64, f64)> {
        self.delta_factors.iter().flat_map(|&f| self.durations_ns.iter().map(move |&t| (f * omega_max, t))).collect()
    }

    fn time_limit(&self) -> Option<Duration> {
        self.time_limit_s.map(Duration::from_secs_f64)
    }

    fn evolve_options(&self) -> EvolveOptions {
        EvolveOptions { n_cap: self.n_cap, ..EvolveOptions::default() }
    }
}

/// First 16 hex digits of the SHA-256 of the JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let text = serde_json::to_string(config).expect("config serializes");
    Sha256::digest(text.as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot += ms(start.elapsed());
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub graph_ms: f64,
    pub embed_ms: f64,
    pub tune_ms: f64,
    pub sample_ms: f64,
    pub correct_ms: f64,
    pub solve_ms: f64,
}

impl StageTimings {
    pub fn total_ms(&self) -> f64 {
        self.graph_ms + self.embed_ms + self.tune_ms + self.sample_ms + self.correct_ms + self.solve_ms
    }
}

/// A sampler ready to draw shots for one instance: the classical surrogate,
/// or an evolved state on an embedded, tuned register.
#[derive(Debug, Clone)]
pub enum PreparedSampler {
    Classical { target_weight: f64, noise_rate: f64 },
    Emulator { register: AtomRegister, tuning: TuneResult, state: QuantumState },
}

impl PreparedSampler {
    /// Shot `i` depends only on `seed` and `i`, so smaller draws are
    /// prefixes of larger ones.
    pub fn draw(&self, g: &SchedGraph, n_meas: usize, seed: u64) -> Result<SamplePool, BenchError> {
        match self {
            PreparedSampler::Classical { target_weight, noise_rate } => {
                let cfg = SamplerConfig::new(*target_weight, n_meas, *noise_rate, seed)?;
                Ok(sample_classical(g, &cfg)?)
            }
            PreparedSampler::Emulator { state, .. } => Ok(emulator::sample(state, n_meas, seed)),
        }
    }

    pub fn register(&self) -> Option<&AtomRegister> {
        match self {
            PreparedSampler::Emulator { register, .. } => Some(register),
            PreparedSampler::Classical { .. } => None,
        }
    }

    pub fn tuning(&self) -> Option<&TuneResult> {
        match self {
            PreparedSampler::Emulator { tuning, .. } => Some(tuning),
            PreparedSampler::Classical { .. } => None,
        }
    }
}

/// Evolves every grid point, samples `pilot_shots` from each, and keeps the
/// state of the point whose mean weight best matches `target`.
pub fn tune_on_emulator(
    register: &AtomRegister,
    target: f64,
    grid: &[(f64, f64)],
    pilot_shots: usize,
    options: &EvolveOptions,
    seed: u64,
) -> Result<(TuneResult, QuantumState), BenchError> {
    if grid.is_empty() {
        return Err(PulseError::EmptyGrid.into());
    }
    let mut states = Vec::with_capacity(grid.len());
    let mut evaluations = Vec::with_capacity(grid.len());
    for (i, &(delta_max, t)) in grid.iter().enumerate() {
        let schedule = make_schedule(t, register.omega_max, delta_max)?;
        let state = emulator::evolve(register, &schedule, options)?;
        let pilot = emulator::sample(&state, pilot_shots.max(1), seeds::derive(seed, i as u64));
        evaluations.push((delta_max, t, mean_hamming_weight(&pilot).unwrap_or(0.0)));
        states.push(state);
    }
    let tuning = select_tuned(target, evaluations);
    let index = tuning
        .evaluations
        .iter()
        .position(|&(d, t, _)| d == tuning.delta_max && t == tuning.total_time_ns)
        .expect("tuned point comes from the grid");
    Ok((tuning, states.swap_remove(index)))
}

/// Embeds and tunes (emulator) or calibrates nothing yet (classical).
pub fn prepare_sampler(
    inst: &DdppInstance,
    g: &SchedGraph,
    cfg: &PipelineConfig,
    seed: u64,
    timings: &mut StageTimings,
) -> Result<PreparedSampler, BenchError> {
    let target = inst.sampling_target();
    match cfg.backend {
        Backend::Classical => Ok(PreparedSampler::Classical { target_weight: target, noise_rate: cfg.noise_rate }),
        Backend::Emulator => {
            if g.n() > cfg.n_cap {
                return Err(EmulatorError::RegisterTooLarge { n: g.n(), cap: cfg.n_cap }.into());
            }
            let register = timed(&mut timings.embed_ms, || {
                embed_graph(g, &cfg.hardware, cfg.max_restarts, seeds::derive(seed, STREAM_EMBED))
            })?;
            let (tuning, state) = timed(&mut timings.tune_ms, || {
                tune_on_emulator(
                    &register,
                    target,
                    &cfg.grid(register.omega_max),
                    cfg.pilot_shots,
                    &cfg.evolve_options(),
                    seeds::derive(seed, STREAM_PILOT),
                )
            })?;
            Ok(PreparedSampler::Emulator { register, tuning, state })
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub target_weight: f64,
    pub sampler: PreparedSampler,
    pub raw: SamplePool,
    pub pool: FeasiblePool,
    pub solution: PartitionSolution,
    pub timings: StageTimings,
}

/// graph, sampler preparation, sampling, correction, solve.
pub fn run_pipeline(inst: &DdppInstance, cfg: &PipelineConfig, seed: u64) -> Result<PipelineRun, BenchError> {
    let mut timings = StageTimings::default();
    let g = timed(&mut timings.graph_ms, || build_graph(inst));
    let sampler = prepare_sampler(inst, &g, cfg, seed, &mut timings)?;
    let raw = timed(&mut timings.sample_ms, || sampler.draw(&g, cfg.n_meas, seeds::derive(seed, STREAM_SAMPLE)))?;
    let pool = timed(&mut timings.correct_ms, || build_pool(&g, inst, &raw, seeds::derive(seed, STREAM_CORRECT)))?;
    let solution = timed(&mut timings.solve_ms, || solve_partition(&pool, cfg.time_limit()))?;
    Ok(PipelineRun { target_weight: inst.sampling_target(), sampler, raw, pool, solution, timings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    Exact,
    LowerBound,
}

/// Exact optimum when enumeration is allowed, else the overlap/budget bound.
pub fn reference_drones(
    g: &SchedGraph,
    inst: &DdppInstance,
    exact_cap: usize,
) -> Result<(usize, ReferenceKind), BenchError> {
    if inst.n() <= exact_cap {
        let (_, d) = enumerate_exact(g, inst, exact_cap)?;
        Ok((d, ReferenceKind::Exact))
    } else {
        if let Some(id) = inst.infeasible_delivery() {
            return Err(PartitionError::DeliveryExceedsBattery(id).into());
        }
        Ok((inst.drone_lower_bound(), ReferenceKind::LowerBound))
    }
}

/// Seed of the `k`-th instance of size `n`: the first derived candidate
/// whose deliveries all fit the battery.
pub fn draw_instance(n: usize, battery: Fixed, seed: u64, k: usize) -> Result<DdppInstance, BenchError> {
    let slot = seeds::derive(seeds::derive(seed, n as u64), k as u64);
    for attempt in 0..INSTANCE_DRAWS {
        let inst = generate_instance(n, battery, seeds::derive(slot, attempt))?;
        if inst.is_feasible_as_given() {
            return Ok(inst);
        }
    }
    Err(BenchError::NoFeasibleInstance { n, battery, draws: INSTANCE_DRAWS })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityStudy {
    pub sizes: Vec<usize>,
    pub instances_per_size: usize,
    pub battery: Fixed,
    pub seed: u64,
    pub pipeline: PipelineConfig,
}

/// One instance of a quality study. Timing columns are wall-clock and the
/// only fields that vary between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRow {
    pub size: usize,
    pub instance: usize,
    pub instance_seed: Option<u64>,
    pub pipeline_seed: Option<u64>,
    pub config_hash: String,
    pub backend: Backend,
    pub battery: Fixed,
    pub n_meas: usize,
    pub target_weight: Option<f64>,
    pub delta_max: Option<f64>,
    pub total_time_ns: Option<f64>,
    pub tuned_weight: Option<f64>,
    pub sample_mean_weight: Option<f64>,
    pub pool_size: Option<usize>,
    pub drones: Option<usize>,
    pub reference: Option<usize>,
    pub reference_kind: Option<ReferenceKind>,
    pub rho: Option<f64>,
    pub delta: Option<i64>,
    pub baseline_drones: Option<usize>,
    /// Battery-unaware color count; below `baseline_drones` exactly when
    /// the baseline had to split classes over budget.
    pub baseline_colors: Option<usize>,
    pub baseline_rho: Option<f64>,
    pub baseline_delta: Option<i64>,
    pub solve_status: Option<String>,
    pub error: Option<String>,
    pub t_generate_ms: f64,
    pub t_graph_ms: f64,
    pub t_embed_ms: f64,
    pub t_tune_ms: f64,
    pub t_sample_ms: f64,
    pub t_correct_ms: f64,
    pub t_solve_ms: f64,
    pub t_exact_ms: f64,
    pub t_baseline_ms: f64,
    pub wall_ms: f64,
}

impl QualityRow {
    fn empty(size: usize, instance: usize, study: &QualityStudy, hash: &str) -> Self {
        QualityRow {
            size,
            instance,
            instance_seed: None,
            pipeline_seed: None,
            config_hash: hash.to_string(),
            backend: study.pipeline.backend,
            battery: study.battery,
            n_meas: study.pipeline.n_meas,
            target_weight: None,
            delta_max: None,
            total_time_ns: None,
            tuned_weight: None,
            sample_mean_weight: None,
            pool_size: None,
            drones: None,
            reference: None,
            reference_kind: None,
            rho: None,
            delta: None,
            baseline_drones: None,
            baseline_colors: None,
            baseline_rho: None,
            baseline_delta: None,
            solve_status: None,
            error: None,
            t_generate_ms: 0.0,
            t_graph_ms: 0.0,
            t_embed_ms: 0.0,
            t_tune_ms: 0.0,
            t_sample_ms: 0.0,
            t_correct_ms: 0.0,
            t_solve_ms: 0.0,
            t_exact_ms: 0.0,
            t_baseline_ms: 0.0,
            wall_ms: 0.0,
        }
    }

    pub fn baseline_split(&self) -> Option<bool> {
        Some(self.baseline_drones? > self.baseline_colors?)
    }

    pub fn stage_total_ms(&self) -> f64 {
        self.t_generate_ms
            + self.t_graph_ms
            + self.t_embed_ms
            + self.t_tune_ms
            + self.t_sample_ms
            + self.t_correct_ms
            + self.t_solve_ms
            + self.t_exact_ms
            + self.t_baseline_ms
    }

    fn fill(&mut self, study: &QualityStudy) -> Result<(), BenchError> {
        let inst =
            timed(&mut self.t_generate_ms, || draw_instance(self.size, study.battery, study.seed, self.instance))?;
        let seed = seeds::derive(inst.seed().expect("generated instances carry a seed"), STREAM_PIPELINE);
        self.instance_seed = inst.seed();
        self.pipeline_seed = Some(seed);
        self.target_weight = Some(inst.sampling_target());

        let run = run_pipeline(&inst, &study.pipeline, seed);
        if let Ok(run) = &run {
            let t = run.timings;
            (self.t_graph_ms, self.t_embed_ms, self.t_tune_ms) = (t.graph_ms, t.embed_ms, t.tune_ms);
            (self.t_sample_ms, self.t_correct_ms, self.t_solve_ms) = (t.sample_ms, t.correct_ms, t.solve_ms);
        }
        let run = run?;
        if let Some(tuning) = run.sampler.tuning() {
            self.delta_max = Some(tuning.delta_max);
            self.total_time_ns = Some(tuning.total_time_ns);
            self.tuned_weight = Some(tuning.mean_weight);
        }
        self.sample_mean_weight = mean_hamming_weight(&run.raw).ok();
        self.pool_size = Some(run.pool.len());
        self.drones = Some(run.solution.drones);
        self.solve_status = Some(format!("{:?}", run.solution.status));

        let g = build_graph(&inst);
        let (baseline, colors) =
            timed(&mut self.t_baseline_ms, || (greedy_baseline(&g, &inst), interval_coloring_count(&g, &inst)));
        self.baseline_drones = Some(baseline.drones);
        self.baseline_colors = Some(colors);
        let (reference, kind) = timed(&mut self.t_exact_ms, || reference_drones(&g, &inst, study.pipeline.exact_cap))?;
        self.reference = Some(reference);
        self.reference_kind = Some(kind);
        let (rho, delta) = metrics(run.solution.drones, reference)?;
        let (baseline_rho, baseline_delta) = metrics(baseline.drones, reference)?;
        (self.rho, self.delta) = (Some(rho), Some(delta));
        (self.baseline_rho, self.baseline_delta) = (Some(baseline_rho), Some(baseline_delta));
        Ok(())
    }
}

/// Runs the pipeline on `instances_per_size` drawn instances per size.
/// Failures land in the row's `error` column; the sweep goes on.
pub fn run_quality_study(study: &QualityStudy) -> Vec<QualityRow> {
    let hash = config_hash(study);
    let slots: Vec<(usize, usize)> =
        study.sizes.iter().flat_map(|&n| (0..study.instances_per_size).map(move |k| (n, k))).collect();
    slots
        .into_par_iter()
        .map(|(n, k)| {
            let start = Instant::now();
            let mut row = QualityRow::empty(n, k, study, &hash);
            if let Err(e) = row.fill(study) {
                row.error = Some(e.to_string());
            }
            row.wall_ms = ms(start.elapsed());
            row
        })
        .collect()
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<(), BenchError> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, BenchError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    Ok(reader.deserialize().collect::<Result<_, _>>()?)
}

/// Median of finite values; the mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRow {
    pub n: usize,
    pub instance_seed: Option<u64>,
    pub n_meas: usize,
    pub repetitions: usize,
    pub median_rho: f64,
    pub q1_rho: f64,
    pub q3_rho: f64,
    pub min_rho: f64,
    pub max_rho: f64,
    /// Fraction of repetitions that reached the reference drone count.
    pub hit_rate: f64,
    pub reference: usize,
    pub reference_kind: ReferenceKind,
}

/// ρ against `n_meas` on one instance. Repetition `r` draws one pool of the
/// largest size and solves its prefixes, so pools are nested per
/// repetition. The sampler is prepared (embedded, tuned) once.
pub fn run_sampling_study(
    inst: &DdppInstance,
    n_meas_grid: &[usize],
    repetitions: usize,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<Vec<SamplingRow>, BenchError> {
    let largest = *n_meas_grid.iter().max().ok_or(BenchError::EmptyGrid)?;
    let g = build_graph(inst);
    let (reference, reference_kind) = reference_drones(&g, inst, cfg.exact_cap)?;
    let sampler = prepare_sampler(inst, &g, cfg, seed, &mut StageTimings::default())?;
    let per_rep: Vec<Vec<usize>> = (0..repetitions as u64)
        .into_par_iter()
        .map(|r| {
            let rep_seed = seeds::derive(seeds::derive(seed, STREAM_SAMPLE), r);
            let raw = sampler.draw(&g, largest, rep_seed)?;
            n_meas_grid
                .iter()
                .map(|&m| {
                    let pool = build_pool(&g, inst, &raw.prefix(m), seeds::derive(rep_seed, STREAM_CORRECT))?;
                    Ok(solve_partition(&pool, cfg.time_limit())?.drones)
                })
                .collect::<Result<Vec<usize>, BenchError>>()
        })
        .collect::<Result<_, _>>()?;

    n_meas_grid
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let mut rhos: Vec<f64> =
                per_rep.iter().map(|d| metrics(d[i], reference).map(|x| x.0)).collect::<Result<_, _>>()?;
            rhos.sort_by(f64::total_cmp);
            let hits = per_rep.iter().filter(|d| d[i] == reference).count();
            Ok(SamplingRow {
                n: inst.n(),
                instance_seed: inst.seed(),
                n_meas: m,
                repetitions,
                median_rho: median(&rhos).unwrap_or(f64::NAN),
                q1_rho: if rhos.is_empty() { f64::NAN } else { quantile(&rhos, 0.25) },
                q3_rho: if rhos.is_empty() { f64::NAN } else { quantile(&rhos, 0.75) },
                min_rho: rhos.first().copied().unwrap_or(f64::NAN),
                max_rho: rhos.last().copied().unwrap_or(f64::NAN),
                hit_rate: hits as f64 / repetitions.max(1) as f64,
                reference,
                reference_kind,
            })
        })
        .collect()
}

/// Smallest grid point from which the median ρ stays at 1.
pub fn threshold_n_meas(rows: &[SamplingRow]) -> Option<usize> {
    let mut sorted: Vec<&SamplingRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.n_meas);
    let mut threshold = None;
    for r in sorted {
        if r.median_rho <= 1.0 {
            threshold = threshold.or(Some(r.n_meas));
        } else {
            threshold = None;
        }
    }
    threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    /// `ln N* = intercept + slope * N`.
    pub slope: f64,
    pub intercept: f64,
    /// `exp(slope)`, the growth factor per delivery.
    pub base: f64,
    pub points: usize,
}

/// Least-squares line through `(N, ln N*)`. Needs two distinct sizes.
pub fn fit_log_threshold(points: &[(usize, usize)]) -> Option<ExponentialFit> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.1 > 0).map(|&(n, t)| (n as f64, (t as f64).ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if pts.len() < 2 || sxx == 0.0 {
        return None;
    }
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    Some(ExponentialFit { slope, intercept: my - slope * mx, base: slope.exp(), points: pts.len() })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub weight: usize,
    pub raw_valid: usize,
    pub raw_invalid: usize,
    /// Corrected samples, counted with their multiplicity.
    pub corrected_valid: usize,
    pub corrected_invalid: usize,
}

/// Per-weight counts of raw and corrected samples, split by whether they
/// are independent sets. Singletons added by correction carry no samples
/// and are not counted.
pub fn weight_histogram(
    raw: &SamplePool,
    corrected: &FeasiblePool,
    g: &SchedGraph,
) -> Result<Vec<HistogramRow>, BenchError> {
    if raw.n() != g.n() || corrected.n() != g.n() {
        return Err(BenchError::LengthMismatch { graph: g.n(), raw: raw.n(), corrected: corrected.n() });
    }
    let mut rows = vec![HistogramRow::default(); g.n() + 1];
    for (w, r) in rows.iter_mut().enumerate() {
        r.weight = w;
    }
    for s in raw.samples() {
        let row = &mut rows[s.weight()];
        if g.is_independent_set(s).expect("lengths checked") {
            row.raw_valid += 1;
        } else {
            row.raw_invalid += 1;
        }
    }
    for (s, &count) in corrected.sets().iter().zip(corrected.origin_counts()) {
        let row = &mut rows[s.weight()];
        if g.is_independent_set(s).expect("lengths checked") {
            row.corrected_valid += count;
        } else {
            row.corrected_invalid += count;
        }
    }
    while rows.len() > 1
        && rows.last().is_some_and(|r| r.raw_valid + r.raw_invalid + r.corrected_valid + r.corrected_invalid == 0)
    {
        rows.pop();
    }
    Ok(rows)
}

/// Invalid share of the raw (or corrected) samples; 0 for an empty side.
pub fn invalid_fraction(rows: &[HistogramRow], corrected: bool) -> f64 {
    let (valid, invalid) = rows.iter().fold((0, 0), |(v, i), r| {
        if corrected {
            (v + r.corrected_valid, i + r.corrected_invalid)
        } else {
            (v + r.raw_valid, i + r.raw_invalid)
        }
    });
    if valid + invalid == 0 {
        0.0
    } else {
        invalid as f64 / (valid + invalid) as f64
    }
}

/// Sidecar written next to study output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub study: String,
    pub tool_version: String,
    pub git_hash: Option<String>,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub rows: usize,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn new<C: Serialize>(study: &str, config: &C, seeds: Vec<u64>, rows: usize, git_hash: Option<String>) -> Self {
        Manifest {
            version: MANIFEST_VERSION,
            study: study.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            git_hash,
            config: serde_json::to_value(config).expect("config serializes"),
            config_hash: config_hash(config),
            seeds,
            rows,
            summary: serde_json::Value::Null,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nodeset::NodeSet;

    fn study(backend: Backend, sizes: Vec<usize>, per_size: usize) -> QualityStudy {
        QualityStudy {
            sizes,
            instances_per_size: per_size,
            battery: Fixed::from_int(30),
            seed: 11,
            pipeline: PipelineConfig { backend, n_meas: 200, ..PipelineConfig::default() },
        }
    }

    #[test]
    fn quality_rows_are_consistent_and_reproducible() {
        let s = study(Backend::Classical, vec![5, 8], 3);
        let rows = run_quality_study(&s);
        assert_eq!(rows.len(), 6);
        for r in &rows {
            assert!(r.error.is_none(), "{:?}", r.error);
            let (d, reference) = (r.drones.unwrap(), r.reference.unwrap());
            assert_eq!(r.delta.unwrap(), d as i64 - reference as i64);
            assert!((r.rho.unwrap() - d as f64 / reference as f64).abs() < 1e-12);
            assert_eq!(r.reference_kind, Some(ReferenceKind::Exact));
            assert!(r.baseline_drones.unwrap() >= reference);
        }
        let strip = |rows: Vec<QualityRow>| {
            rows.into_iter()
                .map(|r| QualityRow {
                    t_generate_ms: 0.0,
                    t_graph_ms: 0.0,
                    t_embed_ms: 0.0,
                    t_tune_ms: 0.0,
                    t_sample_ms: 0.0,
                    t_correct_ms: 0.0,
                    t_solve_ms: 0.0,
                    t_exact_ms: 0.0,
                    t_baseline_ms: 0.0,
                    wall_ms: 0.0,
                    ..r
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(rows), strip(run_quality_study(&s)));
    }

    #[test]
    fn stage_timings_cover_the_wall_time() {
        let mut s = study(Backend::Classical, vec![14], 2);
        s.pipeline.n_meas = 2000;
        for r in run_quality_study(&s) {
            assert!(r.wall_ms > 0.0);
            assert!(r.stage_total_ms() <= r.wall_ms * 1.0001);
            assert!(r.stage_total_ms() >= 0.95 * r.wall_ms, "{} of {}", r.stage_total_ms(), r.wall_ms);
        }
    }

    #[test]
    fn oversize_emulator_rows_record_the_error() {
        let rows = run_quality_study(&study(Backend::Emulator, vec![18], 1));
        assert!(rows[0].error.as_deref().unwrap().contains("cap is 16"), "{:?}", rows[0].error);
        assert!(rows[0].drones.is_none());
    }

    #[test]
    fn emulator_pipeline_on_a_small_instance() {
        let mut cfg = PipelineConfig { backend: Backend::Emulator, n_meas: 200, ..PipelineConfig::default() };
        cfg.delta_factors = vec![-0.5, 0.5];
        cfg.durations_ns = vec![450.0];
        let inst = draw_instance(5, Fixed::from_int(3), 1, 0).unwrap();
        let run = run_pipeline(&inst, &cfg, 7).unwrap();
        assert!(run.solution.is_exact_cover(5));
        let tuning = run.sampler.tuning().unwrap();
        assert_eq!(tuning.evaluations.len(), 2);
        assert!(run.timings.embed_ms > 0.0 && run.timings.tune_ms > 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let rows = run_quality_study(&study(Backend::Classical, vec![5], 2));
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("size,instance,instance_seed,pipeline_seed,config_hash,backend,"));
        let back: Vec<QualityRow> = read_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].drones, rows[0].drones);
        assert_eq!(back[1].config_hash, rows[1].config_hash);
    }

    #[test]
    fn config_hash_tracks_config() {
        let a = PipelineConfig::default();
        let b = PipelineConfig { n_meas: 501, ..a.clone() };
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 16);
    }

    #[test]
    fn sampling_study_is_monotone_per_repetition() {
        let inst = generate_instance(12, Fixed::from_int(4), 5).unwrap();
        let cfg = PipelineConfig { exact_cap: 20, ..PipelineConfig::default() };
        let rows = run_sampling_study(&inst, &[20, 40, 80, 160], 8, 3, &cfg).unwrap();
        assert_eq!(rows.len(), 4);
        for w in rows.windows(2) {
            assert!(w[1].max_rho <= w[0].max_rho + 1e-12);
            assert!(w[1].median_rho <= w[0].median_rho + 1e-12);
            assert!(w[1].hit_rate >= w[0].hit_rate);
        }
        assert!(rows.iter().all(|r| r.min_rho >= 1.0));
        assert!(run_sampling_study(&inst, &[], 1, 0, &cfg).is_err());
    }

    #[test]
    fn threshold_and_fit() {
        let row = |m, rho| SamplingRow {
            n: 10,
            instance_seed: None,
            n_meas: m,
            repetitions: 1,
            median_rho: rho,
            q1_rho: rho,
            q3_rho: rho,
            min_rho: rho,
            max_rho: rho,
            hit_rate: 0.0,
            reference: 1,
            reference_kind: ReferenceKind::Exact,
        };
        assert_eq!(threshold_n_meas(&[row(100, 1.2), row(200, 1.0), row(400, 1.0)]), Some(200));
        assert_eq!(threshold_n_meas(&[row(100, 1.0), row(200, 1.1)]), None);
        let pts: Vec<(usize, usize)> =
            (0..5).map(|i| (10 + 10 * i, (100.0 * 1.07f64.powi(10 * i as i32)).round() as usize)).collect();
        let fit = fit_log_threshold(&pts).unwrap();
        assert!((fit.base - 1.07).abs() < 1e-3, "{fit:?}");
        assert!(fit_log_threshold(&[(10, 100)]).is_none());
    }

    #[test]
    fn histogram_splits_valid_and_invalid() {
        let g = SchedGraph::from_edges(3, [(0, 1)]);
        let inst = DdppInstance::new(
            (0..3)
                .map(|id| crate::instances::Delivery {
                    id,
                    t_leave: Fixed::from_int(10 * id as i64),
                    t_return: Fixed::from_int(10 * id as i64 + 5),
                    cost: Fixed::from_int(1),
                })
                .collect(),
            Fixed::from_int(3),
            None,
        )
        .unwrap();
        let raw = SamplePool::new(
            3,
            vec!["110".parse().unwrap(), "101".parse().unwrap(), "000".parse().unwrap(), NodeSet::full(3)],
            None,
            "test",
        );
        let pool = build_pool(&g, &inst, &raw, 0).unwrap();
        let rows = weight_histogram(&raw, &pool, &g).unwrap();
        assert_eq!(rows.iter().map(|r| r.raw_invalid).sum::<usize>(), 2);
        assert_eq!(rows[0].raw_valid, 1);
        assert_eq!(invalid_fraction(&rows, true), 0.0);
        assert!((invalid_fraction(&rows, false) - 0.5).abs() < 1e-12);
        let other = SamplePool::new(4, vec![], None, "test");
        assert!(weight_histogram(&other, &pool, &g).is_err());
    }

    #[test]
    fn median_and_backend_parsing() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[1.0, 1.0, 1.2, 1.4]), Some(1.1));
        assert_eq!(median(&[]), None);
        assert_eq!("emulator".parse::<Backend>(), Ok(Backend::Emulator));
        assert!("qpu".parse::<Backend>().is_err());
    }
}
