//! `ddpp`: the sampling, correction and partition pipeline as composable
//! subcommands that hand off through files.

mod bench;
mod files;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ddpp_core::bench::{tune_on_emulator, Backend, BenchError};
use ddpp_core::correction::{build_pool, CorrectionError, FeasiblePool};
use ddpp_core::embedding::{
    embed_graph, validate_register, AtomRegister, EmbeddingError, HardwareLimits, RegisterFileError,
    DEFAULT_MAX_RESTARTS,
};
use ddpp_core::emulator::{self, EmulatorError, EvolveOptions};
use ddpp_core::fixed::Fixed;
use ddpp_core::instances::{generate_instance, DdppInstance, InstanceError};
use ddpp_core::partition::{enumerate_exact, greedy_baseline, solve_partition, PartitionError, DEFAULT_EXACT_CAP};
use ddpp_core::pulses::PulseError;
use ddpp_core::sampler::{sample_classical, SamplerConfig, SamplerError};
use ddpp_core::samples::{SampleFileError, SamplePool};
use ddpp_core::schedgraph::build_graph;

use files::{read_json, write_json, GridFile, ScheduleFile, UsageError};

const AFTER_HELP: &str = "\
File formats (all versioned, version 1):
  instance   JSON {version, n, battery, seed?, deliveries: [{id, t_leave, t_return, cost}]}, decimals as strings
  register   JSON {version, omega_max, c6, r_blockade, atoms: [{id, x, y}]}, micrometres and rad/us
  grid       JSON {version, delta_factors, durations_ns, pilot_shots}, every field optional
  schedule   JSON {version, total_time_ns, omega_max, delta_max, ...}; `tune --dump` adds a t_ns,omega,delta CSV
  samples    text, header `# ddpp-samples v1 n= n_meas= seed= schedule=`, then one bitstring per line, atom 0 first
  pool       text, header `# ddpp-pool v1 n= sets=`, bitstrings, plus a `<pool>.json` sidecar with multiplicities
  solution   JSON {drones, sets: [[ids]], status, wall_time_ms}

Exit codes: 0 success, 1 usage or malformed input, 2 infeasible or over a size limit, 3 internal error.";

#[derive(Parser)]
#[command(name = "ddpp", version, about = "Drone delivery packing through independent-set sampling", after_help = AFTER_HELP)]
struct Cli {
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance.
    Gen(GenArgs),
    /// Export the scheduling conflict graph as DOT or an edge list.
    Graph(GraphArgs),
    /// Embed the conflict graph as an atom register.
    Embed(EmbedArgs),
    /// Grid-search the final detuning and pulse length on the emulator.
    Tune(TuneArgs),
    /// Draw raw samples from the emulator or the classical sampler.
    Sample(SampleArgs),
    /// Repair raw samples into a feasible pool with all singletons.
    Correct(CorrectArgs),
    /// Solve the set-partitioning problem over a feasible pool.
    Solve(SolveArgs),
    /// Exact optimum by exhaustive enumeration (small instances).
    Exact(ExactArgs),
    /// Greedy interval-coloring baseline with budget splitting.
    Baseline(BaselineArgs),
    /// Run a benchmark study and write CSV plus a JSON manifest.
    Bench(bench::BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    /// Battery capacity, a decimal.
    #[arg(long)]
    battery: Fixed,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    inst: PathBuf,
    /// `.dot` writes DOT, anything else an edge list.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
struct EmbedArgs {
    #[command(subcommand)]
    action: Option<EmbedAction>,
    #[arg(long, required = true)]
    inst: Option<PathBuf>,
    /// Hardware limits JSON; defaults to the built-in device.
    #[arg(long)]
    hw: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_RESTARTS)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, required = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EmbedAction {
    /// Check a register against an instance's graph and the hardware.
    Validate {
        #[arg(long)]
        reg: PathBuf,
        #[arg(long)]
        inst: PathBuf,
        #[arg(long)]
        hw: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    inst: PathBuf,
    #[arg(long)]
    reg: PathBuf,
    /// Candidate grid; defaults to the built-in one.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Target mean weight; defaults to the instance's sampling target.
    #[arg(long)]
    target_weight: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the tuned waveforms as CSV.
    #[arg(long)]
    dump: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    step_ns: f64,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, default_value = "classical")]
    backend: Backend,
    #[arg(long)]
    inst: PathBuf,
    /// Emulator backend: the register.
    #[arg(long)]
    reg: Option<PathBuf>,
    /// Emulator backend: the schedule.
    #[arg(long)]
    sched: Option<PathBuf>,
    /// Classical backend: mean weight; defaults to the sampling target.
    #[arg(long)]
    target_weight: Option<f64>,
    /// Classical backend: chance of one injected blockade violation.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 500)]
    shots: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorrectArgs {
    #[arg(long)]
    inst: PathBuf,
    #[arg(long)]
    pool: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    inst: PathBuf,
    #[arg(long)]
    pool: PathBuf,
    /// Seconds; the best partition so far is kept when it runs out.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExactArgs {
    #[arg(long)]
    inst: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EXACT_CAP)]
    cap: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write every feasible schedule as a pool file.
    #[arg(long)]
    family: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    inst: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn load_instance(path: &Path) -> Result<DdppInstance> {
    DdppInstance::load(path).with_context(|| format!("reading instance {}", path.display()))
}

fn load_hardware(path: Option<&Path>) -> Result<HardwareLimits> {
    path.map_or_else(|| Ok(HardwareLimits::default()), read_json)
}

fn gen(a: GenArgs) -> Result<()> {
    let inst = generate_instance(a.n, a.battery, a.seed)?;
    inst.save(&a.out)?;
    eprintln!(
        "{} deliveries, overlap depth {}, drone lower bound {}",
        inst.n(),
        inst.max_overlap_depth(),
        inst.drone_lower_bound()
    );
    Ok(())
}

fn graph(a: GraphArgs) -> Result<()> {
    let g = build_graph(&load_instance(&a.inst)?);
    let text = if a.out.extension().is_some_and(|e| e == "dot") { g.to_dot() } else { g.to_edge_list() };
    std::fs::write(&a.out, text)?;
    eprintln!("{} nodes, {} edges", g.n(), g.edges().len());
    Ok(())
}

fn embed(a: EmbedArgs) -> Result<()> {
    if let Some(EmbedAction::Validate { reg, inst, hw }) = a.action {
        let register = AtomRegister::load(&reg).with_context(|| format!("reading register {}", reg.display()))?;
        let g = build_graph(&load_instance(&inst)?);
        if register.n() != g.n() {
            return Err(
                UsageError(format!("register has {} atoms, instance {} deliveries", register.n(), g.n())).into()
            );
        }
        let report = validate_register(&register, &g, &load_hardware(hw.as_deref())?);
        println!("{}", serde_json::to_string_pretty(&report)?);
        if !report.is_valid() {
            return Err(files::Infeasible(format!("{} violations", report.violation_count())).into());
        }
        return Ok(());
    }
    let (inst, out) = (a.inst.expect("required by clap"), a.out.expect("required by clap"));
    let g = build_graph(&load_instance(&inst)?);
    let reg = embed_graph(&g, &load_hardware(a.hw.as_deref())?, a.restarts, a.seed)?;
    reg.save(&out)?;
    eprintln!("{} atoms, omega_max {:.4} rad/us, blockade radius {:.3} um", reg.n(), reg.omega_max, reg.r_blockade());
    Ok(())
}

fn tune(a: TuneArgs) -> Result<()> {
    let inst = load_instance(&a.inst)?;
    let reg = AtomRegister::load(&a.reg)?;
    if reg.n() != inst.n() {
        return Err(UsageError(format!("register has {} atoms, instance {} deliveries", reg.n(), inst.n())).into());
    }
    let grid: GridFile = a.grid.as_deref().map_or_else(|| Ok(GridFile::default()), read_json)?;
    grid.validate()?;
    let target = a.target_weight.unwrap_or_else(|| inst.sampling_target());
    let (tuning, state) = tune_on_emulator(
        &reg,
        target,
        &grid.points(reg.omega_max),
        grid.pilot_shots,
        &EvolveOptions::default(),
        a.seed,
    )?;
    let sched = ScheduleFile::tuned(&reg, target, &tuning, &state.label);
    write_json(&a.out, &sched)?;
    if let Some(dump) = &a.dump {
        std::fs::write(dump, sched.schedule()?.to_csv(a.step_ns))?;
    }
    eprintln!(
        "delta_max {:.4} rad/us, T {} ns, pilot mean weight {:.3} (target {:.3})",
        tuning.delta_max, tuning.total_time_ns, tuning.mean_weight, target
    );
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let inst = load_instance(&a.inst)?;
    let pool = match a.backend {
        Backend::Emulator => {
            let (Some(reg), Some(sched)) = (&a.reg, &a.sched) else {
                return Err(UsageError("the emulator backend needs --reg and --sched".into()).into());
            };
            let reg = AtomRegister::load(reg)?;
            if reg.n() != inst.n() {
                return Err(
                    UsageError(format!("register has {} atoms, instance {} deliveries", reg.n(), inst.n())).into()
                );
            }
            let sched: ScheduleFile = read_json(sched)?;
            let state = emulator::evolve(&reg, &sched.schedule()?, &EvolveOptions::default())?;
            emulator::sample(&state, a.shots, a.seed)
        }
        Backend::Classical => {
            let target = a.target_weight.unwrap_or_else(|| inst.sampling_target());
            sample_classical(&build_graph(&inst), &SamplerConfig::new(target, a.shots, a.noise, a.seed)?)?
        }
    };
    pool.save(&a.out)?;
    eprintln!("{} samples", pool.len());
    Ok(())
}

fn correct(a: CorrectArgs) -> Result<()> {
    let inst = load_instance(&a.inst)?;
    let raw = SamplePool::load(&a.pool).with_context(|| format!("reading samples {}", a.pool.display()))?;
    let pool = build_pool(&build_graph(&inst), &inst, &raw, a.seed)?;
    pool.save(&a.out)?;
    let s = pool.sidecar().stats;
    eprintln!(
        "{} raw samples, {} independent, {} feasible; {} distinct sets, {} singletons added",
        s.raw_samples,
        s.raw_valid_is,
        s.raw_feasible,
        pool.len(),
        s.singletons_added
    );
    Ok(())
}

fn solve(a: SolveArgs) -> Result<()> {
    let inst = load_instance(&a.inst)?;
    let pool = FeasiblePool::load(&a.pool).with_context(|| format!("reading pool {}", a.pool.display()))?;
    if pool.n() != inst.n() {
        return Err(UsageError(format!("pool has {} deliveries, instance {}", pool.n(), inst.n())).into());
    }
    if let Some(bad) = pool.first_infeasible(&build_graph(&inst), &inst) {
        return Err(files::Infeasible(format!("pool set {bad} is not a feasible schedule")).into());
    }
    if a.time_limit.is_some_and(|t| !(t >= 0.0)) {
        return Err(UsageError("--time-limit must be a non-negative number of seconds".into()).into());
    }
    let solution = solve_partition(&pool, a.time_limit.map(Duration::from_secs_f64))?;
    solution.save(&a.out)?;
    println!("{} drones ({:?})", solution.drones, solution.status);
    Ok(())
}

fn exact(a: ExactArgs) -> Result<()> {
    let inst = load_instance(&a.inst)?;
    let (family, d) = enumerate_exact(&build_graph(&inst), &inst, a.cap)?;
    let solution = solve_partition(&family, None)?;
    if solution.drones != d {
        bail!("partition over the full family found {} drones, enumeration {d}", solution.drones);
    }
    solution.save(&a.out)?;
    if let Some(path) = &a.family {
        family.save(path)?;
    }
    println!("{d} drones (exact, {} feasible sets)", family.len());
    Ok(())
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let inst = load_instance(&a.inst)?;
    if let Some(id) = inst.infeasible_delivery() {
        return Err(PartitionError::DeliveryExceedsBattery(id).into());
    }
    let solution = greedy_baseline(&build_graph(&inst), &inst);
    solution.save(&a.out)?;
    println!("{} drones (baseline)", solution.drones);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Graph(a) => graph(a),
        Command::Embed(a) => embed(a),
        Command::Tune(a) => tune(a),
        Command::Sample(a) => sample(a),
        Command::Correct(a) => correct(a),
        Command::Solve(a) => solve(a),
        Command::Exact(a) => exact(a),
        Command::Baseline(a) => baseline(a),
        Command::Bench(a) => bench::run(a),
    }
}

const USAGE: u8 = 1;
const LIMIT: u8 = 2;
const INTERNAL: u8 = 3;

fn io_code(e: &std::io::Error) -> u8 {
    if e.kind() == std::io::ErrorKind::NotFound {
        USAGE
    } else {
        INTERNAL
    }
}

fn bench_code(e: &BenchError) -> u8 {
    match e {
        BenchError::Instance(e) => instance_code(e),
        BenchError::Embedding(_) | BenchError::NoFeasibleInstance { .. } => LIMIT,
        BenchError::Emulator(e) => emulator_code(e),
        BenchError::Partition(e) => partition_code(e),
        BenchError::Correction(e) => correction_code(e),
        BenchError::Pulse(_) | BenchError::Sampler(_) | BenchError::EmptyGrid | BenchError::LengthMismatch { .. } => {
            USAGE
        }
        BenchError::Io(e) => io_code(e),
        BenchError::Csv(_) => INTERNAL,
    }
}

fn instance_code(e: &InstanceError) -> u8 {
    match e {
        InstanceError::GenerationExhausted { .. } => LIMIT,
        InstanceError::Io(e) => io_code(e),
        _ => USAGE,
    }
}

fn emulator_code(e: &EmulatorError) -> u8 {
    match e {
        EmulatorError::RegisterTooLarge { .. } => LIMIT,
        _ => INTERNAL,
    }
}

fn partition_code(e: &PartitionError) -> u8 {
    match e {
        PartitionError::DivisionByZeroGuard => INTERNAL,
        _ => LIMIT,
    }
}

fn correction_code(e: &CorrectionError) -> u8 {
    match e {
        CorrectionError::DeliveryExceedsBattery(_) => LIMIT,
        CorrectionError::LengthMismatch { .. } => USAGE,
    }
}

/// Maps the first recognised error in the chain to an exit code.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<PulseError>() || cause.is::<SamplerError>() {
            return USAGE;
        }
        if cause.is::<files::Infeasible>() || cause.is::<EmbeddingError>() {
            return LIMIT;
        }
        if let Some(e) = cause.downcast_ref::<BenchError>() {
            return bench_code(e);
        }
        if let Some(e) = cause.downcast_ref::<InstanceError>() {
            return instance_code(e);
        }
        if let Some(e) = cause.downcast_ref::<EmulatorError>() {
            return emulator_code(e);
        }
        if let Some(e) = cause.downcast_ref::<PartitionError>() {
            return partition_code(e);
        }
        if let Some(e) = cause.downcast_ref::<CorrectionError>() {
            return correction_code(e);
        }
        if let Some(SampleFileError::Io(e)) = cause.downcast_ref::<SampleFileError>() {
            return io_code(e);
        }
        if cause.is::<SampleFileError>() || cause.is::<serde_json::Error>() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<RegisterFileError>() {
            return if let RegisterFileError::Io(e) = e { io_code(e) } else { USAGE };
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            return io_code(e);
        }
    }
    INTERNAL
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
