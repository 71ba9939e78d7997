//! Python bindings. Sets of deliveries cross the boundary as bitstrings
//! with delivery 0 first, the same convention as the sample files.

use std::time::Duration;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ddpp_core::bench::{self as core_bench, Backend, PipelineConfig};
use ddpp_core::correction::{build_pool, FeasiblePool};
use ddpp_core::embedding::{embed_graph, validate_register, AtomRegister, HardwareLimits, DEFAULT_MAX_RESTARTS};
use ddpp_core::emulator::{self, EvolveOptions};
use ddpp_core::fixed::Fixed;
use ddpp_core::instances::{generate_instance, DdppInstance};
use ddpp_core::nodeset::NodeSet;
use ddpp_core::partition::{enumerate_exact, greedy_baseline, solve_partition, PartitionSolution, DEFAULT_EXACT_CAP};
use ddpp_core::pulses::make_schedule;
use ddpp_core::sampler::{sample_classical, SamplerConfig};
use ddpp_core::samples::SamplePool;
use ddpp_core::schedgraph::build_graph;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_battery(battery: &str) -> PyResult<Fixed> {
    battery.parse().map_err(value_err)
}

fn bitstrings(sets: &[NodeSet]) -> Vec<String> {
    sets.iter().map(NodeSet::to_bitstring).collect()
}

fn parse_sets(n: usize, bits: &[String]) -> PyResult<Vec<NodeSet>> {
    bits.iter().map(|b| NodeSet::parse_with_len(b, n).map_err(value_err)).collect()
}

fn solution_dict<'py>(py: Python<'py>, s: &PartitionSolution) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("drones", s.drones)?;
    d.set_item("sets", s.selected_sets.iter().map(|set| set.nodes().collect::<Vec<_>>()).collect::<Vec<_>>())?;
    d.set_item("status", serde_json::to_value(s.status).map_err(runtime_err)?.as_str().unwrap_or_default())?;
    d.set_item("wall_time_ms", s.wall_time.as_secs_f64() * 1e3)?;
    Ok(d)
}

/// A delivery instance. Times, costs and the battery are exact decimals.
#[pyclass(name = "Instance", module = "ddpp", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyInstance {
    inner: DdppInstance,
}

#[pymethods]
impl PyInstance {
    /// Random instance; `battery` is a decimal string such as "4.5".
    #[staticmethod]
    fn generate(n: usize, battery: &str, seed: u64) -> PyResult<Self> {
        Ok(PyInstance { inner: generate_instance(n, parse_battery(battery)?, seed).map_err(value_err)? })
    }

    /// The `k`-th instance of size `n` whose deliveries all fit the battery.
    #[staticmethod]
    #[pyo3(signature = (n, battery, seed, k = 0))]
    fn draw(n: usize, battery: &str, seed: u64, k: usize) -> PyResult<Self> {
        Ok(PyInstance { inner: core_bench::draw_instance(n, parse_battery(battery)?, seed, k).map_err(value_err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyInstance { inner: DdppInstance::from_json(text).map_err(value_err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn battery(&self) -> String {
        self.inner.battery().to_string()
    }

    #[getter]
    fn seed(&self) -> Option<u64> {
        self.inner.seed()
    }

    /// `(id, t_leave, t_return, cost)` as floats.
    #[getter]
    fn deliveries(&self) -> Vec<(usize, f64, f64, f64)> {
        self.inner
            .deliveries()
            .iter()
            .map(|d| (d.id, d.t_leave.to_f64(), d.t_return.to_f64(), d.cost.to_f64()))
            .collect()
    }

    /// Conflict-graph edges `(i, j)` with `i < j`.
    fn edges(&self) -> Vec<(usize, usize)> {
        build_graph(&self.inner).edges().to_vec()
    }

    fn target_weight(&self) -> f64 {
        self.inner.target_weight()
    }

    fn sampling_target(&self) -> f64 {
        self.inner.sampling_target()
    }

    fn max_overlap_depth(&self) -> usize {
        self.inner.max_overlap_depth()
    }

    fn drone_lower_bound(&self) -> usize {
        self.inner.drone_lower_bound()
    }

    /// Whether the set is independent in the conflict graph and within budget.
    fn is_feasible(&self, bits: &str) -> PyResult<bool> {
        let set = NodeSet::parse_with_len(bits, self.inner.n()).map_err(value_err)?;
        Ok(build_graph(&self.inner).is_independent_set(&set).map_err(value_err)? && self.inner.within_budget(&set))
    }

    fn __repr__(&self) -> String {
        format!("Instance(n={}, battery={})", self.inner.n(), self.inner.battery())
    }
}

/// Atom positions in micrometres with the drive amplitude they were scaled for.
#[pyclass(name = "Register", module = "ddpp", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyRegister {
    inner: AtomRegister,
}

#[pymethods]
impl PyRegister {
    #[new]
    #[pyo3(signature = (positions, omega_max, c6 = ddpp_core::embedding::DEFAULT_C6))]
    fn new(positions: Vec<(f64, f64)>, omega_max: f64, c6: f64) -> Self {
        PyRegister {
            inner: AtomRegister { positions: positions.into_iter().map(|(x, y)| [x, y]).collect(), omega_max, c6 },
        }
    }

    /// Embeds the instance's conflict graph on the default device.
    #[staticmethod]
    #[pyo3(signature = (instance, seed = 0, restarts = DEFAULT_MAX_RESTARTS))]
    fn embed(py: Python<'_>, instance: &PyInstance, seed: u64, restarts: usize) -> PyResult<Self> {
        let g = build_graph(&instance.inner);
        let reg = py.detach(|| embed_graph(&g, &HardwareLimits::default(), restarts, seed)).map_err(value_err)?;
        Ok(PyRegister { inner: reg })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyRegister { inner: AtomRegister::from_json(text).map_err(value_err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn positions(&self) -> Vec<(f64, f64)> {
        self.inner.positions.iter().map(|p| (p[0], p[1])).collect()
    }

    #[getter]
    fn omega_max(&self) -> f64 {
        self.inner.omega_max
    }

    #[getter]
    fn r_blockade(&self) -> f64 {
        self.inner.r_blockade()
    }

    /// Validation report against the instance's graph as a dict.
    fn validate<'py>(&self, py: Python<'py>, instance: &PyInstance) -> PyResult<Bound<'py, PyAny>> {
        let report = validate_register(&self.inner, &build_graph(&instance.inner), &HardwareLimits::default());
        let text = serde_json::to_string(&report).map_err(runtime_err)?;
        py.import("json")?.call_method1("loads", (text,))
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }
}

/// Measurements of the register after the standard pulse.
#[pyfunction]
#[pyo3(signature = (register, total_time_ns, delta_max, shots, seed = 0))]
fn emulate(
    py: Python<'_>,
    register: &PyRegister,
    total_time_ns: f64,
    delta_max: f64,
    shots: usize,
    seed: u64,
) -> PyResult<Vec<String>> {
    let schedule = make_schedule(total_time_ns, register.inner.omega_max, delta_max).map_err(value_err)?;
    let state =
        py.detach(|| emulator::evolve(&register.inner, &schedule, &EvolveOptions::default())).map_err(value_err)?;
    Ok(bitstrings(emulator::sample(&state, shots, seed).samples()))
}

/// Classical independent-set sampler; the target defaults to the instance's.
#[pyfunction]
#[pyo3(signature = (instance, shots, seed = 0, target_weight = None, noise = 0.0))]
fn sample_classical_py(
    instance: &PyInstance,
    shots: usize,
    seed: u64,
    target_weight: Option<f64>,
    noise: f64,
) -> PyResult<Vec<String>> {
    let target = target_weight.unwrap_or_else(|| instance.inner.sampling_target());
    let cfg = SamplerConfig::new(target, shots, noise, seed).map_err(value_err)?;
    let pool = sample_classical(&build_graph(&instance.inner), &cfg).map_err(value_err)?;
    Ok(bitstrings(pool.samples()))
}

/// Repairs raw bitstrings into feasible, deduplicated sets plus singletons.
/// Returns `(sets, multiplicities)`.
#[pyfunction]
#[pyo3(signature = (instance, samples, seed = 0))]
fn correct(instance: &PyInstance, samples: Vec<String>, seed: u64) -> PyResult<(Vec<String>, Vec<usize>)> {
    let n = instance.inner.n();
    let raw = SamplePool::new(n, parse_sets(n, &samples)?, None, "python");
    let pool = build_pool(&build_graph(&instance.inner), &instance.inner, &raw, seed).map_err(value_err)?;
    Ok((bitstrings(pool.sets()), pool.origin_counts().to_vec()))
}

/// Fewest drones partitioning all deliveries using sets from `pool`.
#[pyfunction]
#[pyo3(signature = (instance, pool, time_limit = None))]
fn solve<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    pool: Vec<String>,
    time_limit: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let inst = &instance.inner;
    let pool = FeasiblePool::from_sets(inst.n(), parse_sets(inst.n(), &pool)?);
    if let Some(bad) = pool.first_infeasible(&build_graph(inst), inst) {
        return Err(value_err(format!("pool set {bad} is not a feasible schedule")));
    }
    let limit = time_limit.map(Duration::try_from_secs_f64).transpose().map_err(value_err)?;
    let solution = py.detach(|| solve_partition(&pool, limit)).map_err(value_err)?;
    solution_dict(py, &solution)
}

/// Exact minimum drone count by enumeration.
#[pyfunction]
#[pyo3(signature = (instance, cap = DEFAULT_EXACT_CAP))]
fn exact(py: Python<'_>, instance: &PyInstance, cap: usize) -> PyResult<usize> {
    let inst = &instance.inner;
    let (_, d) = py.detach(|| enumerate_exact(&build_graph(inst), inst, cap)).map_err(value_err)?;
    Ok(d)
}

#[pyfunction]
fn baseline<'py>(py: Python<'py>, instance: &PyInstance) -> PyResult<Bound<'py, PyDict>> {
    let inst = &instance.inner;
    if let Some(id) = inst.infeasible_delivery() {
        return Err(value_err(format!("delivery {id} costs more than the battery")));
    }
    solution_dict(py, &greedy_baseline(&build_graph(inst), inst))
}

/// Sample, correct and solve in one call. Returns the solution dict with
/// the raw sample count and pool size added.
#[pyfunction]
#[pyo3(signature = (instance, backend = "classical", shots = 500, seed = 0, noise = 0.0))]
fn run_pipeline<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    backend: &str,
    shots: usize,
    seed: u64,
    noise: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let backend: Backend = backend.parse().map_err(value_err)?;
    let cfg = PipelineConfig { backend, n_meas: shots, noise_rate: noise, ..PipelineConfig::default() };
    let run = py.detach(|| core_bench::run_pipeline(&instance.inner, &cfg, seed)).map_err(value_err)?;
    let d = solution_dict(py, &run.solution)?;
    d.set_item("raw_samples", run.raw.len())?;
    d.set_item("pool_size", run.pool.len())?;
    d.set_item("target_weight", run.target_weight)?;
    Ok(d)
}

#[pymodule]
pub fn ddpp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyInstance>()?;
    m.add_class::<PyRegister>()?;
    m.add_function(wrap_pyfunction!(emulate, m)?)?;
    m.add("sample_classical", wrap_pyfunction!(sample_classical_py, m)?)?;
    m.add_function(wrap_pyfunction!(correct, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(exact, m)?)?;
    m.add_function(wrap_pyfunction!(baseline, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
