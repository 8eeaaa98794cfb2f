//! Python bindings. Build the `cdylib` and import it as `sgpvm`; see
//! `python/smoke_test.py` at the repository root.

use std::time::Duration;

use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sgpvm::bench::{self, BenchOptions, BenchRecord, Benchmark};
use sgpvm::config::ExperimentConfig;
use sgpvm::cpu::CompiledProgram;
use sgpvm::problems::{ChangingEnvConfig, ContextualSignalConfig};
use sgpvm::tag::{self, RegulationState};
use sgpvm::{Backend, Cpu, CpuConfig, InstructionSetSpec, Rng, VirtualCpu};

fn to_py(e: sgpvm::Error) -> PyErr {
    match e {
        sgpvm::Error::Replay(_) | sgpvm::Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn backend(name: &str) -> PyResult<Backend> {
    name.parse().map_err(to_py)
}

fn instruction_set(name: &str) -> PyResult<InstructionSetSpec> {
    InstructionSetSpec::by_name(name).map_err(to_py)
}

/// A 64-bit tag.
#[pyclass(frozen, eq, hash, skip_from_py_object, module = "sgpvm")]
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tag {
    #[pyo3(get)]
    pub value: u64,
}

#[pymethods]
impl Tag {
    #[new]
    fn new(value: u64) -> Self {
        Tag { value }
    }

    #[staticmethod]
    fn from_hex(text: &str) -> PyResult<Self> {
        let t: tag::Tag = text.parse().map_err(|e: sgpvm::error::ParseTagError| PyValueError::new_err(e.to_string()))?;
        Ok(Tag { value: t.0 })
    }

    #[staticmethod]
    fn random(seed: u64) -> Self {
        Tag {
            value: tag::Tag::random(&mut Rng::new(seed)).0,
        }
    }

    fn hex(&self) -> String {
        tag::Tag(self.value).to_string()
    }

    fn match_score(&self, other: &Tag) -> f64 {
        tag::Tag(self.value).match_score(tag::Tag(other.value))
    }

    fn __repr__(&self) -> String {
        format!("Tag('{}')", self.hex())
    }
}

/// Normalized Hamming similarity of two tags given as integers.
#[pyfunction]
fn match_score(a: u64, b: u64) -> f64 {
    tag::Tag(a).match_score(tag::Tag(b))
}

/// Index of the best regulated match for `query`, or None.
#[pyfunction]
#[pyo3(signature = (query, tags, regulation = None, min_raw = 0.0))]
fn best_match(
    query: u64,
    tags: Vec<u64>,
    regulation: Option<Vec<f64>>,
    min_raw: f64,
) -> PyResult<Option<usize>> {
    let tags: Vec<tag::Tag> = tags.into_iter().map(tag::Tag).collect();
    let mut reg = RegulationState::new(tags.len());
    if let Some(values) = regulation {
        if values.len() != tags.len() {
            return Err(PyValueError::new_err("regulation and tags differ in length"));
        }
        let mut selector = tag::ModuleSelector::new(tags.clone(), min_raw);
        for (i, v) in values.into_iter().enumerate() {
            selector.set_regulator(i, v);
        }
        reg = selector.regulation().clone();
    }
    Ok(tag::best_match(tag::Tag(query), &tags, &reg, min_raw))
}

/// An immutable linear program.
#[pyclass(frozen, skip_from_py_object, module = "sgpvm")]
#[derive(Clone)]
pub struct Program {
    pub inner: sgpvm::Program,
}

#[pymethods]
impl Program {
    /// Random program over the named instruction set.
    #[staticmethod]
    fn random(instruction_set: &str, length: usize, seed: u64) -> PyResult<Self> {
        let set = self::instruction_set(instruction_set)?;
        let inner = sgpvm::program::random_program(&set, length, &mut Rng::new(seed)).map_err(to_py)?;
        Ok(Program { inner })
    }

    /// Parses genome text; returns the program and its instruction set name.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<(Self, String)> {
        let genome = sgpvm::program::deserialize(text).map_err(to_py)?;
        Ok((Program { inner: genome.program }, genome.set.name().to_string()))
    }

    fn serialize(&self, instruction_set: &str) -> PyResult<String> {
        let set = self::instruction_set(instruction_set)?;
        self.inner.validate(&set, sgpvm::program::NUM_REGISTERS).map_err(to_py)?;
        Ok(sgpvm::program::serialize(&self.inner, &set))
    }

    /// `(opcode, a, b, c, tag)` for every instruction.
    fn instructions(&self) -> Vec<(String, u8, u8, u8, u64)> {
        self.inner
            .instructions()
            .iter()
            .map(|i| (i.op.name(), i.args[0], i.args[1], i.args[2], i.tag.0))
            .collect()
    }

    /// `(start, end, tag)` for every module.
    fn modules(&self) -> Vec<(usize, usize, u64)> {
        self.inner
            .modules()
            .iter()
            .map(|m| (m.start, m.end, m.tag.0))
            .collect()
    }

    fn fingerprint(&self) -> u64 {
        self.inner.fingerprint()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Program(len={}, modules={})", self.inner.len(), self.inner.modules().len())
    }
}

/// A virtual cpu running one program on either backend.
#[pyclass(name = "VirtualCpu", module = "sgpvm")]
pub struct PyCpu {
    inner: Cpu,
}

#[pymethods]
impl PyCpu {
    #[new]
    #[pyo3(signature = (program, backend = "lite", seed = 0, max_cores = 16, registers = 8, min_raw = 0.0))]
    fn new(
        program: &Program,
        backend: &str,
        seed: u64,
        max_cores: usize,
        registers: usize,
        min_raw: f64,
    ) -> PyResult<Self> {
        let config = CpuConfig {
            max_cores,
            min_raw,
            registers,
        };
        let inner = Cpu::new(&program.inner, self::backend(backend)?, &config, seed).map_err(to_py)?;
        Ok(PyCpu { inner })
    }

    fn launch(&mut self, signal: u64) -> bool {
        self.inner.launch(tag::Tag(signal))
    }

    fn step(&mut self, cycles: u64) {
        self.inner.step(cycles)
    }

    fn kill_all_cores(&mut self) {
        self.inner.kill_all_cores()
    }

    fn core_count(&self) -> usize {
        self.inner.core_count()
    }

    fn core_registers(&self, index: usize) -> PyResult<Vec<f64>> {
        self.inner
            .core_registers(index)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| PyIndexError::new_err(format!("no core {index}")))
    }

    fn regulation(&self) -> Vec<f64> {
        self.inner.regulation().as_slice().to_vec()
    }

    fn cache_generation(&self) -> u64 {
        self.inner.cache_generation()
    }

    /// Most recent response since the last reset, or None.
    fn last_response(&self) -> Option<u8> {
        self.inner.response()
    }

    fn reset_response(&mut self) {
        self.inner.reset_response()
    }

    fn rng_draws(&self) -> u64 {
        self.inner.rng_draws()
    }

    #[getter]
    fn backend(&self) -> &'static str {
        match self.inner {
            Cpu::Lite(_) => "lite",
            Cpu::Flex(_) => "flex",
        }
    }
}

/// Changing Environment problem with K signals drawn from `seed`.
#[pyclass(frozen, module = "sgpvm")]
pub struct ChangingEnvironment {
    inner: ChangingEnvConfig,
}

#[pymethods]
impl ChangingEnvironment {
    #[new]
    #[pyo3(signature = (k, seed = 0, cycles_per_signal = 128))]
    fn new(k: u8, seed: u64, cycles_per_signal: u64) -> PyResult<Self> {
        let mut inner = ChangingEnvConfig::generate(k, &mut Rng::new(seed)).map_err(to_py)?;
        inner.cycles_per_signal = cycles_per_signal;
        Ok(ChangingEnvironment { inner })
    }

    #[getter]
    fn signal_tags(&self) -> Vec<u64> {
        self.inner.signal_tags.iter().map(|t| t.0).collect()
    }

    #[getter]
    fn instruction_set(&self) -> String {
        self.inner.instruction_set().name().to_string()
    }

    #[pyo3(signature = (program, seed = 0, backend = "lite"))]
    fn evaluate(&self, program: &Program, seed: u64, backend: &str) -> PyResult<f64> {
        let compiled = CompiledProgram::compile(&program.inner, self::backend(backend)?, &CpuConfig::default())
            .map_err(to_py)?;
        Ok(self.inner.evaluate(&compiled, seed).fitness)
    }

    fn perfect_solution(&self) -> Program {
        Program {
            inner: self.inner.perfect_solution(),
        }
    }
}

/// Contextual Signal problem with signal tags drawn from `seed`.
#[pyclass(frozen, module = "sgpvm")]
pub struct ContextualSignal {
    inner: ContextualSignalConfig,
}

#[pymethods]
impl ContextualSignal {
    #[new]
    #[pyo3(signature = (seed = 0, regulation = true))]
    fn new(seed: u64, regulation: bool) -> Self {
        let mut inner = ContextualSignalConfig::generate(&mut Rng::new(seed));
        inner.regulation = regulation;
        ContextualSignal { inner }
    }

    #[getter]
    fn instruction_set(&self) -> String {
        self.inner.instruction_set().name().to_string()
    }

    /// Pass/fail for the 16 cases, indexed `4 * first + second`.
    #[pyo3(signature = (program, backend = "lite"))]
    fn evaluate(&self, program: &Program, backend: &str) -> PyResult<Vec<bool>> {
        let compiled = CompiledProgram::compile(&program.inner, self::backend(backend)?, &CpuConfig::default())
            .map_err(to_py)?;
        Ok(self.inner.evaluate(&compiled).cases)
    }

    fn regulation_solution(&self) -> Program {
        Program {
            inner: self.inner.regulation_solution(),
        }
    }

    fn first_signal_blind(&self, responses: [u8; 4]) -> Program {
        Program {
            inner: self.inner.first_signal_blind(responses),
        }
    }
}

/// Runs one replicate of the experiment described by `config` (TOML text).
/// Returns `(history_csv, solved_at)`.
#[pyfunction]
#[pyo3(signature = (config, replicate = 0))]
fn run_evolution(py: Python<'_>, config: &str, replicate: usize) -> PyResult<(String, Option<u64>)> {
    let config = ExperimentConfig::from_toml(config).map_err(to_py)?;
    let params = config.params_for(config.replicate_seed(replicate)).map_err(to_py)?;
    let outcome = py
        .detach(|| sgpvm::evolution::run_evolution(&params))
        .map_err(to_py)?;
    Ok((outcome.history.to_csv(), outcome.solved_at))
}

type RecordTuple = (String, String, f64, f64, usize);

fn record_tuple(r: &BenchRecord) -> RecordTuple {
    (
        r.library.name().to_string(),
        r.implementation.implementation().to_string(),
        r.wall_ns,
        r.cpu_ns,
        r.num_agents,
    )
}

fn record_from_tuple(t: RecordTuple) -> PyResult<BenchRecord> {
    let library: Benchmark = t.0.parse().map_err(to_py)?;
    Ok(BenchRecord::new(library, backend(&t.1)?, t.2, t.3, t.4))
}

/// Times one benchmark cell. Returns
/// `(library, implementation, wall_ns, cpu_ns, num_agents)` per replicate.
#[pyfunction]
#[pyo3(signature = (benchmark, backend, num_agents, replicates = 1, min_time_ms = 100, seed = 1))]
fn run_microbenchmark(
    py: Python<'_>,
    benchmark: &str,
    backend: &str,
    num_agents: usize,
    replicates: usize,
    min_time_ms: u64,
    seed: u64,
) -> PyResult<Vec<RecordTuple>> {
    let bench: Benchmark = benchmark.parse().map_err(to_py)?;
    let backend = self::backend(backend)?;
    let options = BenchOptions {
        replicates,
        min_time: Duration::from_millis(min_time_ms),
        seed,
    };
    let records = py
        .detach(|| bench::run_microbenchmark(bench, backend, num_agents, &options))
        .map_err(to_py)?;
    Ok(records.iter().map(record_tuple).collect())
}

/// `(library, num_agents, speedup or None)` per cell.
#[pyfunction]
fn compute_speedup(records: Vec<RecordTuple>) -> PyResult<Vec<(String, usize, Option<f64>)>> {
    let records = records
        .into_iter()
        .map(record_from_tuple)
        .collect::<PyResult<Vec<_>>>()?;
    Ok(bench::compute_speedup(&records)
        .into_iter()
        .map(|r| (r.benchmark.name().to_string(), r.num_agents, r.speedup))
        .collect())
}

#[pyfunction]
fn bench_csv(records: Vec<RecordTuple>) -> PyResult<String> {
    let records = records
        .into_iter()
        .map(record_from_tuple)
        .collect::<PyResult<Vec<_>>>()?;
    Ok(bench::records_to_csv(&records))
}

#[pyfunction]
fn parse_bench_csv(text: &str) -> PyResult<Vec<RecordTuple>> {
    Ok(bench::parse_csv(text).map_err(to_py)?.iter().map(record_tuple).collect())
}

/// Event-driven linear genetic programming with lite and flex backends.
#[pymodule(name = "sgpvm")]
pub mod sgpvm_module {
    #[pymodule_export]
    use super::{
        bench_csv, best_match, compute_speedup, match_score, parse_bench_csv, run_evolution,
        run_microbenchmark, ChangingEnvironment, ContextualSignal, Program, PyCpu, Tag,
    };

    #[pymodule_init]
    fn init(m: &pyo3::Bound<'_, pyo3::types::PyModule>) -> pyo3::PyResult<()> {
        use pyo3::types::PyModuleMethods;
        m.add("__version__", env!("CARGO_PKG_VERSION"))?;
        m.add("BENCH_CSV_HEADER", sgpvm::bench::CSV_HEADER)
    }
}
