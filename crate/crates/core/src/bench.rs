//! Microbenchmarks comparing the two backends across agent counts.
//!
//! A timed pass runs every agent's cpu for 100 cycles (relaunching the
//! agent's signal first if no core is active). Timings are reported in
//! nanoseconds per agent per pass.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::hint::black_box;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};


use crate::cpu::{Backend, CpuConfig, FlexCpu, FlexProgram, InstructionLibrary, LiteCpu, LiteProgram, VirtualCpu};
use crate::error::{Error, Result};
use crate::isa::InstructionSetSpec;
use crate::program::random_program;
use crate::rng::{derive_seed, Rng};
use crate::tag::Tag;

pub const CSV_HEADER: &str = "Library,Implementation,Wall Nanoseconds,CPU Nanoseconds,num agents";
pub const SPEEDUP_CSV_HEADER: &str = "Library,num agents,Speedup";
pub const WORKLOAD_CSV_HEADER: &str = "Library,Implementation,num agents,program digest,state digest";

pub const AGENT_SWEEP: [usize; 4] = [1, 32, 1024, 32768];
pub const PROGRAM_LENGTH: usize = 100;
pub const CYCLES_PER_PASS: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Benchmark {
    Control,
    Nop,
    Arithmetic,
    Complete,
    SansRegulation,
}

impl Benchmark {
    pub const ALL: [Benchmark; 5] = [
        Benchmark::Control,
        Benchmark::Nop,
        Benchmark::Arithmetic,
        Benchmark::Complete,
        Benchmark::SansRegulation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Control => "control",
            Benchmark::Nop => "nop",
            Benchmark::Arithmetic => "arithmetic",
            Benchmark::Complete => "complete",
            Benchmark::SansRegulation => "sans_regulation",
        }
    }

    /// Instruction set the agents' programs are drawn from. The control
    /// benchmark builds nop agents but never runs them.
    pub fn instruction_set(self) -> InstructionSetSpec {
        match self {
            Benchmark::Control | Benchmark::Nop => InstructionSetSpec::nop(),
            Benchmark::Arithmetic => InstructionSetSpec::arithmetic(),
            Benchmark::Complete => InstructionSetSpec::complete(),
            Benchmark::SansRegulation => InstructionSetSpec::sans_regulation(),
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl serde::Serialize for Benchmark {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> serde::Deserialize<'de> for Benchmark {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Benchmark::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown benchmark {s:?}")))
    }
}

/// One timing measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchRecord {
    pub library: Benchmark,
    pub implementation: Backend,
    pub wall_ns: f64,
    pub cpu_ns: f64,
    pub num_agents: usize,
}

impl BenchRecord {
    /// Timings are kept at the 0.01 ns resolution the CSV stores.
    pub fn new(library: Benchmark, implementation: Backend, wall_ns: f64, cpu_ns: f64, num_agents: usize) -> Self {
        let centi = |x: f64| (x * 100.0).round() / 100.0;
        BenchRecord {
            library,
            implementation,
            wall_ns: centi(wall_ns),
            cpu_ns: centi(cpu_ns),
            num_agents,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchOptions {
    pub replicates: usize,
    /// Minimum length of each timed region.
    pub min_time: Duration,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            replicates: 20,
            min_time: Duration::from_millis(100),
            seed: 1,
        }
    }
}

fn thread_cpu_time() -> Duration {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    // SAFETY: `ts` is a valid, writable timespec for the duration of the call.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return Duration::ZERO;
    }
    Duration::new(ts.tv_sec as u64, ts.tv_nsec as u32)
}

struct Agent<C> {
    cpu: C,
    signal: Tag,
}

fn agent_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, &[i as u64])
}

fn build_agents<C>(
    bench: Benchmark,
    num_agents: usize,
    seed: u64,
    make: impl Fn(&crate::program::Program, u64) -> Result<C>,
) -> Result<Vec<Agent<C>>> {
    let set = bench.instruction_set();
    (0..num_agents)
        .map(|i| {
            let mut rng = Rng::new(agent_seed(seed, i));
            let program = random_program(&set, PROGRAM_LENGTH, &mut rng)?;
            let signal = Tag::random(&mut rng);
            Ok(Agent {
                cpu: make(&program, rng.next_u64())?,
                signal,
            })
        })
        .collect()
}

fn lite_agents(bench: Benchmark, n: usize, seed: u64) -> Result<Vec<Agent<LiteCpu>>> {
    let config = CpuConfig::default();
    build_agents(bench, n, seed, |p, s| {
        Ok(LiteCpu::with_program(LiteProgram::compile(p)?.into(), &config, s))
    })
}

fn flex_agents(bench: Benchmark, n: usize, seed: u64) -> Result<Vec<Agent<FlexCpu>>> {
    let config = CpuConfig::default();
    let library = InstructionLibrary::shared();
    build_agents(bench, n, seed, |p, s| {
        let compiled = FlexProgram::compile(p, library.clone(), config.registers)?;
        Ok(FlexCpu::with_program(compiled.into(), &config, s))
    })
}

#[inline(never)]
fn run_pass<C: VirtualCpu>(agents: &mut [Agent<C>]) {
    for agent in agents.iter_mut() {
        if agent.cpu.core_count() == 0 {
            agent.cpu.launch(agent.signal);
        }
        agent.cpu.step(CYCLES_PER_PASS);
    }
}

#[inline(never)]
fn control_pass<C>(agents: &mut [Agent<C>]) {
    for agent in agents.iter_mut() {
        black_box(&mut *agent);
    }
}

/// Times `pass` until one measurement lasts at least `min_time`; returns
/// (wall, cpu) nanoseconds per pass.
fn measure(min_time: Duration, mut pass: impl FnMut()) -> (f64, f64) {
    pass(); // warm-up
    let mut iters: u64 = 1;
    loop {
        let cpu0 = thread_cpu_time();
        let t0 = Instant::now();
        for _ in 0..iters {
            pass();
        }
        let wall = t0.elapsed();
        let cpu = thread_cpu_time().saturating_sub(cpu0);
        if wall >= min_time {
            let n = iters as f64;
            return (wall.as_nanos() as f64 / n, cpu.as_nanos() as f64 / n);
        }
        let per_iter = (wall.as_nanos() as f64 / iters as f64).max(1.0);
        let wanted = (min_time.as_nanos() as f64 * 1.2 / per_iter).ceil() as u64;
        iters = wanted.clamp(iters + 1, iters.saturating_mul(100));
    }
}

fn time_agents<C: VirtualCpu>(bench: Benchmark, agents: &mut [Agent<C>], min_time: Duration) -> (f64, f64) {
    if bench == Benchmark::Control {
        measure(min_time, || control_pass(agents))
    } else {
        measure(min_time, || run_pass(agents))
    }
}

/// Runs `replicates` timing measurements of `bench` on `backend` with
/// `num_agents` agents. Each replicate builds a fresh set of agents from the
/// same seeds.
pub fn run_microbenchmark(
    bench: Benchmark,
    backend: Backend,
    num_agents: usize,
    options: &BenchOptions,
) -> Result<Vec<BenchRecord>> {
    if options.replicates == 0 {
        return Err(Error::Config("replicates must be at least 1".into()));
    }
    if num_agents == 0 {
        return Err(Error::Config("agent count must be at least 1".into()));
    }
    (0..options.replicates)
        .map(|_| run_replicate(bench, backend, num_agents, options))
        .collect()
}

fn run_replicate(
    bench: Benchmark,
    backend: Backend,
    num_agents: usize,
    options: &BenchOptions,
) -> Result<BenchRecord> {
    let (wall, cpu) = match backend {
        Backend::Lite => {
            let mut agents = lite_agents(bench, num_agents, options.seed)?;
            time_agents(bench, &mut agents, options.min_time)
        }
        Backend::Flex => {
            let mut agents = flex_agents(bench, num_agents, options.seed)?;
            time_agents(bench, &mut agents, options.min_time)
        }
    };
    let n = num_agents as f64;
    Ok(BenchRecord::new(bench, backend, wall / n, cpu / n, num_agents))
}

/// Runs every (benchmark, agent count) cell on every backend. Backends
/// alternate replicate by replicate so slow drifts in machine speed hit
/// them equally. Records come out grouped by benchmark, backend and agent
/// count.
pub fn run_sweep(
    benches: &[Benchmark],
    backends: &[Backend],
    agent_counts: &[usize],
    options: &BenchOptions,
) -> Result<Vec<BenchRecord>> {
    if options.replicates == 0 {
        return Err(Error::Config("replicates must be at least 1".into()));
    }
    if agent_counts.contains(&0) {
        return Err(Error::Config("agent count must be at least 1".into()));
    }
    let mut records = Vec::new();
    for &bench in benches {
        let mut cell: Vec<BenchRecord> = Vec::new();
        for &n in agent_counts {
            for _ in 0..options.replicates {
                for &backend in backends {
                    cell.push(run_replicate(bench, backend, n, options)?);
                }
            }
        }
        for &backend in backends {
            records.extend(cell.iter().filter(|r| r.implementation == backend));
        }
    }
    Ok(records)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpeedupRow {
    pub benchmark: Benchmark,
    pub num_agents: usize,
    /// Median flex wall time over median lite wall time; `None` when one
    /// of the backends has no records for this cell.
    pub speedup: Option<f64>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    })
}

/// One row per (benchmark, agent count) cell present in `records`.
pub fn compute_speedup(records: &[BenchRecord]) -> Vec<SpeedupRow> {
    let mut cells: BTreeMap<(Benchmark, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let cell = cells.entry((r.library, r.num_agents)).or_default();
        match r.implementation {
            Backend::Flex => cell.0.push(r.wall_ns),
            Backend::Lite => cell.1.push(r.wall_ns),
        }
    }
    cells
        .into_iter()
        .map(|((benchmark, num_agents), (mut flex, mut lite))| {
            let speedup = match (median(&mut flex), median(&mut lite)) {
                (Some(f), Some(l)) if l > 0.0 => Some(f / l),
                _ => None,
            };
            SpeedupRow {
                benchmark,
                num_agents,
                speedup,
            }
        })
        .collect()
}

pub fn records_to_csv(records: &[BenchRecord]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{:.2},{:.2},{}\n",
            r.library,
            r.implementation.implementation(),
            r.wall_ns,
            r.cpu_ns,
            r.num_agents
        ));
    }
    out
}

pub fn emit_csv(records: &[BenchRecord], path: &Path) -> Result<()> {
    fs::write(path, records_to_csv(records))?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<BenchRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {CSV_HEADER:?}"),
        });
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let err = |m: &str| Error::Parse {
                line: i + 2,
                message: m.to_string(),
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(err("expected 5 fields"));
            }
            Ok(BenchRecord {
                library: f[0].parse().map_err(|_| err("unknown library"))?,
                implementation: f[1].parse().map_err(|_| err("unknown implementation"))?,
                wall_ns: f[2].parse().map_err(|_| err("bad wall time"))?,
                cpu_ns: f[3].parse().map_err(|_| err("bad cpu time"))?,
                num_agents: f[4].parse().map_err(|_| err("bad agent count"))?,
            })
        })
        .collect()
}

pub fn speedup_to_csv(rows: &[SpeedupRow]) -> String {
    let mut out = format!("{SPEEDUP_CSV_HEADER}\n");
    for r in rows {
        match r.speedup {
            Some(s) => out.push_str(&format!("{},{},{:.4}\n", r.benchmark, r.num_agents, s)),
            None => out.push_str(&format!("{},{},NA\n", r.benchmark, r.num_agents)),
        }
    }
    out
}

/// Deterministic description of one benchmark cell: a digest of every
/// agent's program and of the agents' state after one pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WorkloadRow {
    pub library: Benchmark,
    pub implementation: Backend,
    pub num_agents: usize,
    pub program_digest: u64,
    pub state_digest: u64,
}

fn fold(h: u64, v: u64) -> u64 {
    crate::rng::splitmix64(h ^ v)
}

fn state_digest<C: VirtualCpu>(agents: &[Agent<C>]) -> u64 {
    let mut h = 0;
    for a in agents {
        let cpu = &a.cpu;
        h = fold(h, cpu.agent().cycle);
        h = fold(h, cpu.core_count() as u64);
        for i in 0..cpu.core_count() {
            for r in cpu.core_registers(i).unwrap_or(&[]) {
                h = fold(h, r.to_bits());
            }
        }
        for r in cpu.regulation().as_slice() {
            h = fold(h, r.to_bits());
        }
        h = fold(h, cpu.rng_draws());
        h = fold(h, cpu.agent().response.count);
    }
    h
}

pub fn workload(bench: Benchmark, backend: Backend, num_agents: usize, seed: u64) -> Result<WorkloadRow> {
    let set = bench.instruction_set();
    let mut program_digest = 0;
    for i in 0..num_agents {
        let p = random_program(&set, PROGRAM_LENGTH, &mut Rng::new(agent_seed(seed, i)))?;
        program_digest = fold(program_digest, p.fingerprint());
    }
    let state_digest = match backend {
        Backend::Lite => {
            let mut agents = lite_agents(bench, num_agents, seed)?;
            if bench != Benchmark::Control {
                run_pass(&mut agents);
            }
            state_digest(&agents)
        }
        Backend::Flex => {
            let mut agents = flex_agents(bench, num_agents, seed)?;
            if bench != Benchmark::Control {
                run_pass(&mut agents);
            }
            state_digest(&agents)
        }
    };
    Ok(WorkloadRow {
        library: bench,
        implementation: backend,
        num_agents,
        program_digest,
        state_digest,
    })
}

pub fn workload_to_csv(rows: &[WorkloadRow]) -> String {
    let mut out = format!("{WORKLOAD_CSV_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:016x},{:016x}\n",
            r.library,
            r.implementation.implementation(),
            r.num_agents,
            r.program_digest,
            r.state_digest
        ));
    }
    out
}
