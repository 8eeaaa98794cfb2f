//! Per-agent execution engines.
//!
//! Two interchangeable backends implement [`VirtualCpu`]:
//!
//! * [`LiteCpu`] compiles a program into compact byte-code with precomputed
//!   jump and regulator targets, keeps a fixed `[f64; 8]` register file per
//!   core and dispatches through a single dense `match`.
//! * [`FlexCpu`] looks up dynamically bound handlers in an instruction
//!   library, sizes register files at run time, and runs control flow as
//!   nested blocks inside call-stack frames.
//!
//! Both share the same agent-level state ([`AgentState`]): module
//! selector with regulation and match cache, PRNG and response buffer.

mod flex;
mod lite;
mod trace;

use std::fmt;
use std::str::FromStr;

pub use flex::{FlexCpu, FlexProgram, InstructionLibrary};
pub use lite::{LiteCpu, LiteProgram};
pub use trace::{run_equivalence_trace, Trace, TraceEvent};

use crate::error::{Error, Result};
use crate::isa::Opcode;
use crate::program::{Program, NUM_REGISTERS};
use crate::rng::Rng;
use crate::tag::{ModuleSelector, RegulationState, Tag};

/// Default number of concurrently executing cores per agent.
pub const DEFAULT_MAX_CORES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Backend {
    Lite,
    Flex,
}

impl Backend {
    pub const ALL: [Backend; 2] = [Backend::Lite, Backend::Flex];

    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Lite => "lite",
            Backend::Flex => "flex",
        }
    }

    /// Label written to the `Implementation` column of benchmark CSVs.
    pub fn implementation(self) -> &'static str {
        match self {
            Backend::Lite => "lite",
            Backend::Flex => "vanilla",
        }
    }
}

impl serde::Serialize for Backend {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> serde::Deserialize<'de> for Backend {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lite" => Ok(Backend::Lite),
            "flex" | "vanilla" => Ok(Backend::Flex),
            _ => Err(Error::Config(format!(
                "unknown backend {s:?} (expected lite or flex)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CpuConfig {
    pub max_cores: usize,
    /// Minimum raw tag similarity a module needs to be triggered.
    pub min_raw: f64,
    /// Register-file size. The lite backend only supports
    /// [`NUM_REGISTERS`].
    pub registers: usize,
}

impl Default for CpuConfig {
    fn default() -> Self {
        CpuConfig {
            max_cores: DEFAULT_MAX_CORES,
            min_raw: 0.0,
            registers: NUM_REGISTERS,
        }
    }
}

/// Most recent response expressed since the last reset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ResponseBuffer {
    pub last: Option<u8>,
    pub count: u64,
}

impl ResponseBuffer {
    #[inline]
    pub fn record(&mut self, k: u8) {
        self.last = Some(k);
        self.count += 1;
    }

    pub fn reset(&mut self) {
        *self = ResponseBuffer::default();
    }
}

/// State owned by one agent regardless of backend.
#[derive(Clone, Debug)]
pub struct AgentState {
    pub selector: ModuleSelector,
    pub rng: Rng,
    pub response: ResponseBuffer,
    pub cycle: u64,
    next_core_id: u32,
}

impl AgentState {
    pub fn new(module_tags: Vec<Tag>, min_raw: f64, seed: u64) -> Self {
        AgentState {
            selector: ModuleSelector::new(module_tags, min_raw),
            rng: Rng::new(seed),
            response: ResponseBuffer::default(),
            cycle: 0,
            next_core_id: 0,
        }
    }

    pub(crate) fn next_core_id(&mut self) -> u32 {
        let id = self.next_core_id;
        self.next_core_id += 1;
        id
    }
}

/// Receives one callback per executed instruction.
pub trait Observer {
    fn on_execute(&mut self, cycle: u64, core_id: u32, op: Opcode, registers: &[f64]);
}

/// Observer that does nothing; compiles away.
pub struct NoObserver;

impl Observer for NoObserver {
    #[inline(always)]
    fn on_execute(&mut self, _: u64, _: u32, _: Opcode, _: &[f64]) {}
}

pub trait VirtualCpu {
    /// Starts a core on the best-matching module for `signal`. Returns
    /// `false`, leaving the cpu untouched, when every core slot is busy or
    /// no module clears the match threshold.
    fn launch(&mut self, signal: Tag) -> bool;

    /// Runs `cycles` rounds; in each round every active core executes one
    /// instruction in launch order. Finished cores are removed at the end
    /// of the round.
    fn step_observed<O: Observer>(&mut self, cycles: u64, observer: &mut O)
    where
        Self: Sized;

    fn step(&mut self, cycles: u64)
    where
        Self: Sized,
    {
        self.step_observed(cycles, &mut NoObserver);
    }

    /// Removes every core. Regulators, match cache, PRNG and response
    /// buffer are kept.
    fn kill_all_cores(&mut self);

    fn core_count(&self) -> usize;

    /// Registers of the `i`-th active core, in launch order.
    fn core_registers(&self, i: usize) -> Option<&[f64]>;

    fn agent(&self) -> &AgentState;

    fn agent_mut(&mut self) -> &mut AgentState;

    fn regulation(&self) -> &RegulationState {
        self.agent().selector.regulation()
    }

    fn cache_generation(&self) -> u64 {
        self.agent().selector.cache().generation()
    }

    fn response(&self) -> Option<u8> {
        self.agent().response.last
    }

    fn reset_response(&mut self) {
        self.agent_mut().response.reset();
    }

    fn rng_draws(&self) -> u64 {
        self.agent().rng.draws()
    }
}

/// A cpu of either backend, chosen at run time.
#[derive(Clone, Debug)]
pub enum Cpu {
    Lite(LiteCpu),
    Flex(FlexCpu),
}

/// A program compiled for either backend; cheap to instantiate many cpus
/// from.
#[derive(Clone, Debug)]
pub enum CompiledProgram {
    Lite(std::sync::Arc<LiteProgram>),
    Flex(std::sync::Arc<FlexProgram>),
}

impl CompiledProgram {
    pub fn compile(program: &Program, backend: Backend, config: &CpuConfig) -> Result<Self> {
        Ok(match backend {
            Backend::Lite => CompiledProgram::Lite(LiteProgram::compile(program)?.into()),
            Backend::Flex => CompiledProgram::Flex(
                FlexProgram::compile(program, InstructionLibrary::shared(), config.registers)?
                    .into(),
            ),
        })
    }

    pub fn instantiate(&self, config: &CpuConfig, seed: u64) -> Cpu {
        match self {
            CompiledProgram::Lite(p) => Cpu::Lite(LiteCpu::with_program(p.clone(), config, seed)),
            CompiledProgram::Flex(p) => Cpu::Flex(FlexCpu::with_program(p.clone(), config, seed)),
        }
    }
}

impl Cpu {
    pub fn new(program: &Program, backend: Backend, config: &CpuConfig, seed: u64) -> Result<Self> {
        Ok(CompiledProgram::compile(program, backend, config)?.instantiate(config, seed))
    }

    pub fn backend(&self) -> Backend {
        match self {
            Cpu::Lite(_) => Backend::Lite,
            Cpu::Flex(_) => Backend::Flex,
        }
    }
}

macro_rules! delegate {
    ($self:ident, $cpu:ident => $e:expr) => {
        match $self {
            Cpu::Lite($cpu) => $e,
            Cpu::Flex($cpu) => $e,
        }
    };
}

impl VirtualCpu for Cpu {
    fn launch(&mut self, signal: Tag) -> bool {
        delegate!(self, c => c.launch(signal))
    }

    fn step_observed<O: Observer>(&mut self, cycles: u64, observer: &mut O) {
        delegate!(self, c => c.step_observed(cycles, observer))
    }

    fn kill_all_cores(&mut self) {
        delegate!(self, c => c.kill_all_cores())
    }

    fn core_count(&self) -> usize {
        delegate!(self, c => c.core_count())
    }

    fn core_registers(&self, i: usize) -> Option<&[f64]> {
        delegate!(self, c => c.core_registers(i))
    }

    fn agent(&self) -> &AgentState {
        delegate!(self, c => c.agent())
    }

    fn agent_mut(&mut self) -> &mut AgentState {
        delegate!(self, c => c.agent_mut())
    }
}
