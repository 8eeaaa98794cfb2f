use std::collections::BTreeMap;

use super::{Backend, Cpu, CpuConfig, Observer, VirtualCpu};
use crate::error::{Error, Result};
use crate::isa::Opcode;
use crate::program::Program;
use crate::tag::Tag;

#[derive(Clone, Debug)]
pub struct TraceEvent {
    pub cycle: u64,
    pub core_id: u32,
    pub opcode: Opcode,
    /// Register file of the executing core after the instruction.
    pub registers: Vec<f64>,
}

/// Bitwise equality, so that NaN results compare equal to themselves.
impl PartialEq for TraceEvent {
    fn eq(&self, other: &Self) -> bool {
        self.cycle == other.cycle
            && self.core_id == other.core_id
            && self.opcode == other.opcode
            && bits(&self.registers) == bits(&other.registers)
    }
}

fn bits(regs: &[f64]) -> Vec<u64> {
    regs.iter().map(|r| r.to_bits()).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
    pub rng_draws: u64,
}

impl Trace {
    /// Last register snapshot of every core that executed anything, as bit
    /// patterns keyed by core id.
    pub fn final_registers(&self) -> BTreeMap<u32, Vec<u64>> {
        let mut out = BTreeMap::new();
        for e in &self.events {
            out.insert(e.core_id, bits(&e.registers));
        }
        out
    }

    /// Events whose register snapshot differs from the previous snapshot of
    /// the same core (the first snapshot is compared to all zeros).
    pub fn register_changes(&self) -> Vec<&TraceEvent> {
        let mut last: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
        let mut changes = Vec::new();
        for e in &self.events {
            let now = bits(&e.registers);
            let prev = last
                .entry(e.core_id)
                .or_insert_with(|| vec![0f64.to_bits(); now.len()]);
            if *prev != now {
                changes.push(e);
                *prev = now;
            }
        }
        changes
    }
}

struct Recorder(Vec<TraceEvent>);

impl Observer for Recorder {
    fn on_execute(&mut self, cycle: u64, core_id: u32, opcode: Opcode, registers: &[f64]) {
        self.0.push(TraceEvent {
            cycle,
            core_id,
            opcode,
            registers: registers.to_vec(),
        });
    }
}

/// Opcodes with identical semantics on both backends.
pub fn is_equivalence_safe(op: Opcode) -> bool {
    !op.is_control_flow()
}

/// Launches `signal` on a fresh cpu and records every executed instruction
/// for `cycles` cycles.
///
/// Programs containing control-flow opcodes are refused: the two backends
/// deliberately interpret them differently.
pub fn run_equivalence_trace(
    program: &Program,
    signal: Tag,
    cycles: u64,
    seed: u64,
    backend: Backend,
) -> Result<Trace> {
    if let Some((index, inst)) = program
        .instructions()
        .iter()
        .enumerate()
        .find(|(_, i)| !is_equivalence_safe(i.op))
    {
        return Err(Error::BackendDivergent {
            index,
            opcode: inst.op.name(),
        });
    }
    let mut cpu = Cpu::new(program, backend, &CpuConfig::default(), seed)?;
    let mut recorder = Recorder(Vec::new());
    cpu.launch(signal);
    cpu.step_observed(cycles, &mut recorder);
    Ok(Trace {
        events: recorder.0,
        rng_draws: cpu.rng_draws(),
    })
}
