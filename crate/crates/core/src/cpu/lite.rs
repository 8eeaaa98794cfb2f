//! Byte-code backend: dense opcode switch, fixed register arrays, jump-based
//! control flow and no call stack.

use std::sync::Arc;

use super::{AgentState, CpuConfig, Observer, VirtualCpu};
use crate::error::{Error, Result};
use crate::isa::{self, Opcode};
use crate::program::{Module, Program, NUM_REGISTERS};
use crate::tag::{best_raw_match, Tag};

const _: () = assert!(NUM_REGISTERS.is_power_of_two());
const REG_MASK: u8 = (NUM_REGISTERS - 1) as u8;
const NO_TARGET: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct ByteCode {
    op: Opcode,
    a: u8,
    b: u8,
    c: u8,
    /// Jump destination for jumps, target module for regulator opcodes,
    /// result lane for arithmetic, otherwise unused.
    aux: u32,
}

/// A program lowered for the lite backend.
#[derive(Clone, Debug)]
pub struct LiteProgram {
    code: Vec<ByteCode>,
    modules: Vec<Module>,
}

impl LiteProgram {
    pub fn compile(program: &Program) -> Result<Self> {
        let modules = program.modules().to_vec();
        let module_tags = program.module_tags();
        let mut code = Vec::with_capacity(program.len());
        for (i, inst) in program.instructions().iter().enumerate() {
            program.check_operands(i, NUM_REGISTERS)?;
            let aux = match inst.op {
                Opcode::JumpIfNotZero | Opcode::JumpIfZero => {
                    jump_target(program, &modules, i).map_or(NO_TARGET, |t| t as u32)
                }
                op if op.is_regulation() => best_raw_match(inst.tag, &module_tags)
                    .map_or(NO_TARGET, |m| m as u32),
                Opcode::Add => 0,
                Opcode::Subtract => 1,
                Opcode::Multiply => 2,
                Opcode::Divide => 3,
                _ => NO_TARGET,
            };
            code.push(ByteCode {
                op: inst.op,
                a: inst.args[0],
                b: inst.args[1],
                c: inst.args[2],
                aux,
            });
        }
        if code.len() >= NO_TARGET as usize {
            return Err(Error::InvalidInput("program too long".into()));
        }
        Ok(LiteProgram { code, modules })
    }

    pub fn modules(&self) -> &[Module] {
        &self.modules
    }

    pub fn len(&self) -> usize {
        self.code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.code.is_empty()
    }
}

/// Best tag-matching `LocalAnchor` in the module containing `at`. Ties go to
/// the first anchor found scanning forward from `at + 1`, wrapping to the
/// module start.
pub(crate) fn jump_target(program: &Program, modules: &[Module], at: usize) -> Option<usize> {
    let module = modules.iter().find(|m| (m.start..m.end).contains(&at))?;
    let len = module.end - module.start;
    let query = program.instructions()[at].tag;
    let mut best: Option<(usize, u32)> = None;
    for offset in 1..=len {
        let pos = module.start + (at - module.start + offset) % len;
        let inst = &program.instructions()[pos];
        if inst.op != Opcode::LocalAnchor {
            continue;
        }
        let d = query.hamming_distance(inst.tag);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((pos, d));
        }
    }
    best.map(|(pos, _)| pos)
}

#[derive(Clone, Debug)]
struct Core {
    id: u32,
    ip: u32,
    end: u32,
    alive: bool,
    regs: [f64; NUM_REGISTERS],
}

#[derive(Clone, Debug)]
pub struct LiteCpu {
    program: Arc<LiteProgram>,
    cores: Vec<Core>,
    max_cores: usize,
    agent: AgentState,
}

impl LiteCpu {
    pub fn new(program: &Program, config: &CpuConfig, seed: u64) -> Result<Self> {
        if config.registers != NUM_REGISTERS {
            return Err(Error::Config(format!(
                "the lite backend has a fixed register file of {NUM_REGISTERS}"
            )));
        }
        Ok(Self::with_program(
            Arc::new(LiteProgram::compile(program)?),
            config,
            seed,
        ))
    }

    pub fn with_program(program: Arc<LiteProgram>, config: &CpuConfig, seed: u64) -> Self {
        let tags: Vec<Tag> = program.modules.iter().map(|m| m.tag).collect();
        LiteCpu {
            agent: AgentState::new(tags, config.min_raw, seed),
            cores: Vec::with_capacity(config.max_cores),
            max_cores: config.max_cores,
            program,
        }
    }

    pub fn program(&self) -> &Arc<LiteProgram> {
        &self.program
    }
}

#[inline(always)]
/// Executes the instruction at `ip` and advances `ip`; returns whether the
/// core is still alive.
#[allow(clippy::too_many_arguments)]
fn execute<O: Observer>(
    regs: &mut [f64; NUM_REGISTERS],
    id: u32,
    ip: &mut u32,
    end: u32,
    code: &[ByteCode],
    agent: &mut AgentState,
    cycle: u64,
    observer: &mut O,
) -> bool {
    let inst = &code[*ip as usize];
    *ip += 1;
    let r = &mut *regs;
    macro_rules! reg {
        ($f:ident) => {
            (inst.$f & REG_MASK) as usize
        };
    }
    match inst.op {
        Opcode::Nop | Opcode::GlobalAnchor | Opcode::LocalAnchor => {}
        // one arm for all four keeps random arithmetic off the branch predictor
        Opcode::Add | Opcode::Subtract | Opcode::Multiply | Opcode::Divide => {
            let (x, y) = (r[reg!(a)], r[reg!(b)]);
            let lanes = [x + y, x - y, x * y, isa::divide(x, y)];
            r[reg!(c)] = lanes[(inst.aux & 3) as usize];
        }
        Opcode::And => r[reg!(c)] = (isa::to_int(r[reg!(a)]) & isa::to_int(r[reg!(b)])) as f64,
        Opcode::Or => r[reg!(c)] = (isa::to_int(r[reg!(a)]) | isa::to_int(r[reg!(b)])) as f64,
        Opcode::Xor => r[reg!(c)] = (isa::to_int(r[reg!(a)]) ^ isa::to_int(r[reg!(b)])) as f64,
        Opcode::Not => r[reg!(c)] = (!isa::to_int(r[reg!(a)])) as f64,
        Opcode::ShiftLeft => r[reg!(c)] = isa::shift_left(r[reg!(a)], r[reg!(b)]),
        Opcode::ShiftRight => r[reg!(c)] = isa::shift_right(r[reg!(a)], r[reg!(b)]),
        Opcode::Equal => r[reg!(c)] = isa::bool_value(r[reg!(a)] == r[reg!(b)]),
        Opcode::NotEqual => r[reg!(c)] = isa::bool_value(r[reg!(a)] != r[reg!(b)]),
        Opcode::LessThan => r[reg!(c)] = isa::bool_value(r[reg!(a)] < r[reg!(b)]),
        Opcode::GreaterThan => r[reg!(c)] = isa::bool_value(r[reg!(a)] > r[reg!(b)]),
        Opcode::JumpIfNotZero => {
            if r[reg!(a)] != 0.0 && inst.aux != NO_TARGET {
                *ip = inst.aux;
            }
        }
        Opcode::JumpIfZero => {
            if r[reg!(a)] == 0.0 && inst.aux != NO_TARGET {
                *ip = inst.aux;
            }
        }
        Opcode::Terminate => {
            observer.on_execute(cycle, id, inst.op, regs);
            return false;
        }
        Opcode::RandUniform => r[reg!(a)] = agent.rng.uniform(),
        Opcode::RandBernoulli => {
            let p = isa::bernoulli_probability(r[reg!(b)]);
            r[reg!(a)] = isa::bool_value(agent.rng.uniform() < p);
        }
        Opcode::SetRegulator => agent.selector.set_regulator(inst.aux as usize, r[reg!(a)]),
        Opcode::AdjustRegulator => agent.selector.adjust_regulator(inst.aux as usize, r[reg!(a)]),
        Opcode::SenseRegulator => r[reg!(a)] = agent.selector.regulation().get(inst.aux as usize),
        Opcode::ClearRegulator => agent.selector.clear_regulator(inst.aux as usize),
        Opcode::Response(k) => agent.response.record(k),
    }
    observer.on_execute(cycle, id, inst.op, regs);
    *ip < end
}

impl VirtualCpu for LiteCpu {
    fn launch(&mut self, signal: Tag) -> bool {
        if self.cores.len() >= self.max_cores {
            return false;
        }
        let Some(m) = self.agent.selector.select(signal) else {
            return false;
        };
        let module = self.program.modules[m];
        let id = self.agent.next_core_id();
        self.cores.push(Core {
            id,
            ip: module.start as u32,
            end: module.end as u32,
            alive: module.start < module.end,
            regs: [0.0; NUM_REGISTERS],
        });
        true
    }

    fn step_observed<O: Observer>(&mut self, cycles: u64, observer: &mut O) {
        let code = &self.program.code[..];
        if let [core] = &mut self.cores[..] {
            // a lone core has nobody to interleave with
            let mut ip = core.ip;
            let mut cycle = self.agent.cycle;
            let stop = cycle + cycles;
            let mut alive = core.alive;
            while alive && cycle < stop {
                alive = execute(
                    &mut core.regs,
                    core.id,
                    &mut ip,
                    core.end,
                    code,
                    &mut self.agent,
                    cycle,
                    observer,
                );
                cycle += 1;
            }
            core.ip = ip;
            core.alive = alive;
            if !alive {
                self.cores.clear();
            }
            self.agent.cycle = stop;
            return;
        }
        for done in 0..cycles {
            if self.cores.is_empty() {
                self.agent.cycle += cycles - done;
                return;
            }
            let cycle = self.agent.cycle;
            let mut retire = false;
            for core in &mut self.cores {
                if core.alive {
                    core.alive = execute(
                        &mut core.regs,
                        core.id,
                        &mut core.ip,
                        core.end,
                        code,
                        &mut self.agent,
                        cycle,
                        observer,
                    );
                }
                retire |= !core.alive;
            }
            if retire {
                self.cores.retain(|c| c.alive);
            }
            self.agent.cycle += 1;
        }
    }

    fn kill_all_cores(&mut self) {
        self.cores.clear();
    }

    fn core_count(&self) -> usize {
        self.cores.len()
    }

    fn core_registers(&self, i: usize) -> Option<&[f64]> {
        self.cores.get(i).map(|c| &c.regs[..])
    }

    fn agent(&self) -> &AgentState {
        &self.agent
    }

    fn agent_mut(&mut self) -> &mut AgentState {
        &mut self.agent
    }
}
