//! Reference backend in the style of a general-purpose event-driven GP
//! library: every opcode is a closure bound in an [`InstructionLibrary`],
//! register files are sized at run time, each core keeps a call stack of
//! frames, and control flow is expressed as nested blocks.
//!
//! Shared genomes are read in a block dialect:
//!
//! | genome opcode   | flex meaning                                          |
//! |-----------------|-------------------------------------------------------|
//! | `JumpIfNotZero` | `IfNotZero a`: enter block when `reg[a] != 0`         |
//! | `JumpIfZero`    | `While a`: repeat block while `reg[a] != 0`           |
//! | `LocalAnchor`   | `CloseBlock`                                          |
//!
//! A skipped block resumes after its matching `CloseBlock` (or at the end
//! of the module). Reaching the end of a module closes open blocks, looping
//! back to the innermost open `While`.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use super::{AgentState, CpuConfig, Observer, VirtualCpu};
use crate::error::{Error, Result};
use crate::isa::{self, Opcode, BASE_OPCODES, MAX_RESPONSES};
use crate::program::{Module, Program};
use crate::tag::{best_raw_match, Tag};

type Handler = Box<dyn Fn(&mut FlexContext<'_>, &FlexInstruction) + Send + Sync>;

/// Execution context handed to instruction handlers.
pub struct FlexContext<'a> {
    core: &'a mut FlexCore,
    agent: &'a mut AgentState,
    program: &'a FlexProgram,
}

impl FlexContext<'_> {
    fn frame(&mut self) -> &mut Frame {
        self.core
            .call_stack
            .last_mut()
            .expect("handler invoked without an active frame")
    }

    fn reg(&mut self, i: usize) -> f64 {
        self.frame().regs[i]
    }

    fn set_reg(&mut self, i: usize, v: f64) {
        self.frame().regs[i] = v;
    }

    fn regulator_target(&self, tag: Tag) -> Option<usize> {
        best_raw_match(tag, &self.program.module_tags)
    }
}

/// Named handlers, bound at run time and looked up by opcode.
pub struct InstructionLibrary {
    handlers: Vec<(String, Handler)>,
    by_opcode: HashMap<Opcode, usize>,
}

impl std::fmt::Debug for InstructionLibrary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list()
            .entries(self.handlers.iter().map(|(n, _)| n))
            .finish()
    }
}

impl InstructionLibrary {
    pub fn new() -> Self {
        InstructionLibrary {
            handlers: Vec::new(),
            by_opcode: HashMap::new(),
        }
    }

    pub fn bind<F>(&mut self, op: Opcode, name: &str, handler: F)
    where
        F: Fn(&mut FlexContext<'_>, &FlexInstruction) + Send + Sync + 'static,
    {
        self.by_opcode.insert(op, self.handlers.len());
        self.handlers.push((name.to_string(), Box::new(handler)));
    }

    pub fn handler_name(&self, id: usize) -> &str {
        &self.handlers[id].0
    }

    pub fn lookup(&self, op: Opcode) -> Option<usize> {
        self.by_opcode.get(&op).copied()
    }

    /// The library covering every opcode, shared by all flex cpus.
    pub fn shared() -> Arc<InstructionLibrary> {
        static LIB: OnceLock<Arc<InstructionLibrary>> = OnceLock::new();
        LIB.get_or_init(|| Arc::new(Self::standard())).clone()
    }

    pub fn standard() -> Self {
        let mut lib = InstructionLibrary::new();
        for op in BASE_OPCODES {
            bind_standard(&mut lib, op);
        }
        for k in 0..MAX_RESPONSES {
            lib.bind(Opcode::Response(k), &format!("Response_{k}"), move |ctx, _| {
                ctx.agent.response.record(k)
            });
        }
        lib
    }
}

impl Default for InstructionLibrary {
    fn default() -> Self {
        Self::new()
    }
}

fn binary(
    lib: &mut InstructionLibrary,
    op: Opcode,
    f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
) {
    lib.bind(op, &op.name(), move |ctx, inst| {
        let x = ctx.reg(inst.args[0]);
        let y = ctx.reg(inst.args[1]);
        ctx.set_reg(inst.args[2], f(x, y));
    });
}

fn bind_standard(lib: &mut InstructionLibrary, op: Opcode) {
    use Opcode::*;
    match op {
        Nop | GlobalAnchor => lib.bind(op, &op.name(), |_, _| {}),
        Add => binary(lib, op, |x, y| x + y),
        Subtract => binary(lib, op, |x, y| x - y),
        Multiply => binary(lib, op, |x, y| x * y),
        Divide => binary(lib, op, isa::divide),
        And => binary(lib, op, |x, y| (isa::to_int(x) & isa::to_int(y)) as f64),
        Or => binary(lib, op, |x, y| (isa::to_int(x) | isa::to_int(y)) as f64),
        Xor => binary(lib, op, |x, y| (isa::to_int(x) ^ isa::to_int(y)) as f64),
        Not => binary(lib, op, |x, _| (!isa::to_int(x)) as f64),
        ShiftLeft => binary(lib, op, isa::shift_left),
        ShiftRight => binary(lib, op, isa::shift_right),
        Equal => binary(lib, op, |x, y| isa::bool_value(x == y)),
        NotEqual => binary(lib, op, |x, y| isa::bool_value(x != y)),
        LessThan => binary(lib, op, |x, y| isa::bool_value(x < y)),
        GreaterThan => binary(lib, op, |x, y| isa::bool_value(x > y)),
        JumpIfNotZero => lib.bind(op, "IfNotZero", |ctx, inst| {
            open_block(ctx, inst, BlockKind::If)
        }),
        JumpIfZero => lib.bind(op, "While", |ctx, inst| {
            open_block(ctx, inst, BlockKind::While)
        }),
        LocalAnchor => lib.bind(op, "CloseBlock", |ctx, _| {
            let frame = ctx.frame();
            if let Some(block) = frame.blocks.pop() {
                if block.kind == BlockKind::While {
                    frame.ip = block.opener;
                }
            }
        }),
        Terminate => lib.bind(op, "Terminate", |ctx, _| ctx.core.call_stack.clear()),
        RandUniform => lib.bind(op, "RandUniform", |ctx, inst| {
            let u = ctx.agent.rng.uniform();
            ctx.set_reg(inst.args[0], u);
        }),
        RandBernoulli => lib.bind(op, "RandBernoulli", |ctx, inst| {
            let p = isa::bernoulli_probability(ctx.reg(inst.args[1]));
            let hit = ctx.agent.rng.uniform() < p;
            ctx.set_reg(inst.args[0], isa::bool_value(hit));
        }),
        SetRegulator => lib.bind(op, "SetRegulator", |ctx, inst| {
            if let Some(m) = ctx.regulator_target(inst.tag) {
                let v = ctx.reg(inst.args[0]);
                ctx.agent.selector.set_regulator(m, v);
            }
        }),
        AdjustRegulator => lib.bind(op, "AdjustRegulator", |ctx, inst| {
            if let Some(m) = ctx.regulator_target(inst.tag) {
                let v = ctx.reg(inst.args[0]);
                ctx.agent.selector.adjust_regulator(m, v);
            }
        }),
        SenseRegulator => lib.bind(op, "SenseRegulator", |ctx, inst| {
            if let Some(m) = ctx.regulator_target(inst.tag) {
                let v = ctx.agent.selector.regulation().get(m);
                ctx.set_reg(inst.args[0], v);
            }
        }),
        ClearRegulator => lib.bind(op, "ClearRegulator", |ctx, inst| {
            if let Some(m) = ctx.regulator_target(inst.tag) {
                ctx.agent.selector.clear_regulator(m);
            }
        }),
        Response(_) => unreachable!("responses are bound separately"),
    }
}

fn open_block(ctx: &mut FlexContext<'_>, inst: &FlexInstruction, kind: BlockKind) {
    let program = ctx.program;
    let frame = ctx.frame();
    let opener = frame.ip - 1;
    if frame.regs[inst.args[0]] != 0.0 {
        frame.blocks.push(Block { kind, opener });
        return;
    }
    // skip to just past the matching CloseBlock
    let mut depth = 0usize;
    let mut pos = frame.ip;
    while pos < frame.end {
        match program.instructions[pos].op {
            Opcode::JumpIfNotZero | Opcode::JumpIfZero => depth += 1,
            Opcode::LocalAnchor if depth == 0 => {
                pos += 1;
                break;
            }
            Opcode::LocalAnchor => depth -= 1,
            _ => {}
        }
        pos += 1;
    }
    frame.ip = pos.min(frame.end);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BlockKind {
    If,
    While,
}

#[derive(Clone, Copy, Debug)]
struct Block {
    kind: BlockKind,
    opener: usize,
}

#[derive(Clone, Debug)]
struct Frame {
    ip: usize,
    end: usize,
    regs: Vec<f64>,
    blocks: Vec<Block>,
}

#[derive(Clone, Debug)]
pub struct FlexCore {
    id: u32,
    call_stack: Vec<Frame>,
}

/// One instruction in the flex representation: a handler id plus a
/// variable-length argument list.
#[derive(Clone, Debug)]
pub struct FlexInstruction {
    pub handler: usize,
    pub op: Opcode,
    pub args: Vec<usize>,
    pub tag: Tag,
}

#[derive(Clone, Debug)]
pub struct FlexProgram {
    library: Arc<InstructionLibrary>,
    instructions: Vec<FlexInstruction>,
    modules: Vec<Module>,
    module_tags: Vec<Tag>,
    registers: usize,
}

impl FlexProgram {
    pub fn compile(
        program: &Program,
        library: Arc<InstructionLibrary>,
        registers: usize,
    ) -> Result<Self> {
        if registers == 0 {
            return Err(Error::Config("register file must not be empty".into()));
        }
        let mut instructions = Vec::with_capacity(program.len());
        for (i, inst) in program.instructions().iter().enumerate() {
            program.check_operands(i, registers)?;
            let handler = library
                .lookup(inst.op)
                .ok_or_else(|| Error::UnknownOpcode(inst.op.name()))?;
            instructions.push(FlexInstruction {
                handler,
                op: inst.op,
                args: inst.args.iter().map(|&a| usize::from(a)).collect(),
                tag: inst.tag,
            });
        }
        Ok(FlexProgram {
            library,
            instructions,
            modules: program.modules().to_vec(),
            module_tags: program.module_tags(),
            registers,
        })
    }

    pub fn modules(&self) -> &[Module] {
        &self.modules
    }

    pub fn registers(&self) -> usize {
        self.registers
    }
}

#[derive(Clone, Debug)]
pub struct FlexCpu {
    program: Arc<FlexProgram>,
    cores: Vec<FlexCore>,
    max_cores: usize,
    agent: AgentState,
}

impl FlexCpu {
    pub fn new(program: &Program, config: &CpuConfig, seed: u64) -> Result<Self> {
        let compiled = FlexProgram::compile(program, InstructionLibrary::shared(), config.registers)?;
        Ok(Self::with_program(Arc::new(compiled), config, seed))
    }

    pub fn with_program(program: Arc<FlexProgram>, config: &CpuConfig, seed: u64) -> Self {
        FlexCpu {
            agent: AgentState::new(program.module_tags.clone(), config.min_raw, seed),
            cores: Vec::new(),
            max_cores: config.max_cores,
            program,
        }
    }

    /// Depth of the call stack of the `i`-th active core.
    pub fn call_depth(&self, i: usize) -> Option<usize> {
        self.cores.get(i).map(|c| c.call_stack.len())
    }

    /// Number of open blocks in the top frame of the `i`-th active core.
    pub fn open_blocks(&self, i: usize) -> Option<usize> {
        self.cores
            .get(i)
            .and_then(|c| c.call_stack.last())
            .map(|f| f.blocks.len())
    }
}

/// Handles a frame whose instruction pointer reached its end: loops back to
/// the innermost open `While`, otherwise returns from the frame.
fn unwind_frame_end(core: &mut FlexCore) {
    while let Some(frame) = core.call_stack.last_mut() {
        if frame.ip < frame.end {
            return;
        }
        while let Some(block) = frame.blocks.pop() {
            if block.kind == BlockKind::While {
                frame.ip = block.opener;
                return;
            }
        }
        core.call_stack.pop();
    }
}

impl VirtualCpu for FlexCpu {
    fn launch(&mut self, signal: Tag) -> bool {
        if self.cores.len() >= self.max_cores {
            return false;
        }
        let Some(m) = self.agent.selector.select(signal) else {
            return false;
        };
        let module = self.program.modules[m];
        let id = self.agent.next_core_id();
        self.cores.push(FlexCore {
            id,
            call_stack: vec![Frame {
                ip: module.start,
                end: module.end,
                regs: vec![0.0; self.program.registers],
                blocks: Vec::new(),
            }],
        });
        true
    }

    fn step_observed<O: Observer>(&mut self, cycles: u64, observer: &mut O) {
        let program = &*self.program;
        for done in 0..cycles {
            if self.cores.is_empty() {
                self.agent.cycle += cycles - done;
                return;
            }
            for core in self.cores.iter_mut() {
                unwind_frame_end(core);
                let Some(frame) = core.call_stack.last_mut() else {
                    continue;
                };
                let inst = &program.instructions[frame.ip];
                frame.ip += 1;
                let handler = &program.library.handlers[inst.handler].1;
                let mut ctx = FlexContext {
                    core: &mut *core,
                    agent: &mut self.agent,
                    program,
                };
                handler(&mut ctx, inst);
                let regs = core
                    .call_stack
                    .last()
                    .map_or(&[][..], |f| f.regs.as_slice());
                observer.on_execute(self.agent.cycle, core.id, inst.op, regs);
                unwind_frame_end(core);
            }
            self.cores.retain(|c| !c.call_stack.is_empty());
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
        self.cores
            .get(i)
            .and_then(|c| c.call_stack.last())
            .map(|f| f.regs.as_slice())
    }

    fn agent(&self) -> &AgentState {
        &self.agent
    }

    fn agent_mut(&mut self) -> &mut AgentState {
        &mut self.agent
    }
}
