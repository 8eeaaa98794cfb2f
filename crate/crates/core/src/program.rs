//! Instructions, programs, module extraction and the text genome format.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::isa::{InstructionSetSpec, Opcode};
use crate::rng::Rng;
use crate::tag::Tag;

/// Size of the register file every genome is generated against.
pub const NUM_REGISTERS: usize = 8;

const GENOME_MAGIC: &str = "sgpvm-genome v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub op: Opcode,
    pub args: [u8; 3],
    pub tag: Tag,
}

impl Instruction {
    pub fn new(op: Opcode, args: [u8; 3], tag: Tag) -> Self {
        Instruction { op, args, tag }
    }

    /// Instruction with zero operands and the zero tag.
    pub fn op(op: Opcode) -> Self {
        Self::new(op, [0; 3], Tag::ZERO)
    }

    pub fn tagged(op: Opcode, tag: Tag) -> Self {
        Self::new(op, [0; 3], tag)
    }

    pub fn random(set: &InstructionSetSpec, rng: &mut Rng) -> Self {
        let op = set.opcodes()[rng.below_usize(set.len())];
        let mut args = [0u8; 3];
        for a in &mut args {
            *a = rng.below_usize(NUM_REGISTERS) as u8;
        }
        Instruction {
            op,
            args,
            tag: Tag::random(rng),
        }
    }
}

/// A contiguous span of the program triggered as one unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Module {
    pub start: usize,
    pub end: usize,
    pub tag: Tag,
}

/// Start index and tag of every module: one per `GlobalAnchor`, or a single
/// zero-tagged module at 0 when there are none.
pub fn extract_modules(instructions: &[Instruction]) -> Vec<(usize, Tag)> {
    let anchors: Vec<(usize, Tag)> = instructions
        .iter()
        .enumerate()
        .filter(|(_, inst)| inst.op == Opcode::GlobalAnchor)
        .map(|(i, inst)| (i, inst.tag))
        .collect();
    if anchors.is_empty() {
        vec![(0, Tag::ZERO)]
    } else {
        anchors
    }
}

/// Immutable instruction sequence with its derived module table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    instructions: Vec<Instruction>,
    modules: Vec<Module>,
}

impl Program {
    pub fn new(instructions: Vec<Instruction>) -> Self {
        let starts = extract_modules(&instructions);
        let modules = starts
            .iter()
            .enumerate()
            .map(|(i, &(start, tag))| Module {
                start,
                end: starts
                    .get(i + 1)
                    .map_or(instructions.len(), |&(next, _)| next),
                tag,
            })
            .collect();
        Program {
            instructions,
            modules,
        }
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn into_instructions(self) -> Vec<Instruction> {
        self.instructions
    }

    pub fn modules(&self) -> &[Module] {
        &self.modules
    }

    pub fn module_tags(&self) -> Vec<Tag> {
        self.modules.iter().map(|m| m.tag).collect()
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Checks every opcode belongs to `set` and every operand is below
    /// `registers`.
    pub fn validate(&self, set: &InstructionSetSpec, registers: usize) -> Result<()> {
        for (i, inst) in self.instructions.iter().enumerate() {
            if !set.contains(inst.op) {
                return Err(Error::OpcodeNotInSet {
                    line: i + 2,
                    opcode: inst.op.name(),
                    set: set.name().to_string(),
                });
            }
            self.check_operands(i, registers)?;
        }
        Ok(())
    }

    pub(crate) fn check_operands(&self, index: usize, registers: usize) -> Result<()> {
        let inst = &self.instructions[index];
        match inst.args.iter().find(|&&a| usize::from(a) >= registers) {
            Some(&a) => Err(Error::OperandOutOfRange {
                index,
                operand: a.into(),
                registers,
            }),
            None => Ok(()),
        }
    }

    /// Stable content digest, used by manifests to identify workloads.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(self.instructions.len() as u64);
        for inst in &self.instructions {
            feed(inst.op.index() as u64);
            feed(u64::from(u32::from_le_bytes([inst.args[0], inst.args[1], inst.args[2], 0])));
            feed(inst.tag.0);
        }
        h
    }
}

impl From<Vec<Instruction>> for Program {
    fn from(instructions: Vec<Instruction>) -> Self {
        Program::new(instructions)
    }
}

/// Draws `length` independent instructions from `set`.
///
/// Per instruction the draw order is: opcode, three operands, tag.
pub fn random_program(set: &InstructionSetSpec, length: usize, rng: &mut Rng) -> Result<Program> {
    if set.is_empty() && length > 0 {
        return Err(Error::EmptyInstructionSet(set.name().to_string()));
    }
    let instructions = (0..length).map(|_| Instruction::random(set, rng)).collect();
    Ok(Program::new(instructions))
}

/// A program together with the instruction set and register count it was
/// written against.
#[derive(Clone, Debug, PartialEq)]
pub struct Genome {
    pub set: InstructionSetSpec,
    pub registers: usize,
    pub program: Program,
}

pub fn serialize(program: &Program, set: &InstructionSetSpec) -> String {
    let mut out = String::with_capacity(48 * (program.len() + 1));
    let _ = writeln!(out, "{GENOME_MAGIC} set={} regs={NUM_REGISTERS}", set.name());
    for inst in program.instructions() {
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            inst.op, inst.args[0], inst.args[1], inst.args[2], inst.tag
        );
    }
    out
}

pub fn deserialize(text: &str) -> Result<Genome> {
    let mut lines = text.lines().enumerate();
    let (set, registers) = match lines.next() {
        Some((_, header)) => parse_header(header)?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing genome header".into(),
            })
        }
    };
    let mut instructions = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let inst = parse_instruction(line, lineno)?;
        if !set.contains(inst.op) {
            return Err(Error::OpcodeNotInSet {
                line: lineno,
                opcode: inst.op.name(),
                set: set.name().to_string(),
            });
        }
        if let Some(&a) = inst.args.iter().find(|&&a| usize::from(a) >= registers) {
            return Err(Error::Parse {
                line: lineno,
                message: format!("operand {a} out of range for {registers} registers"),
            });
        }
        instructions.push(inst);
    }
    Ok(Genome {
        set,
        registers,
        program: Program::new(instructions),
    })
}

fn parse_header(line: &str) -> Result<(InstructionSetSpec, usize)> {
    let err = |message: String| Error::Parse { line: 1, message };
    let rest = line
        .strip_prefix(GENOME_MAGIC)
        .ok_or_else(|| err(format!("expected header starting with {GENOME_MAGIC:?}")))?;
    let mut set = None;
    let mut regs = None;
    for field in rest.split_whitespace() {
        match field.split_once('=') {
            Some(("set", v)) => set = Some(v),
            Some(("regs", v)) => {
                regs = Some(
                    v.parse::<usize>()
                        .ok()
                        .filter(|&r| (1..=256).contains(&r))
                        .ok_or_else(|| err(format!("bad register count {v:?}")))?,
                )
            }
            _ => return Err(err(format!("unexpected header field {field:?}"))),
        }
    }
    let set = set.ok_or_else(|| err("header lacks set=".into()))?;
    let regs = regs.ok_or_else(|| err("header lacks regs=".into()))?;
    Ok((InstructionSetSpec::by_name(set)?, regs))
}

fn parse_instruction(line: &str, lineno: usize) -> Result<Instruction> {
    let err = |message: String| Error::Parse {
        line: lineno,
        message,
    };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(err(format!("expected 5 fields, found {}", fields.len())));
    }
    let op: Opcode = fields[0]
        .parse()
        .map_err(|_| err(format!("unknown opcode {:?}", fields[0])))?;
    let mut args = [0u8; 3];
    for (slot, field) in args.iter_mut().zip(&fields[1..4]) {
        *slot = field
            .parse()
            .map_err(|_| err(format!("bad operand {field:?}")))?;
    }
    let tag = fields[4].parse().map_err(|e| err(format!("{e}")))?;
    Ok(Instruction { op, args, tag })
}
