use std::io;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed tag {0:?}: expected 16 lowercase hex digits")]
pub struct ParseTagError(pub String);

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown opcode {0:?}")]
    UnknownOpcode(String),
    #[error("unknown instruction set {0:?}")]
    UnknownInstructionSet(String),
    #[error("instruction set {0:?} is empty")]
    EmptyInstructionSet(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("genome line {line}: opcode {opcode} is not in instruction set {set:?}")]
    OpcodeNotInSet {
        line: usize,
        opcode: String,
        set: String,
    },
    #[error("instruction {index}: operand {operand} is out of range for {registers} registers")]
    OperandOutOfRange {
        index: usize,
        operand: usize,
        registers: usize,
    },
    #[error("instruction {index}: opcode {opcode} behaves differently across backends")]
    BackendDivergent { index: usize, opcode: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("replay failed: {0}")]
    Replay(String),
    #[error(transparent)]
    Tag(#[from] ParseTagError),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit status for this error: 1 for configuration problems,
    /// 2 for everything that fails at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownInstructionSet(_)
            | Error::EmptyInstructionSet(_)
            | Error::Config(_)
            | Error::InvalidInput(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
