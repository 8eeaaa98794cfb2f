//! Event-driven linear genetic programming.
//!
//! Programs are flat instruction sequences split into tagged modules; a
//! [`VirtualCpu`](cpu::VirtualCpu) launches modules in response to tagged
//! signals and runs them on concurrent cores. Two backends with the same
//! genome format are provided, see [`cpu`].

pub mod bench;
pub mod config;
pub mod cpu;
pub mod error;
pub mod evolution;
pub mod isa;
pub mod mutation;
pub mod problems;
pub mod program;
pub mod rng;
pub mod runner;
pub mod tag;

pub use cpu::{Backend, Cpu, CpuConfig, FlexCpu, LiteCpu, VirtualCpu};
pub use error::{Error, Result};
pub use isa::{InstructionSetSpec, Opcode};
pub use program::{Instruction, Program};
pub use rng::Rng;
pub use tag::Tag;
