//! The Changing Environment and Contextual Signal problems.

use serde::{Deserialize, Serialize};

use crate::cpu::{Backend, CompiledProgram, CpuConfig, VirtualCpu};
use crate::error::{Error, Result};
use crate::isa::{InstructionSetSpec, Opcode};
use crate::program::{Instruction, Program};
use crate::rng::{derive_seed, Rng};
use crate::tag::Tag;

pub const DEFAULT_CYCLES_PER_SIGNAL: u64 = 128;

/// Signal tags are redrawn until every pair differs in at least this many
/// bits.
const MIN_SIGNAL_DISTANCE: u32 = 8;

fn distinct_tags(count: usize, rng: &mut Rng) -> Vec<Tag> {
    let mut tags: Vec<Tag> = Vec::with_capacity(count);
    while tags.len() < count {
        let t = Tag::random(rng);
        if tags.iter().all(|o| o.hamming_distance(t) >= MIN_SIGNAL_DISTANCE) {
            tags.push(t);
        }
    }
    tags
}

fn all_distinct(tags: &[Tag]) -> bool {
    tags.iter()
        .enumerate()
        .all(|(i, a)| tags[i + 1..].iter().all(|b| a != b))
}

/// Outcome of evaluating one program.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub fitness: f64,
    /// Pass/fail per test case (per signal, or per signal pair).
    pub cases: Vec<bool>,
}

impl Evaluation {
    fn from_cases(cases: Vec<bool>) -> Self {
        let fitness = cases.iter().filter(|&&c| c).count() as f64;
        Evaluation { fitness, cases }
    }

    pub fn passed(&self) -> usize {
        self.cases.iter().filter(|&&c| c).count()
    }

    pub fn is_perfect(&self) -> bool {
        self.cases.iter().all(|&c| c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangingEnvConfig {
    pub k: u8,
    pub signal_tags: Vec<Tag>,
    pub cycles_per_signal: u64,
}

impl ChangingEnvConfig {
    pub fn generate(k: u8, rng: &mut Rng) -> Result<Self> {
        if !matches!(k, 1..=16) {
            return Err(Error::Config(format!("K = {k} is outside 1..=16")));
        }
        Ok(ChangingEnvConfig {
            k,
            signal_tags: distinct_tags(k as usize, rng),
            cycles_per_signal: DEFAULT_CYCLES_PER_SIGNAL,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.k, 1..=16) || self.signal_tags.len() != self.k as usize {
            return Err(Error::Config(format!(
                "changing environment needs K in 1..=16 and K signal tags (K = {}, {} tags)",
                self.k,
                self.signal_tags.len()
            )));
        }
        if !all_distinct(&self.signal_tags) {
            return Err(Error::Config("signal tags must be pairwise distinct".into()));
        }
        Ok(())
    }

    pub fn instruction_set(&self) -> InstructionSetSpec {
        InstructionSetSpec::changing_environment(self.k)
    }

    /// Presents every signal once, in a seed-shuffled order, to a single
    /// fresh cpu. Signal `k` scores when the last response recorded during
    /// its window is `Response_k`.
    pub fn evaluate(&self, program: &CompiledProgram, seed: u64) -> Evaluation {
        let mut order: Vec<usize> = (0..self.k as usize).collect();
        Rng::new(derive_seed(seed, &[0])).shuffle(&mut order);
        let mut cpu = program.instantiate(&CpuConfig::default(), derive_seed(seed, &[1]));
        let mut cases = vec![false; self.k as usize];
        for k in order {
            cpu.reset_response();
            cpu.launch(self.signal_tags[k]);
            cpu.step(self.cycles_per_signal);
            cases[k] = cpu.response() == Some(k as u8);
        }
        Evaluation::from_cases(cases)
    }

    /// One module per signal, tagged with the signal, whose body is the
    /// matching response.
    pub fn perfect_solution(&self) -> Program {
        let mut insts = Vec::new();
        for (k, &tag) in self.signal_tags.iter().enumerate() {
            insts.push(Instruction::tagged(Opcode::GlobalAnchor, tag));
            insts.push(Instruction::op(Opcode::Response(k as u8)));
        }
        Program::new(insts)
    }
}

pub fn eval_changing_environment(
    program: &Program,
    cfg: &ChangingEnvConfig,
    seed: u64,
) -> Result<f64> {
    let compiled = CompiledProgram::compile(program, Backend::Lite, &CpuConfig::default())?;
    Ok(cfg.evaluate(&compiled, seed).fitness)
}

pub type ResponseTable = [[u8; 4]; 4];

/// `(i + j) mod 4`: every row and column holds all four responses.
pub fn default_response_table() -> ResponseTable {
    let mut t = [[0u8; 4]; 4];
    for (i, row) in t.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = ((i + j) % 4) as u8;
        }
    }
    t
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextualSignalConfig {
    pub first_signals: [Tag; 4],
    pub second_signals: [Tag; 4],
    pub response_table: ResponseTable,
    pub cycles_per_signal: u64,
    /// Whether regulation opcodes are part of the instruction set.
    pub regulation: bool,
}

impl ContextualSignalConfig {
    pub fn generate(rng: &mut Rng) -> Self {
        let tags = distinct_tags(8, rng);
        ContextualSignalConfig {
            first_signals: [tags[0], tags[1], tags[2], tags[3]],
            second_signals: [tags[4], tags[5], tags[6], tags[7]],
            response_table: default_response_table(),
            cycles_per_signal: DEFAULT_CYCLES_PER_SIGNAL,
            regulation: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all: Vec<Tag> = self
            .first_signals
            .iter()
            .chain(&self.second_signals)
            .copied()
            .collect();
        if !all_distinct(&all) {
            return Err(Error::Config("all eight contextual signal tags must be distinct".into()));
        }
        if self.response_table.iter().flatten().any(|&r| r >= 4) {
            return Err(Error::Config("response table entries must be in 0..4".into()));
        }
        Ok(())
    }

    pub fn instruction_set(&self) -> InstructionSetSpec {
        InstructionSetSpec::contextual_signal(self.regulation)
    }

    /// Runs the 16 ordered (first, second) signal pairs; case `4 * i + j`
    /// passes when the response recorded after the second signal equals
    /// `response_table[i][j]`.
    pub fn evaluate(&self, program: &CompiledProgram) -> Evaluation {
        let mut cases = Vec::with_capacity(16);
        for i in 0..4 {
            for j in 0..4 {
                let mut cpu = program.instantiate(&CpuConfig::default(), 0);
                cpu.launch(self.first_signals[i]);
                cpu.step(self.cycles_per_signal);
                cpu.kill_all_cores();
                cpu.reset_response();
                cpu.launch(self.second_signals[j]);
                cpu.step(self.cycles_per_signal);
                cases.push(cpu.response() == Some(self.response_table[i][j]));
            }
        }
        Evaluation::from_cases(cases)
    }

    /// A solution that remembers the first signal through regulation.
    ///
    /// For every cell `(i, j)` there is a response module whose tag is the
    /// second signal `j` with bit pattern `i` XORed into its two low bits.
    /// The module for first signal `i` sets `r0 = 1` and raises the
    /// regulators of the four modules carrying pattern `i` by one, so the
    /// following second signal selects the response module for `(i, j)`.
    pub fn regulation_solution(&self) -> Program {
        let cell_tag = |i: usize, j: usize| Tag(self.second_signals[j].0 ^ i as u64);
        let mut insts = Vec::new();
        for (i, &first) in self.first_signals.iter().enumerate() {
            insts.push(Instruction::tagged(Opcode::GlobalAnchor, first));
            insts.push(Instruction::new(Opcode::Equal, [7, 7, 0], Tag::ZERO));
            for j in 0..4 {
                insts.push(Instruction::new(
                    Opcode::AdjustRegulator,
                    [0, 0, 0],
                    cell_tag(i, j),
                ));
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                insts.push(Instruction::tagged(Opcode::GlobalAnchor, cell_tag(i, j)));
                insts.push(Instruction::op(Opcode::Response(self.response_table[i][j])));
            }
        }
        Program::new(insts)
    }

    /// A program that answers second signal `j` with `responses[j]` and
    /// keeps no memory of the first signal.
    pub fn first_signal_blind(&self, responses: [u8; 4]) -> Program {
        let mut insts = Vec::new();
        for (j, &tag) in self.second_signals.iter().enumerate() {
            insts.push(Instruction::tagged(Opcode::GlobalAnchor, tag));
            insts.push(Instruction::op(Opcode::Response(responses[j])));
        }
        Program::new(insts)
    }
}

pub fn eval_contextual_signal(program: &Program, cfg: &ContextualSignalConfig) -> Result<Vec<bool>> {
    let compiled = CompiledProgram::compile(program, Backend::Lite, &CpuConfig::default())?;
    Ok(cfg.evaluate(&compiled).cases)
}

/// A configured test problem.
#[derive(Clone, Debug, PartialEq)]
pub enum Problem {
    ChangingEnvironment(ChangingEnvConfig),
    ContextualSignal(ContextualSignalConfig),
}

impl Problem {
    pub fn instruction_set(&self) -> InstructionSetSpec {
        match self {
            Problem::ChangingEnvironment(c) => c.instruction_set(),
            Problem::ContextualSignal(c) => c.instruction_set(),
        }
    }

    pub fn case_count(&self) -> usize {
        match self {
            Problem::ChangingEnvironment(c) => c.k as usize,
            Problem::ContextualSignal(_) => 16,
        }
    }

    /// Module count of a freshly initialized ancestor.
    pub fn ancestor_modules(&self) -> usize {
        match self {
            Problem::ChangingEnvironment(c) => c.k as usize,
            Problem::ContextualSignal(_) => 8,
        }
    }

    pub fn signal_tags(&self) -> Vec<Tag> {
        match self {
            Problem::ChangingEnvironment(c) => c.signal_tags.clone(),
            Problem::ContextualSignal(c) => {
                c.first_signals.iter().chain(&c.second_signals).copied().collect()
            }
        }
    }

    pub fn evaluate(&self, program: &CompiledProgram, seed: u64) -> Evaluation {
        match self {
            Problem::ChangingEnvironment(c) => c.evaluate(program, seed),
            Problem::ContextualSignal(c) => c.evaluate(program),
        }
    }

    pub fn perfect_solution(&self) -> Program {
        match self {
            Problem::ChangingEnvironment(c) => c.perfect_solution(),
            Problem::ContextualSignal(c) => c.regulation_solution(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Problem::ChangingEnvironment(c) => c.validate(),
            Problem::ContextualSignal(c) => c.validate(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpu::Backend;

    fn compiled(p: &Program) -> CompiledProgram {
        CompiledProgram::compile(p, Backend::Lite, &CpuConfig::default()).unwrap()
    }

    #[test]
    fn perfect_changing_env_scores_k() {
        for k in [2u8, 4, 8, 16] {
            let cfg = ChangingEnvConfig::generate(k, &mut Rng::new(k.into())).unwrap();
            let p = cfg.perfect_solution();
            p.validate(&cfg.instruction_set(), 8).unwrap();
            assert_eq!(eval_changing_environment(&p, &cfg, 3).unwrap(), f64::from(k));
        }
    }

    #[test]
    fn empty_program_scores_zero() {
        let cfg = ChangingEnvConfig::generate(4, &mut Rng::new(1)).unwrap();
        assert_eq!(eval_changing_environment(&Program::new(vec![]), &cfg, 0).unwrap(), 0.0);
        let ctx = ContextualSignalConfig::generate(&mut Rng::new(1));
        assert!(eval_contextual_signal(&Program::new(vec![]), &ctx)
            .unwrap()
            .iter()
            .all(|&c| !c));
    }

    #[test]
    fn constant_response_scores_one() {
        let cfg = ChangingEnvConfig::generate(4, &mut Rng::new(2)).unwrap();
        let p = Program::new(vec![Instruction::op(Opcode::Response(0))]);
        for seed in 0..10 {
            assert_eq!(eval_changing_environment(&p, &cfg, seed).unwrap(), 1.0);
        }
    }

    #[test]
    fn perfect_solution_is_order_invariant() {
        let cfg = ChangingEnvConfig::generate(2, &mut Rng::new(9)).unwrap();
        let p = compiled(&cfg.perfect_solution());
        // enough seeds to cover both presentation orders many times
        for seed in 0..32 {
            assert!(cfg.evaluate(&p, seed).is_perfect());
        }
    }

    #[test]
    fn always_zero_passes_four_contextual_cases() {
        let cfg = ContextualSignalConfig::generate(&mut Rng::new(4));
        let p = Program::new(vec![Instruction::op(Opcode::Response(0))]);
        let cases = eval_contextual_signal(&p, &cfg).unwrap();
        let zero_cells = cfg
            .response_table
            .iter()
            .flatten()
            .zip(&cases)
            .filter(|(&r, &pass)| r == 0 && pass)
            .count();
        assert_eq!(cases.iter().filter(|&&c| c).count(), 4);
        assert_eq!(zero_cells, 4);
    }

    #[test]
    fn regulation_solution_passes_every_case() {
        for seed in 0..20 {
            let cfg = ContextualSignalConfig::generate(&mut Rng::new(seed));
            let p = cfg.regulation_solution();
            p.validate(&cfg.instruction_set(), 8).unwrap();
            for backend in Backend::ALL {
                let c = CompiledProgram::compile(&p, backend, &CpuConfig::default()).unwrap();
                assert!(cfg.evaluate(&c).is_perfect(), "seed {seed} {backend}");
            }
        }
    }

    #[test]
    fn regulation_solution_fails_without_regulation() {
        // remove the AdjustRegulator instructions: responses then depend on
        // the second signal only
        let cfg = ContextualSignalConfig::generate(&mut Rng::new(5));
        let stripped: Vec<Instruction> = cfg
            .regulation_solution()
            .instructions()
            .iter()
            .map(|i| {
                if i.op == Opcode::AdjustRegulator {
                    Instruction::op(Opcode::Nop)
                } else {
                    *i
                }
            })
            .collect();
        let e = cfg.evaluate(&compiled(&Program::new(stripped)));
        assert_eq!(e.passed(), 4);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ChangingEnvConfig::generate(2, &mut Rng::new(1)).unwrap();
        assert!(cfg.validate().is_ok());
        cfg.signal_tags[1] = cfg.signal_tags[0];
        assert!(cfg.validate().is_err());
        assert!(ChangingEnvConfig::generate(0, &mut Rng::new(1)).is_err());
        let mut ctx = ContextualSignalConfig::generate(&mut Rng::new(1));
        assert!(ctx.validate().is_ok());
        ctx.response_table[0][0] = 4;
        assert!(ctx.validate().is_err());
    }
}
