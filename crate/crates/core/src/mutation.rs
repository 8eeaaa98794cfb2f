//! Mutation operators over linear programs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isa::{InstructionSetSpec, Opcode};
use crate::program::{random_program, Instruction, Program, NUM_REGISTERS};
use crate::rng::{bernoulli_sites, Rng};
use crate::tag::{Tag, TAG_WIDTH};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutationConfig {
    /// Probability of flipping each tag bit.
    pub tag_bit_flip_rate: f64,
    /// Per-instruction probability of resampling the opcode.
    pub opcode_sub_rate: f64,
    /// Per-instruction probability of resampling one operand.
    pub operand_sub_rate: f64,
    /// Per-site probability of inserting a random instruction.
    pub insertion_rate: f64,
    /// Per-instruction probability of deletion.
    pub deletion_rate: f64,
    pub max_length: usize,
}

impl Default for MutationConfig {
    fn default() -> Self {
        MutationConfig {
            tag_bit_flip_rate: 0.002,
            opcode_sub_rate: 0.005,
            operand_sub_rate: 0.005,
            insertion_rate: 0.005,
            deletion_rate: 0.005,
            max_length: 256,
        }
    }
}

impl MutationConfig {
    /// Every rate zero: mutation is the identity.
    pub fn none() -> Self {
        MutationConfig {
            tag_bit_flip_rate: 0.0,
            opcode_sub_rate: 0.0,
            operand_sub_rate: 0.0,
            insertion_rate: 0.0,
            deletion_rate: 0.0,
            max_length: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("tag_bit_flip_rate", self.tag_bit_flip_rate),
            ("opcode_sub_rate", self.opcode_sub_rate),
            ("operand_sub_rate", self.operand_sub_rate),
            ("insertion_rate", self.insertion_rate),
            ("deletion_rate", self.deletion_rate),
        ];
        for (name, rate) in rates {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("mutation.{name} = {rate} is outside [0, 1]")));
            }
        }
        if self.max_length == 0 {
            return Err(Error::Config("mutation.max_length must be at least 1".into()));
        }
        Ok(())
    }
}

/// Returns a mutated copy of `program`.
///
/// Applied in order: tag bit flips, opcode substitutions, operand
/// substitutions, insertions, deletions. The result holds between 1 and
/// `cfg.max_length` instructions.
pub fn mutate(
    program: &Program,
    cfg: &MutationConfig,
    set: &InstructionSetSpec,
    rng: &mut Rng,
) -> Program {
    let mut insts: Vec<Instruction> = program.instructions().to_vec();
    let n = insts.len();

    let bits = n * TAG_WIDTH as usize;
    for site in bernoulli_sites(rng, bits, cfg.tag_bit_flip_rate) {
        let inst = &mut insts[site / TAG_WIDTH as usize];
        inst.tag = inst.tag.flip_bit((site % TAG_WIDTH as usize) as u32);
    }

    if !set.is_empty() {
        for site in bernoulli_sites(rng, n, cfg.opcode_sub_rate) {
            insts[site].op = set.opcodes()[rng.below_usize(set.len())];
        }
    }

    for site in bernoulli_sites(rng, n, cfg.operand_sub_rate) {
        let slot = rng.below_usize(3);
        insts[site].args[slot] = rng.below_usize(NUM_REGISTERS) as u8;
    }

    if !set.is_empty() && cfg.insertion_rate > 0.0 {
        let sites = bernoulli_sites(rng, n + 1, cfg.insertion_rate);
        if !sites.is_empty() {
            let mut out = Vec::with_capacity(n + sites.len());
            let mut pending = sites.into_iter().peekable();
            for i in 0..=n {
                while pending.next_if_eq(&i).is_some() {
                    out.push(Instruction::random(set, rng));
                }
                if i < n {
                    out.push(insts[i]);
                }
            }
            insts = out;
        }
    }

    if cfg.deletion_rate > 0.0 {
        let doomed = bernoulli_sites(rng, insts.len(), cfg.deletion_rate);
        if !doomed.is_empty() {
            let mut doomed = doomed.into_iter().peekable();
            let mut kept = Vec::with_capacity(insts.len());
            for (i, inst) in insts.iter().enumerate() {
                if doomed.next_if_eq(&i).is_none() {
                    kept.push(*inst);
                }
            }
            if kept.is_empty() {
                // keep the last instruction so the program stays nonempty
                kept.push(*insts.last().unwrap());
            }
            insts = kept;
        }
    }

    insts.truncate(cfg.max_length.max(1));
    if insts.is_empty() && !set.is_empty() {
        insts.push(Instruction::random(set, rng));
    }
    Program::new(insts)
}

/// Random program of `length` instructions with `anchors` `GlobalAnchor`s
/// carrying random tags, evenly spaced starting at index 0.
pub fn random_ancestor(
    set: &InstructionSetSpec,
    length: usize,
    anchors: usize,
    rng: &mut Rng,
) -> Result<Program> {
    let mut insts = random_program(set, length, rng)?.into_instructions();
    if anchors > 0 && length > 0 {
        let spacing = (length / anchors).max(1);
        for k in 0..anchors.min(length) {
            insts[k * spacing] = Instruction::tagged(Opcode::GlobalAnchor, Tag::random(rng));
        }
    }
    Ok(Program::new(insts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::rng::Rng;

    fn sample(seed: u64) -> Program {
        random_program(&InstructionSetSpec::complete(), 100, &mut Rng::new(seed)).unwrap()
    }

    #[test]
    fn zero_rates_are_identity() {
        let p = sample(1);
        let q = mutate(&p, &MutationConfig::none(), &InstructionSetSpec::complete(), &mut Rng::new(2));
        assert_eq!(p, q);
    }

    #[test]
    fn full_flip_rate_complements_every_tag() {
        let p = sample(3);
        let cfg = MutationConfig {
            tag_bit_flip_rate: 1.0,
            ..MutationConfig::none()
        };
        let q = mutate(&p, &cfg, &InstructionSetSpec::complete(), &mut Rng::new(4));
        for (a, b) in p.instructions().iter().zip(q.instructions()) {
            assert_eq!(b.tag, a.tag.complement());
            assert_eq!((a.op, a.args), (b.op, b.args));
        }
    }

    #[test]
    fn flipped_bit_count_is_binomial() {
        let cfg = MutationConfig {
            tag_bit_flip_rate: 0.01,
            ..MutationConfig::none()
        };
        let set = InstructionSetSpec::complete();
        let (n, p): (f64, f64) = (6400.0, 0.01);
        let mut rng = Rng::new(5);
        let mut total = 0u64;
        for trial in 0..100 {
            let prog = sample(100 + trial);
            let out = mutate(&prog, &cfg, &set, &mut rng);
            total += prog
                .instructions()
                .iter()
                .zip(out.instructions())
                .map(|(a, b)| u64::from(a.tag.hamming_distance(b.tag)))
                .sum::<u64>();
        }
        // 100 trials of Binomial(6400, 0.01)
        let mean = 100.0 * n * p;
        let sd = (100.0 * n * p * (1.0 - p)).sqrt();
        assert!((total as f64 - mean).abs() < 4.0 * sd, "{total} vs {mean}");
    }

    #[test]
    fn deleting_everything_keeps_one_instruction() {
        let cfg = MutationConfig {
            deletion_rate: 1.0,
            ..MutationConfig::none()
        };
        let q = mutate(&sample(6), &cfg, &InstructionSetSpec::complete(), &mut Rng::new(1));
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn insertion_respects_max_length() {
        let cfg = MutationConfig {
            insertion_rate: 1.0,
            max_length: 150,
            ..MutationConfig::none()
        };
        let q = mutate(&sample(7), &cfg, &InstructionSetSpec::complete(), &mut Rng::new(1));
        assert_eq!(q.len(), 150);
    }

    #[test]
    fn input_is_not_modified() {
        let p = sample(8);
        let copy = p.clone();
        let _ = mutate(&p, &MutationConfig::default(), &InstructionSetSpec::complete(), &mut Rng::new(3));
        assert_eq!(p, copy);
    }

    #[test]
    fn ancestor_has_requested_modules() {
        let set = InstructionSetSpec::changing_environment(4);
        let p = random_ancestor(&set, 100, 4, &mut Rng::new(1)).unwrap();
        let anchors = p.instructions().iter().filter(|i| i.op == Opcode::GlobalAnchor).count();
        assert!(anchors >= 4);
        assert_eq!(p.modules()[0].start, 0);
    }

    #[test]
    fn rates_are_validated() {
        assert!(MutationConfig::default().validate().is_ok());
        let bad = MutationConfig {
            deletion_rate: 1.5,
            ..MutationConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = MutationConfig {
            max_length: 0,
            ..MutationConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn output_is_valid_and_bounded(
            seed: u64,
            len in 1usize..300,
            rates in proptest::array::uniform5(0.0f64..=1.0),
            max_length in 1usize..300,
        ) {
            let set = InstructionSetSpec::changing_environment(4);
            let p = random_program(&set, len, &mut Rng::new(seed)).unwrap();
            let cfg = MutationConfig {
                tag_bit_flip_rate: rates[0],
                opcode_sub_rate: rates[1],
                operand_sub_rate: rates[2],
                insertion_rate: rates[3],
                deletion_rate: rates[4],
                max_length,
            };
            let a = mutate(&p, &cfg, &set, &mut Rng::new(seed ^ 1));
            let b = mutate(&p, &cfg, &set, &mut Rng::new(seed ^ 1));
            prop_assert_eq!(&a, &b);
            prop_assert!(!a.is_empty() && a.len() <= max_length);
            prop_assert!(a.validate(&set, NUM_REGISTERS).is_ok());
        }
    }
}
