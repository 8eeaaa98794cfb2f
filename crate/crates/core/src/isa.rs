//! Opcodes, their value-level semantics, and the named instruction sets.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Largest number of distinct response opcodes (`Response_0` .. `Response_15`).
pub const MAX_RESPONSES: u8 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Opcode {
    Nop,
    GlobalAnchor,
    LocalAnchor,
    JumpIfNotZero,
    JumpIfZero,
    Terminate,
    Add,
    Subtract,
    Multiply,
    Divide,
    And,
    Or,
    Not,
    Xor,
    ShiftLeft,
    ShiftRight,
    Equal,
    NotEqual,
    LessThan,
    GreaterThan,
    RandUniform,
    RandBernoulli,
    SetRegulator,
    AdjustRegulator,
    SenseRegulator,
    ClearRegulator,
    /// Records response `k` in the agent's response buffer.
    Response(u8),
}

/// Every opcode that is not a response, in canonical order.
pub const BASE_OPCODES: [Opcode; 26] = [
    Opcode::Nop,
    Opcode::GlobalAnchor,
    Opcode::LocalAnchor,
    Opcode::JumpIfNotZero,
    Opcode::JumpIfZero,
    Opcode::Terminate,
    Opcode::Add,
    Opcode::Subtract,
    Opcode::Multiply,
    Opcode::Divide,
    Opcode::And,
    Opcode::Or,
    Opcode::Not,
    Opcode::Xor,
    Opcode::ShiftLeft,
    Opcode::ShiftRight,
    Opcode::Equal,
    Opcode::NotEqual,
    Opcode::LessThan,
    Opcode::GreaterThan,
    Opcode::RandUniform,
    Opcode::RandBernoulli,
    Opcode::SetRegulator,
    Opcode::AdjustRegulator,
    Opcode::SenseRegulator,
    Opcode::ClearRegulator,
];

/// Size of a dense opcode index space covering every opcode.
pub const OPCODE_COUNT: usize = BASE_OPCODES.len() + MAX_RESPONSES as usize;

impl Opcode {
    /// Dense index in `0..OPCODE_COUNT`.
    pub fn index(self) -> usize {
        match self {
            Opcode::Response(k) => BASE_OPCODES.len() + k as usize,
            op => BASE_OPCODES.iter().position(|&b| b == op).unwrap(),
        }
    }

    pub fn from_index(i: usize) -> Option<Opcode> {
        if i < BASE_OPCODES.len() {
            Some(BASE_OPCODES[i])
        } else if i < OPCODE_COUNT {
            Some(Opcode::Response((i - BASE_OPCODES.len()) as u8))
        } else {
            None
        }
    }

    pub fn name(self) -> String {
        match self {
            Opcode::Response(k) => format!("Response_{k}"),
            op => format!("{op:?}"),
        }
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(
            self,
            Opcode::Add | Opcode::Subtract | Opcode::Multiply | Opcode::Divide
        )
    }

    pub fn is_bitwise(self) -> bool {
        matches!(
            self,
            Opcode::And
                | Opcode::Or
                | Opcode::Not
                | Opcode::Xor
                | Opcode::ShiftLeft
                | Opcode::ShiftRight
        )
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            Opcode::Equal | Opcode::NotEqual | Opcode::LessThan | Opcode::GreaterThan
        )
    }

    pub fn is_rng(self) -> bool {
        matches!(self, Opcode::RandUniform | Opcode::RandBernoulli)
    }

    pub fn is_regulation(self) -> bool {
        matches!(
            self,
            Opcode::SetRegulator
                | Opcode::AdjustRegulator
                | Opcode::SenseRegulator
                | Opcode::ClearRegulator
        )
    }

    pub fn writes_regulator(self) -> bool {
        self.is_regulation() && self != Opcode::SenseRegulator
    }

    /// Opcodes whose meaning differs between the lite (jump-based) and the
    /// flex (block-based) backends.
    pub fn is_control_flow(self) -> bool {
        matches!(
            self,
            Opcode::JumpIfNotZero | Opcode::JumpIfZero | Opcode::LocalAnchor | Opcode::Terminate
        )
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Opcode::Response(k) => write!(f, "Response_{k}"),
            op => write!(f, "{op:?}"),
        }
    }
}

impl FromStr for Opcode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(k) = s.strip_prefix("Response_") {
            // the canonical spelling has no leading zeros
            return match k.parse::<u8>() {
                Ok(n) if n < MAX_RESPONSES && n.to_string() == k => Ok(Opcode::Response(n)),
                _ => Err(Error::UnknownOpcode(s.to_string())),
            };
        }
        BASE_OPCODES
            .iter()
            .copied()
            .find(|op| format!("{op:?}") == s)
            .ok_or_else(|| Error::UnknownOpcode(s.to_string()))
    }
}

// Value-level semantics shared by both backends.

#[inline]
pub fn to_int(x: f64) -> i64 {
    if x.is_finite() {
        x as i64
    } else {
        0
    }
}

#[inline]
pub fn divide(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

#[inline]
pub fn bool_value(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub fn shift_left(a: f64, b: f64) -> f64 {
    to_int(a).wrapping_shl(to_int(b).rem_euclid(64) as u32) as f64
}

#[inline]
pub fn shift_right(a: f64, b: f64) -> f64 {
    to_int(a).wrapping_shr(to_int(b).rem_euclid(64) as u32) as f64
}

/// Probability argument of `RandBernoulli`; NaN reads as zero.
#[inline]
pub fn bernoulli_probability(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// Named, frozen collection of opcodes used to generate and validate
/// programs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstructionSetSpec {
    name: String,
    opcodes: Vec<Opcode>,
}

const ARITHMETIC: [Opcode; 4] = [
    Opcode::Add,
    Opcode::Subtract,
    Opcode::Multiply,
    Opcode::Divide,
];

impl InstructionSetSpec {
    pub fn new(name: impl Into<String>, opcodes: Vec<Opcode>) -> Self {
        InstructionSetSpec {
            name: name.into(),
            opcodes,
        }
    }

    pub fn nop() -> Self {
        Self::new("nop", vec![Opcode::Nop])
    }

    pub fn arithmetic() -> Self {
        Self::new("arithmetic", ARITHMETIC.to_vec())
    }

    pub fn complete() -> Self {
        let mut ops = ARITHMETIC.to_vec();
        ops.extend(BASE_OPCODES.iter().copied().filter(|op| !op.is_arithmetic()));
        Self::new("complete", ops)
    }

    pub fn sans_regulation() -> Self {
        let ops = Self::complete()
            .opcodes
            .into_iter()
            .filter(|op| !op.is_regulation())
            .collect();
        Self::new("sans_regulation", ops)
    }

    /// Opcodes with identical semantics in both backends: nop, arithmetic,
    /// comparison and bitwise.
    pub fn equivalence() -> Self {
        let ops = BASE_OPCODES
            .iter()
            .copied()
            .filter(|op| {
                *op == Opcode::Nop || op.is_arithmetic() || op.is_comparison() || op.is_bitwise()
            })
            .collect();
        Self::new("equivalence", ops)
    }

    /// `complete` plus `Response_0 .. Response_{k-1}`.
    pub fn changing_environment(k: u8) -> Self {
        let mut ops = Self::complete().opcodes;
        ops.extend((0..k).map(Opcode::Response));
        Self::new(format!("changing_env_{k}"), ops)
    }

    /// `complete` without RNG opcodes, plus four responses. With
    /// `regulation == false` the regulation opcodes are removed as well.
    pub fn contextual_signal(regulation: bool) -> Self {
        let ops = Self::complete()
            .opcodes
            .into_iter()
            .filter(|op| !op.is_rng() && (regulation || !op.is_regulation()))
            .chain((0..4).map(Opcode::Response))
            .collect();
        let name = if regulation {
            "contextual_signal"
        } else {
            "contextual_signal_sans_regulation"
        };
        Self::new(name, ops)
    }

    /// Looks up a set by the name used in genome headers and on the
    /// command line.
    pub fn by_name(name: &str) -> Result<Self, Error> {
        let set = match name {
            "nop" => Self::nop(),
            "arithmetic" => Self::arithmetic(),
            "complete" => Self::complete(),
            "sans_regulation" => Self::sans_regulation(),
            "equivalence" => Self::equivalence(),
            "contextual_signal" => Self::contextual_signal(true),
            "contextual_signal_sans_regulation" => Self::contextual_signal(false),
            other => match other.strip_prefix("changing_env_").map(str::parse::<u8>) {
                Some(Ok(k)) if (1..=MAX_RESPONSES).contains(&k) => {
                    Self::changing_environment(k)
                }
                _ => return Err(Error::UnknownInstructionSet(name.to_string())),
            },
        };
        Ok(set)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn opcodes(&self) -> &[Opcode] {
        &self.opcodes
    }

    pub fn len(&self) -> usize {
        self.opcodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opcodes.is_empty()
    }

    pub fn contains(&self, op: Opcode) -> bool {
        self.opcodes.contains(&op)
    }
}
