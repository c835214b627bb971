use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::instruction::{Codelet, Instruction, Opcode};

/// Parameters of the random codelet source.
#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub seed: u64,
    pub min_len: usize,
    pub max_len: usize,
    pub min_arity: usize,
    pub max_arity: usize,
    /// Relative opcode frequencies; opcodes absent from the list never appear.
    pub opcode_weights: Vec<(Opcode, u32)>,
    /// Largest element index a generated `LOAD` may use.
    pub max_index: u8,
    /// `PUSH` immediates are drawn from `-imm_range..=imm_range`.
    pub imm_range: i32,
}

impl Default for GenParams {
    fn default() -> Self {
        use Opcode::*;
        GenParams {
            seed: 0,
            min_len: 4,
            max_len: 10,
            min_arity: 1,
            max_arity: 2,
            opcode_weights: vec![
                (Push, 8),
                (Load, 14),
                (Len, 2),
                (Dup, 3),
                (Swap, 2),
                (Pop, 1),
                (Add, 3),
                (Sub, 4),
                (Mul, 1),
                (Div, 1),
                (Neg, 1),
                (Cmp, 6),
                (Jlt, 4),
                (Jge, 4),
                (Jmp, 1),
                (Emit, 8),
                (Match, 8),
                (Fail, 3),
            ],
            max_index: 7,
            imm_range: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("length bounds {0}..={1} are empty or zero")]
    BadLength(usize, usize),
    #[error("arity bounds {0}..={1} are empty or zero")]
    BadArity(usize, usize),
    #[error("opcode weights are empty or all zero")]
    NoOpcodes,
}

impl GenParams {
    pub fn check(&self) -> Result<(), GenError> {
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(GenError::BadLength(self.min_len, self.max_len));
        }
        if self.min_arity == 0 || self.min_arity > self.max_arity || self.max_arity > 256 {
            return Err(GenError::BadArity(self.min_arity, self.max_arity));
        }
        if self.opcode_weights.iter().all(|&(_, w)| w == 0) {
            return Err(GenError::NoOpcodes);
        }
        Ok(())
    }
}

/// A seeded stream of random codelets.
#[derive(Debug, Clone)]
pub struct CodeletGenerator {
    params: GenParams,
    ops: WeightedIndex<u32>,
    rng: ChaCha8Rng,
}

impl CodeletGenerator {
    pub fn new(params: GenParams) -> Result<Self, GenError> {
        params.check()?;
        let ops = WeightedIndex::new(params.opcode_weights.iter().map(|&(_, w)| w))
            .map_err(|_| GenError::NoOpcodes)?;
        let rng = ChaCha8Rng::seed_from_u64(params.seed);
        Ok(CodeletGenerator { params, ops, rng })
    }

    pub fn next_codelet(&mut self) -> Codelet {
        let p = &self.params;
        let len = self.rng.gen_range(p.min_len..=p.max_len);
        let arity = self.rng.gen_range(p.min_arity..=p.max_arity);
        let mut code = Vec::with_capacity(len);
        for pc in 0..len {
            let op = p.opcode_weights[self.ops.sample(&mut self.rng)].0;
            // Jumps always land inside 0..=len.
            let mut offset = || {
                let target = self.rng.gen_range(0..=len) as i64;
                (target - pc as i64 - 1) as i16
            };
            let ins = match op {
                Opcode::Push => Instruction::Push(self.rng.gen_range(-p.imm_range..=p.imm_range)),
                Opcode::Load => Instruction::Load {
                    input: self.rng.gen_range(0..arity) as u8,
                    index: self.rng.gen_range(0..=p.max_index),
                },
                Opcode::Len => Instruction::Len(self.rng.gen_range(0..arity) as u8),
                Opcode::Jlt => Instruction::Jlt(offset()),
                Opcode::Jge => Instruction::Jge(offset()),
                Opcode::Jmp => Instruction::Jmp(offset()),
                Opcode::Dup => Instruction::Dup,
                Opcode::Swap => Instruction::Swap,
                Opcode::Pop => Instruction::Pop,
                Opcode::Add => Instruction::Add,
                Opcode::Sub => Instruction::Sub,
                Opcode::Mul => Instruction::Mul,
                Opcode::Div => Instruction::Div,
                Opcode::Neg => Instruction::Neg,
                Opcode::Cmp => Instruction::Cmp,
                Opcode::Emit => Instruction::Emit,
                Opcode::Match => Instruction::Match,
                Opcode::Fail => Instruction::Fail,
            };
            code.push(ins);
        }
        Codelet::new(code, arity)
    }
}

/// One codelet drawn from a generator seeded with `params.seed`.
///
/// Panics on invalid parameters; use [`CodeletGenerator::new`] to handle them.
pub fn generate_random(params: &GenParams) -> Codelet {
    CodeletGenerator::new(params.clone())
        .expect("invalid generation parameters")
        .next_codelet()
}
