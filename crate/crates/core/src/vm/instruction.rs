use std::fmt;

/// Operand-free tag of an instruction, used for weighting and mnemonics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Opcode {
    Push,
    Load,
    Len,
    Dup,
    Swap,
    Pop,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Cmp,
    Jlt,
    Jge,
    Jmp,
    Emit,
    Match,
    Fail,
}

impl Opcode {
    pub const ALL: [Opcode; 18] = [
        Opcode::Push,
        Opcode::Load,
        Opcode::Len,
        Opcode::Dup,
        Opcode::Swap,
        Opcode::Pop,
        Opcode::Add,
        Opcode::Sub,
        Opcode::Mul,
        Opcode::Div,
        Opcode::Neg,
        Opcode::Cmp,
        Opcode::Jlt,
        Opcode::Jge,
        Opcode::Jmp,
        Opcode::Emit,
        Opcode::Match,
        Opcode::Fail,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Push => "PUSH",
            Opcode::Load => "LOAD",
            Opcode::Len => "LEN",
            Opcode::Dup => "DUP",
            Opcode::Swap => "SWAP",
            Opcode::Pop => "POP",
            Opcode::Add => "ADD",
            Opcode::Sub => "SUB",
            Opcode::Mul => "MUL",
            Opcode::Div => "DIV",
            Opcode::Neg => "NEG",
            Opcode::Cmp => "CMP",
            Opcode::Jlt => "JLT",
            Opcode::Jge => "JGE",
            Opcode::Jmp => "JMP",
            Opcode::Emit => "EMIT",
            Opcode::Match => "MATCH",
            Opcode::Fail => "FAIL",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Opcode> {
        Opcode::ALL
            .iter()
            .copied()
            .find(|op| op.mnemonic().eq_ignore_ascii_case(s))
    }

    pub fn is_jump(self) -> bool {
        matches!(self, Opcode::Jlt | Opcode::Jge | Opcode::Jmp)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// One VM instruction.
///
/// Jump offsets are relative to the instruction that follows the jump, so
/// `Jmp(0)` is a no-op and `Jmp(-1)` loops on itself. A target equal to the
/// codelet length falls off the end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instruction {
    Push(i32),
    /// Push element `index` of input vector `input`.
    Load { input: u8, index: u8 },
    /// Push the length of input vector `input`.
    Len(u8),
    Dup,
    Swap,
    Pop,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    /// Pop `b`, pop `a`, push the sign of `a - b` (-1, 0 or 1).
    Cmp,
    /// Pop a value and jump if it is negative.
    Jlt(i16),
    /// Pop a value and jump if it is zero or positive.
    Jge(i16),
    Jmp(i16),
    /// Pop the top of the stack onto the output vector.
    Emit,
    Match,
    Fail,
}

impl Instruction {
    pub fn opcode(&self) -> Opcode {
        match self {
            Instruction::Push(_) => Opcode::Push,
            Instruction::Load { .. } => Opcode::Load,
            Instruction::Len(_) => Opcode::Len,
            Instruction::Dup => Opcode::Dup,
            Instruction::Swap => Opcode::Swap,
            Instruction::Pop => Opcode::Pop,
            Instruction::Add => Opcode::Add,
            Instruction::Sub => Opcode::Sub,
            Instruction::Mul => Opcode::Mul,
            Instruction::Div => Opcode::Div,
            Instruction::Neg => Opcode::Neg,
            Instruction::Cmp => Opcode::Cmp,
            Instruction::Jlt(_) => Opcode::Jlt,
            Instruction::Jge(_) => Opcode::Jge,
            Instruction::Jmp(_) => Opcode::Jmp,
            Instruction::Emit => Opcode::Emit,
            Instruction::Match => Opcode::Match,
            Instruction::Fail => Opcode::Fail,
        }
    }

    /// Relative offset of a jump instruction.
    pub fn jump_offset(&self) -> Option<i16> {
        match *self {
            Instruction::Jlt(o) | Instruction::Jge(o) | Instruction::Jmp(o) => Some(o),
            _ => None,
        }
    }

    /// Input vector index touched by `LOAD`/`LEN`.
    pub fn input_slot(&self) -> Option<u8> {
        match *self {
            Instruction::Load { input, .. } | Instruction::Len(input) => Some(input),
            _ => None,
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = self.opcode().mnemonic();
        match *self {
            Instruction::Push(v) => write!(f, "{op} {v}"),
            Instruction::Load { input, index } => write!(f, "{op} {input} {index}"),
            Instruction::Len(i) => write!(f, "{op} {i}"),
            Instruction::Jlt(o) | Instruction::Jge(o) | Instruction::Jmp(o) => write!(f, "{op} {o}"),
            _ => f.write_str(op),
        }
    }
}

/// A short program acting as a binary classifier over its inputs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Codelet {
    instructions: Vec<Instruction>,
    arity: usize,
}

impl Codelet {
    /// Panics if `arity` is zero.
    pub fn new(instructions: Vec<Instruction>, arity: usize) -> Self {
        assert!(arity >= 1, "codelet arity must be at least 1");
        Codelet {
            instructions,
            arity,
        }
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Absolute target of the jump at `pc`, if in `0..=len`.
    pub fn jump_target(&self, pc: usize) -> Option<usize> {
        let off = self.instructions.get(pc)?.jump_offset()?;
        let target = pc as i64 + 1 + off as i64;
        (0..=self.len() as i64)
            .contains(&target)
            .then_some(target as usize)
    }
}
