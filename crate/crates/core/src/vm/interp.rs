use super::instruction::{Codelet, Instruction};

/// Maximum operand stack depth; pushing past it is an out-of-scope write.
pub const MAX_STACK: usize = 64;
/// Maximum output vector length.
pub const MAX_OUTPUT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuntimeErrorKind {
    /// Read or write outside an input vector, the stack or the output.
    OutOfScope,
    DivisionByZero,
    StackUnderflow,
    /// `MATCH` reached with nothing emitted.
    EmptyMatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ExecOutcome {
    Match { output: Vec<i64>, steps: u32 },
    NoMatch { steps: u32 },
    RuntimeError { kind: RuntimeErrorKind, steps: u32 },
    BudgetExhausted { steps: u32 },
}

impl ExecOutcome {
    pub fn steps(&self) -> u32 {
        match *self {
            ExecOutcome::Match { steps, .. }
            | ExecOutcome::NoMatch { steps }
            | ExecOutcome::RuntimeError { steps, .. }
            | ExecOutcome::BudgetExhausted { steps } => steps,
        }
    }

    pub fn is_match(&self) -> bool {
        matches!(self, ExecOutcome::Match { .. })
    }

    pub fn output(&self) -> Option<&[i64]> {
        match self {
            ExecOutcome::Match { output, .. } => Some(output),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("codelet expects {expected} input vectors, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("step budget must be positive")]
    ZeroBudget,
}

/// Run `codelet` on `inputs` for at most `budget` steps.
///
/// One executed instruction is one step. The interpreter owns nothing but
/// its local stack and output, so concurrent calls are independent.
pub fn execute(codelet: &Codelet, inputs: &[Vec<i64>], budget: u32) -> Result<ExecOutcome, ExecError> {
    if inputs.len() != codelet.arity() {
        return Err(ExecError::ArityMismatch {
            expected: codelet.arity(),
            got: inputs.len(),
        });
    }
    if budget == 0 {
        return Err(ExecError::ZeroBudget);
    }

    let code = codelet.instructions();
    let mut stack: Vec<i64> = Vec::with_capacity(16);
    let mut output: Vec<i64> = Vec::new();
    let mut pc = 0usize;
    let mut steps = 0u32;

    macro_rules! fault {
        ($kind:expr) => {
            return Ok(ExecOutcome::RuntimeError { kind: $kind, steps })
        };
    }
    macro_rules! pop {
        () => {
            match stack.pop() {
                Some(v) => v,
                None => fault!(RuntimeErrorKind::StackUnderflow),
            }
        };
    }
    macro_rules! push {
        ($v:expr) => {{
            if stack.len() >= MAX_STACK {
                fault!(RuntimeErrorKind::OutOfScope);
            }
            stack.push($v);
        }};
    }

    while pc < code.len() {
        if steps >= budget {
            return Ok(ExecOutcome::BudgetExhausted { steps });
        }
        steps += 1;
        let mut next = pc + 1;
        match code[pc] {
            Instruction::Push(v) => push!(v as i64),
            Instruction::Load { input, index } => {
                let value = inputs
                    .get(input as usize)
                    .and_then(|vec| vec.get(index as usize))
                    .copied();
                match value {
                    Some(v) => push!(v),
                    None => fault!(RuntimeErrorKind::OutOfScope),
                }
            }
            Instruction::Len(input) => match inputs.get(input as usize) {
                Some(vec) => push!(vec.len() as i64),
                None => fault!(RuntimeErrorKind::OutOfScope),
            },
            Instruction::Dup => {
                let v = pop!();
                push!(v);
                push!(v);
            }
            Instruction::Swap => {
                let b = pop!();
                let a = pop!();
                push!(b);
                push!(a);
            }
            Instruction::Pop => {
                pop!();
            }
            Instruction::Add => {
                let b = pop!();
                let a = pop!();
                push!(a.wrapping_add(b));
            }
            Instruction::Sub => {
                let b = pop!();
                let a = pop!();
                push!(a.wrapping_sub(b));
            }
            Instruction::Mul => {
                let b = pop!();
                let a = pop!();
                push!(a.wrapping_mul(b));
            }
            Instruction::Div => {
                let b = pop!();
                let a = pop!();
                if b == 0 {
                    fault!(RuntimeErrorKind::DivisionByZero);
                }
                push!(a.wrapping_div(b));
            }
            Instruction::Neg => {
                let a = pop!();
                push!(a.wrapping_neg());
            }
            Instruction::Cmp => {
                let b = pop!();
                let a = pop!();
                push!(a.cmp(&b) as i64);
            }
            Instruction::Jlt(_) | Instruction::Jge(_) | Instruction::Jmp(_) => {
                let taken = match code[pc] {
                    Instruction::Jlt(_) => pop!() < 0,
                    Instruction::Jge(_) => pop!() >= 0,
                    _ => true,
                };
                if taken {
                    match codelet.jump_target(pc) {
                        Some(t) => next = t,
                        None => fault!(RuntimeErrorKind::OutOfScope),
                    }
                }
            }
            Instruction::Emit => {
                let v = pop!();
                if output.len() >= MAX_OUTPUT {
                    fault!(RuntimeErrorKind::OutOfScope);
                }
                output.push(v);
            }
            Instruction::Match => {
                if output.is_empty() {
                    fault!(RuntimeErrorKind::EmptyMatch);
                }
                return Ok(ExecOutcome::Match { output, steps });
            }
            Instruction::Fail => return Ok(ExecOutcome::NoMatch { steps }),
        }
        pc = next;
    }
    Ok(ExecOutcome::NoMatch { steps })
}
