//! Text assembly for codelets.
//!
//! One instruction per line, `OPCODE operand operand`. A leading `.arity N`
//! directive records the arity; without it the arity is inferred from the
//! highest input index used (minimum 1). `;` and `#` start comments.

use std::fmt::Write as _;

use super::instruction::{Codelet, Instruction, Opcode};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AsmError {
    #[error("line {line}: unknown opcode `{op}`")]
    UnknownOpcode { line: usize, op: String },
    #[error("line {line}: `{op}` expects {expected} operand(s), got {got}")]
    OperandCount {
        line: usize,
        op: Opcode,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: bad operand `{text}`")]
    BadOperand { line: usize, text: String },
    #[error("line {line}: bad directive `{text}`")]
    BadDirective { line: usize, text: String },
}

/// Print a codelet so that `parse_codelet(&print_codelet(c)) == c`.
pub fn print_codelet(codelet: &Codelet) -> String {
    let mut out = String::new();
    let _ = writeln!(out, ".arity {}", codelet.arity());
    for ins in codelet.instructions() {
        let _ = writeln!(out, "{ins}");
    }
    out
}

pub fn parse_codelet(src: &str) -> Result<Codelet, AsmError> {
    let mut arity: Option<usize> = None;
    let mut code = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let line_no = i + 1;
        let line = raw
            .split([';', '#'])
            .next()
            .unwrap_or_default()
            .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix(".arity") {
            let n: usize = rest.trim().parse().map_err(|_| AsmError::BadDirective {
                line: line_no,
                text: line.to_string(),
            })?;
            if n == 0 {
                return Err(AsmError::BadDirective {
                    line: line_no,
                    text: line.to_string(),
                });
            }
            arity = Some(n);
            continue;
        }
        code.push(parse_instruction(line, line_no)?);
    }
    let arity = arity.unwrap_or_else(|| {
        code.iter()
            .filter_map(Instruction::input_slot)
            .map(|i| i as usize + 1)
            .max()
            .unwrap_or(1)
    });
    Ok(Codelet::new(code, arity))
}

fn parse_instruction(line: &str, line_no: usize) -> Result<Instruction, AsmError> {
    let mut parts = line.split_whitespace();
    let mnemonic = parts.next().unwrap_or_default();
    let op = Opcode::from_mnemonic(mnemonic).ok_or_else(|| AsmError::UnknownOpcode {
        line: line_no,
        op: mnemonic.to_string(),
    })?;
    let operands: Vec<&str> = parts.collect();
    let expected = match op {
        Opcode::Load => 2,
        Opcode::Push | Opcode::Len | Opcode::Jlt | Opcode::Jge | Opcode::Jmp => 1,
        _ => 0,
    };
    if operands.len() != expected {
        return Err(AsmError::OperandCount {
            line: line_no,
            op,
            expected,
            got: operands.len(),
        });
    }

    fn num<T: std::str::FromStr>(text: &str, line: usize) -> Result<T, AsmError> {
        text.parse().map_err(|_| AsmError::BadOperand {
            line,
            text: text.to_string(),
        })
    }

    Ok(match op {
        Opcode::Push => Instruction::Push(num(operands[0], line_no)?),
        Opcode::Load => Instruction::Load {
            input: num(operands[0], line_no)?,
            index: num(operands[1], line_no)?,
        },
        Opcode::Len => Instruction::Len(num(operands[0], line_no)?),
        Opcode::Jlt => Instruction::Jlt(num(operands[0], line_no)?),
        Opcode::Jge => Instruction::Jge(num(operands[0], line_no)?),
        Opcode::Jmp => Instruction::Jmp(num(operands[0], line_no)?),
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
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::generate::{generate_random, GenParams};
    use proptest::prelude::*;

    #[test]
    fn parses_comments_and_infers_arity() {
        let c = parse_codelet("; header\nLOAD 1 0  # second input\nemit\nMATCH\n").unwrap();
        assert_eq!(c.arity(), 2);
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(
            parse_codelet("FROB 1"),
            Err(AsmError::UnknownOpcode { line: 1, .. })
        ));
        assert!(matches!(
            parse_codelet("PUSH"),
            Err(AsmError::OperandCount { .. })
        ));
        assert!(matches!(
            parse_codelet("LOAD 0 x"),
            Err(AsmError::BadOperand { .. })
        ));
        assert!(matches!(
            parse_codelet(".arity 0"),
            Err(AsmError::BadDirective { .. })
        ));
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(seed in any::<u64>()) {
            let c = generate_random(&GenParams { seed, ..GenParams::default() });
            prop_assert_eq!(parse_codelet(&print_codelet(&c)).unwrap(), c);
        }
    }
}
