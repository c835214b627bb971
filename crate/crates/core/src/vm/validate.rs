//! Static pre-filter applied before a codelet joins the hierarchy.

use super::instruction::{Codelet, Instruction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    Empty,
    /// A jump lands outside `0..=len`.
    JumpOutOfRange,
    /// `LOAD`/`LEN` names an input slot at or beyond the arity.
    InputIndexOutOfRange,
    /// No `MATCH` is reachable from the entry point.
    NoMatchPath,
    /// No reachable instruction reads an input element.
    InputUnused,
    /// `MATCH` is reachable but nothing is ever emitted.
    NoOutput,
    UnreachableCode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

/// Control-flow successors of `pc`. `len` stands for "fell off the end".
fn successors(codelet: &Codelet, pc: usize) -> Vec<usize> {
    match codelet.instructions()[pc] {
        Instruction::Match | Instruction::Fail => vec![],
        Instruction::Jmp(_) => codelet.jump_target(pc).into_iter().collect(),
        Instruction::Jlt(_) | Instruction::Jge(_) => {
            let mut s = vec![pc + 1];
            s.extend(codelet.jump_target(pc));
            s
        }
        _ => vec![pc + 1],
    }
}

/// Instructions reachable from the entry, treating every conditional jump
/// as possibly going either way.
pub fn reachable(codelet: &Codelet) -> Vec<bool> {
    let n = codelet.len();
    let mut seen = vec![false; n];
    let mut work = vec![0usize];
    while let Some(pc) = work.pop() {
        if pc >= n || seen[pc] {
            continue;
        }
        seen[pc] = true;
        work.extend(successors(codelet, pc));
    }
    seen
}

pub fn validate(codelet: &Codelet) -> Verdict {
    use RejectReason::*;
    let code = codelet.instructions();
    if code.is_empty() {
        return Verdict::Reject(Empty);
    }
    for pc in 0..code.len() {
        if code[pc].jump_offset().is_some() && codelet.jump_target(pc).is_none() {
            return Verdict::Reject(JumpOutOfRange);
        }
        if code[pc]
            .input_slot()
            .is_some_and(|i| i as usize >= codelet.arity())
        {
            return Verdict::Reject(InputIndexOutOfRange);
        }
    }

    let live = reachable(codelet);
    let reached = |pred: fn(&Instruction) -> bool| {
        code.iter().zip(&live).any(|(ins, &r)| r && pred(ins))
    };
    if !reached(|i| matches!(i, Instruction::Match)) {
        return Verdict::Reject(NoMatchPath);
    }
    if !reached(|i| matches!(i, Instruction::Load { .. })) {
        return Verdict::Reject(InputUnused);
    }
    if !reached(|i| matches!(i, Instruction::Emit)) {
        return Verdict::Reject(NoOutput);
    }
    if live.iter().any(|r| !r) {
        return Verdict::Reject(UnreachableCode);
    }
    Verdict::Accept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::asm::parse_codelet;

    fn verdict(src: &str) -> Verdict {
        validate(&parse_codelet(src).unwrap())
    }

    #[test]
    fn identity_is_accepted() {
        assert_eq!(verdict("LOAD 0 0\nEMIT\nMATCH"), Verdict::Accept);
    }

    #[test]
    fn missing_match_is_rejected() {
        assert_eq!(
            verdict("LOAD 0 0\nEMIT\nFAIL"),
            Verdict::Reject(RejectReason::NoMatchPath)
        );
        // MATCH present but only after an unconditional FAIL.
        assert_eq!(
            verdict("LOAD 0 0\nEMIT\nFAIL\nMATCH"),
            Verdict::Reject(RejectReason::NoMatchPath)
        );
    }

    #[test]
    fn constant_classifier_is_rejected() {
        assert_eq!(
            verdict("PUSH 1\nEMIT\nMATCH"),
            Verdict::Reject(RejectReason::InputUnused)
        );
    }

    #[test]
    fn structural_rejections() {
        assert_eq!(
            verdict("LOAD 0 0\nJMP 5\nEMIT\nMATCH"),
            Verdict::Reject(RejectReason::JumpOutOfRange)
        );
        assert_eq!(
            verdict(".arity 1\nLOAD 1 0\nEMIT\nMATCH"),
            Verdict::Reject(RejectReason::InputIndexOutOfRange)
        );
        assert_eq!(
            verdict("LOAD 0 0\nPOP\nMATCH"),
            Verdict::Reject(RejectReason::NoOutput)
        );
        assert_eq!(
            verdict("LOAD 0 0\nEMIT\nMATCH\nPUSH 3"),
            Verdict::Reject(RejectReason::UnreachableCode)
        );
        assert_eq!(
            validate(&Codelet::new(vec![], 1)),
            Verdict::Reject(RejectReason::Empty)
        );
    }

    #[test]
    fn jump_to_end_is_in_range() {
        assert_eq!(
            verdict("LOAD 0 0\nDUP\nJLT 2\nEMIT\nMATCH"),
            Verdict::Accept
        );
    }
}
