//! Codelet instruction set, step-budgeted interpreter, static pre-filter and
//! random program source.

pub mod asm;
pub mod generate;
pub mod instruction;
pub mod interp;
pub mod validate;

pub use asm::{parse_codelet, print_codelet, AsmError};
pub use generate::{generate_random, CodeletGenerator, GenError, GenParams};
pub use instruction::{Codelet, Instruction, Opcode};
pub use interp::{execute, ExecError, ExecOutcome, RuntimeErrorKind, MAX_OUTPUT, MAX_STACK};
pub use validate::{validate, RejectReason, Verdict};
