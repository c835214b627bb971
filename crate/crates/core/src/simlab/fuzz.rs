use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hierarchy::{Engine, EngineParams, NewConcept, ThreadTicket};
use crate::reward::PartitionStats;
use crate::vm::{validate, Codelet, CodeletGenerator, ExecOutcome, GenParams, Instruction, Opcode};

/// Tally of a fuzzing run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FuzzReport {
    pub runs: u64,
    pub matches: u64,
    pub no_matches: u64,
    pub runtime_errors: u64,
    pub budget_exhausted: u64,
    /// Panics inside the engine or interpreter.
    pub host_failures: u64,
    /// Runs reporting more steps than their budget.
    pub overruns: u64,
    /// Non-matching runs that changed engine state beyond recording one
    /// negative example.
    pub leaks: u64,
}

impl FuzzReport {
    pub fn clean(&self) -> bool {
        self.host_failures == 0 && self.overruns == 0 && self.leaks == 0
    }
}

fn edge_value(rng: &mut ChaCha8Rng) -> i64 {
    match rng.gen_range(0..8) {
        0 => i64::MIN,
        1 => i64::MAX,
        2 => 0,
        3 => -1,
        _ => rng.gen_range(-300..=300),
    }
}

/// An arbitrary, unvalidated codelet: wild jumps, out-of-range loads.
pub fn wild_codelet(rng: &mut ChaCha8Rng) -> Codelet {
    let len = rng.gen_range(1..=16);
    let arity = rng.gen_range(1..=3);
    let code = (0..len)
        .map(|_| {
            let op = Opcode::ALL[rng.gen_range(0..Opcode::ALL.len())];
            match op {
                Opcode::Push => Instruction::Push(rng.gen()),
                Opcode::Load => Instruction::Load {
                    input: rng.gen_range(0..4),
                    index: rng.gen_range(0..12),
                },
                Opcode::Len => Instruction::Len(rng.gen_range(0..4)),
                Opcode::Jlt => Instruction::Jlt(rng.gen_range(-20..20)),
                Opcode::Jge => Instruction::Jge(rng.gen_range(-20..20)),
                Opcode::Jmp => Instruction::Jmp(rng.gen_range(-20..20)),
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
            }
        })
        .collect();
    Codelet::new(code, arity)
}

/// Run `count` random (codelet, input, budget) triples through the engine.
/// Codelets rotate between ones passing the static filter, raw generator
/// output and wild instruction soup.
pub fn fuzz_vm(seed: u64, count: u64) -> FuzzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut generator = CodeletGenerator::new(GenParams {
        seed,
        ..GenParams::default()
    })
    .expect("default generator parameters are valid");
    let mut engine: Engine<f64> = Engine::new(EngineParams {
        seed,
        ..EngineParams::default()
    })
    .expect("default parameters are valid");
    let sensor = engine.add_sensor("in", 8);
    let mut report = FuzzReport::default();
    for i in 0..count {
        let codelet = match i % 3 {
            0 => loop {
                let c = generator.next_codelet();
                if validate(&c).is_accept() {
                    break c;
                }
            },
            1 => generator.next_codelet(),
            _ => wild_codelet(&mut rng),
        };
        let inputs: Vec<Vec<i64>> = (0..codelet.arity())
            .map(|_| (0..rng.gen_range(0..8)).map(|_| edge_value(&mut rng)).collect())
            .collect();
        let budget = rng.gen_range(1..=1000);
        let links = vec![sensor; codelet.arity()];
        let id = engine
            .integrate(NewConcept::Regular { codelet, pinned: false }, &links, i)
            .expect("sensor parents are always valid");
        let ticket = ThreadTicket {
            concept: id,
            inputs,
            sources: links.clone(),
            origin: Some((sensor, 0)),
            priority: 1,
            expires_at: i + 1,
            resources: budget,
        };
        engine.enqueue(ticket, i);

        let mut expected = engine.clone();
        let c = expected.graph_mut().get_mut(id).expect("just added");
        c.usage += 1;
        c.stats.entry(links).or_insert_with(PartitionStats::new).record_negative();
        let expected_hash = expected.state_hash();

        report.runs += 1;
        let result = catch_unwind(AssertUnwindSafe(|| engine.step_engine(i)));
        let Ok(Some(run)) = result else {
            report.host_failures += 1;
            engine = expected;
            engine.remove_concept(id, i);
            continue;
        };
        if run.outcome.steps() > budget {
            report.overruns += 1;
        }
        match run.outcome {
            ExecOutcome::Match { .. } => report.matches += 1,
            ExecOutcome::NoMatch { .. } => report.no_matches += 1,
            ExecOutcome::RuntimeError { .. } => report.runtime_errors += 1,
            ExecOutcome::BudgetExhausted { .. } => report.budget_exhausted += 1,
        }
        if !run.outcome.is_match() && engine.state_hash() != expected_hash {
            report.leaks += 1;
        }
        engine.remove_concept(id, i);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_fuzz_is_clean_and_covers_outcomes() {
        let r = fuzz_vm(1, 2000);
        assert!(r.clean(), "{r:?}");
        assert_eq!(r.runs, 2000);
        assert!(r.matches > 0 && r.no_matches > 0 && r.runtime_errors > 0 && r.budget_exhausted > 0, "{r:?}");
        assert_eq!(r, fuzz_vm(1, 2000));
    }
}
