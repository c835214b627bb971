//! Line-oriented text form of the persistent engine state.
//!
//! ```text
//! snapshot 1
//! clock <ms>
//! graph <next_id> <q0> <a0>
//! reward <value> <last_update_s> <rho>
//! template <id> <name> <base> <per_unit> <min,sizes>
//! concept <id> sensor <created> <usage> <channel> <width>
//! concept <id> regular <created> <usage> <pinned> <output_len|->
//! code <arity> <INSTR|INSTR|...>
//! concept <id> actuator <created> <usage> <template> <context> <value>
//! pending <t0> <cost_bits> <reward_t0>
//! inputs <slot> <id,id,...>
//! action <target> <slot> <q>
//! stats <id,id,...> <window|-> <n_pos> <n_neg> <history bits|->
//! ```
//!
//! Lines after a `concept` line belong to it. Floats are written in their
//! shortest round-trip form, so loading a written snapshot is lossless.
//! Names and channels must not contain whitespace.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::engine::{Engine, EngineError, EngineParams};
use super::graph::{Action, ActuatorTemplate, Concept, ConceptGraph, ConceptKind};
use crate::actuator::{ActuatorCopy, CostModel, PendingActivation};
use crate::ids::{ConceptId, Millis, TemplateId};
use crate::reward::{GlobalReward, PartitionStats};
use crate::scalar::Scalar;
use crate::vm::{parse_codelet, Codelet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SnapshotError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("restored graph is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn ids(list: &[ConceptId]) -> String {
    if list.is_empty() {
        return "-".into();
    }
    list.iter().map(|c| c.0.to_string()).collect::<Vec<_>>().join(",")
}

fn code_line(c: &Codelet) -> String {
    let body: Vec<String> = c.instructions().iter().map(|i| i.to_string()).collect();
    format!("code {} {}", c.arity(), body.join("|"))
}

pub fn write_snapshot<F: Scalar>(engine: &Engine<F>) -> String {
    let g = engine.graph();
    let r = engine.global_reward();
    let mut out = String::new();
    let _ = writeln!(out, "snapshot 1");
    let _ = writeln!(out, "clock {}", engine.clock());
    let _ = writeln!(out, "graph {} {} {}", g.next_id(), g.q0(), g.a0());
    let _ = writeln!(out, "reward {} {} {}", r.value(), r.last_update(), r.rho());
    for t in g.templates() {
        let sizes: Vec<String> = t.min_sizes.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(
            out,
            "template {} {} {} {} {}",
            t.id.0,
            t.name,
            t.cost.base,
            t.cost.per_unit,
            sizes.join(",")
        );
    }
    for c in g.concepts() {
        match &c.kind {
            ConceptKind::Sensor { channel } => {
                let _ = writeln!(
                    out,
                    "concept {} sensor {} {} {} {}",
                    c.id.0,
                    c.created,
                    c.usage,
                    channel,
                    c.output_len.unwrap_or(0)
                );
            }
            ConceptKind::Regular(code) => {
                let len = c.output_len.map_or("-".to_string(), |n| n.to_string());
                let _ = writeln!(
                    out,
                    "concept {} regular {} {} {} {}",
                    c.id.0, c.created, c.usage, c.pinned as u8, len
                );
                let _ = writeln!(out, "{}", code_line(code));
            }
            ConceptKind::Actuator(a) => {
                let _ = writeln!(
                    out,
                    "concept {} actuator {} {} {} {} {}",
                    c.id.0,
                    c.created,
                    c.usage,
                    a.template.0,
                    a.context.0,
                    a.value()
                );
                for p in a.pending() {
                    let _ = writeln!(out, "pending {} {} {}", p.t0, p.cost_bits, p.reward_t0);
                }
            }
        }
        for (slot, sources) in c.inputs.iter().enumerate() {
            let _ = writeln!(out, "inputs {} {}", slot, ids(sources));
        }
        for a in &c.actions {
            let _ = writeln!(out, "action {} {} {}", a.target.0, a.slot, a.q);
        }
        for (ctx, s) in &c.stats {
            let window = s.window().map_or("-".to_string(), |w| w.to_string());
            let hist: String = s.history().map(|b| if b { '1' } else { '0' }).collect();
            let hist = if hist.is_empty() { "-".to_string() } else { hist };
            let _ = writeln!(
                out,
                "stats {} {} {} {} {}",
                ids(ctx),
                window,
                s.n_pos(),
                s.n_neg(),
                hist
            );
        }
    }
    out
}

struct Cursor<'a> {
    line: usize,
    fields: Vec<&'a str>,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: impl Into<String>) -> SnapshotError {
        SnapshotError::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn expect_len(&self, n: usize) -> Result<(), SnapshotError> {
        if self.fields.len() == n {
            Ok(())
        } else {
            Err(self.err(format!("expected {} fields, found {}", n, self.fields.len())))
        }
    }

    fn num<T: std::str::FromStr>(&self, i: usize) -> Result<T, SnapshotError> {
        let f = self.fields.get(i).ok_or_else(|| self.err(format!("missing field {i}")))?;
        f.parse().map_err(|_| self.err(format!("bad number `{f}`")))
    }

    fn ids(&self, i: usize) -> Result<Vec<ConceptId>, SnapshotError> {
        let f = self.fields.get(i).ok_or_else(|| self.err(format!("missing field {i}")))?;
        if *f == "-" {
            return Ok(Vec::new());
        }
        f.split(',')
            .map(|x| x.parse().map(ConceptId).map_err(|_| self.err(format!("bad id `{x}`"))))
            .collect()
    }
}

/// Rebuild an engine from snapshot text. Runtime-only state (queue,
/// slot buffers, RNG position, logs) starts empty.
pub fn read_snapshot<F: Scalar>(text: &str, params: EngineParams<F>) -> Result<Engine<F>, SnapshotError> {
    let mut clock: Option<Millis> = None;
    let mut graph_hdr: Option<(u32, F, F)> = None;
    let mut reward: Option<GlobalReward<F>> = None;
    let mut templates = Vec::new();
    let mut concepts: Vec<Concept<F>> = Vec::new();
    let mut pending: BTreeMap<ConceptId, Vec<PendingActivation<F>>> = BTreeMap::new();
    let mut seen_header = false;

    for (n, raw) in text.lines().enumerate() {
        let c = Cursor {
            line: n + 1,
            fields: raw.split_whitespace().collect(),
        };
        let Some(&tag) = c.fields.first() else {
            continue;
        };
        if !seen_header {
            if tag != "snapshot" || c.fields.get(1) != Some(&"1") {
                return Err(c.err("missing `snapshot 1` header"));
            }
            seen_header = true;
            continue;
        }
        let current = concepts.last_mut();
        match tag {
            "clock" => {
                c.expect_len(2)?;
                clock = Some(c.num(1)?);
            }
            "graph" => {
                c.expect_len(4)?;
                graph_hdr = Some((c.num(1)?, c.num(2)?, c.num(3)?));
            }
            "reward" => {
                c.expect_len(4)?;
                let r = GlobalReward::restore(c.num(1)?, c.num(2)?, c.num(3)?).map_err(|e| c.err(e.to_string()))?;
                reward = Some(r);
            }
            "template" => {
                c.expect_len(6)?;
                let cost = CostModel::new(c.num(3)?, c.num(4)?).map_err(|e| c.err(e.to_string()))?;
                let min_sizes: Vec<usize> = c.fields[5]
                    .split(',')
                    .map(|x| x.parse().map_err(|_| c.err(format!("bad size `{x}`"))))
                    .collect::<Result<_, _>>()?;
                templates.push(ActuatorTemplate {
                    id: TemplateId(c.num(1)?),
                    name: c.fields[2].to_string(),
                    arity: min_sizes.len(),
                    min_sizes,
                    cost,
                });
            }
            "concept" => {
                let id = ConceptId(c.num(1)?);
                let kind_tag = *c.fields.get(2).ok_or_else(|| c.err("missing concept kind"))?;
                let (kind, output_len, pinned) = match kind_tag {
                    "sensor" => {
                        c.expect_len(7)?;
                        let kind = ConceptKind::Sensor {
                            channel: c.fields[5].to_string(),
                        };
                        (kind, Some(c.num(6)?), true)
                    }
                    "regular" => {
                        c.expect_len(7)?;
                        let pinned = c.num::<u8>(5)? != 0;
                        let len = if c.fields[6] == "-" { None } else { Some(c.num(6)?) };
                        // Placeholder until the `code` line arrives.
                        let kind = ConceptKind::Regular(Codelet::new(Vec::new(), 1));
                        (kind, len, pinned)
                    }
                    "actuator" => {
                        c.expect_len(8)?;
                        let copy = ActuatorCopy::restore(
                            TemplateId(c.num(5)?),
                            ConceptId(c.num(6)?),
                            c.num(7)?,
                            Vec::new(),
                        );
                        (ConceptKind::Actuator(copy), None, false)
                    }
                    other => return Err(c.err(format!("unknown concept kind `{other}`"))),
                };
                concepts.push(Concept {
                    id,
                    kind,
                    inputs: Vec::new(),
                    actions: Vec::new(),
                    stats: BTreeMap::new(),
                    usage: c.num(4)?,
                    created: c.num(3)?,
                    pinned,
                    output_len,
                });
            }
            "code" | "pending" | "inputs" | "action" | "stats" => {
                let Some(cur) = current else {
                    return Err(c.err(format!("`{tag}` before any concept")));
                };
                match tag {
                    "code" => {
                        let ConceptKind::Regular(code) = &mut cur.kind else {
                            return Err(c.err("`code` on a non-regular concept"));
                        };
                        let arity: usize = c.num(1)?;
                        let body = raw
                            .trim_start()
                            .splitn(3, char::is_whitespace)
                            .nth(2)
                            .unwrap_or("")
                            .replace('|', "\n");
                        let parsed = parse_codelet(&format!(".arity {arity}\n{body}")).map_err(|e| c.err(e.to_string()))?;
                        *code = parsed;
                    }
                    "pending" => {
                        c.expect_len(4)?;
                        if cur.actuator().is_none() {
                            return Err(c.err("`pending` on a non-actuator concept"));
                        }
                        pending.entry(cur.id).or_default().push(PendingActivation {
                            t0: c.num(1)?,
                            cost_bits: c.num(2)?,
                            reward_t0: c.num(3)?,
                        });
                    }
                    "inputs" => {
                        c.expect_len(3)?;
                        let slot: usize = c.num(1)?;
                        if slot != cur.inputs.len() {
                            return Err(c.err("input slots out of order"));
                        }
                        cur.inputs.push(c.ids(2)?);
                    }
                    "action" => {
                        c.expect_len(4)?;
                        cur.actions.push(Action {
                            target: ConceptId(c.num(1)?),
                            slot: c.num(2)?,
                            q: c.num(3)?,
                        });
                    }
                    _ => {
                        c.expect_len(6)?;
                        let ctx = c.ids(1)?;
                        let stats = if c.fields[2] == "-" {
                            PartitionStats::with_counts(c.num(3)?, c.num(4)?)
                        } else {
                            let window: usize = c.num(2)?;
                            let hist = if c.fields[5] == "-" { "" } else { c.fields[5] };
                            let s = PartitionStats::from_history(window, hist.chars().map(|ch| ch == '1'));
                            if s.n_pos() != c.num::<u64>(3)? || s.n_neg() != c.num::<u64>(4)? {
                                return Err(c.err("windowed counts disagree with history"));
                            }
                            s
                        };
                        cur.stats.insert(ctx, stats);
                    }
                }
            }
            other => return Err(c.err(format!("unknown record `{other}`"))),
        }
    }

    let missing = |what: &str| SnapshotError::Parse {
        line: 0,
        msg: format!("missing `{what}` record"),
    };
    let clock = clock.ok_or_else(|| missing("clock"))?;
    let (next_id, q0, a0) = graph_hdr.ok_or_else(|| missing("graph"))?;
    let reward = reward.ok_or_else(|| missing("reward"))?;
    for c in &mut concepts {
        if let ConceptKind::Regular(code) = &c.kind {
            if code.is_empty() {
                return Err(SnapshotError::Inconsistent(format!("concept {} has no code", c.id)));
            }
        }
        if let ConceptKind::Actuator(a) = &mut c.kind {
            let records = pending.remove(&c.id).unwrap_or_default();
            *a = ActuatorCopy::restore(a.template, a.context, a.value(), records);
        }
    }
    let graph = ConceptGraph::from_parts(concepts, templates, next_id, q0, a0);
    graph
        .audit()
        .map_err(|e| SnapshotError::Inconsistent(e.to_string()))?;
    Ok(Engine::assemble(params, graph, reward, clock)?)
}
