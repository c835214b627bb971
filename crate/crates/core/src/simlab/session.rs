use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use super::config::{ConfigError, RunConfig};
use super::world::{Overlay, SimWorld, WorldEvent, VISUAL, VISUAL_ON};
use crate::actuator::CostModel;
use crate::hierarchy::{
    ActuationEvent, ActuationEventKind, Engine, EngineCounters, EngineError, HierarchyError, NewConcept,
};
use crate::ids::{ConceptId, Millis, TemplateId};
use crate::vm::parse_codelet;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Actuator(#[from] crate::actuator::ActuatorError),
    #[error(transparent)]
    World(#[from] super::world::WorldError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Average reward sampled at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t_ms: Millis,
    pub r: f64,
}

/// Everything a session records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub samples: Vec<Sample>,
    pub actuations: Vec<ActuationEvent<f64>>,
    pub template_names: Vec<String>,
    pub counters: EngineCounters,
    pub echoes_scheduled: u64,
    pub echoes_delivered: u64,
}

impl MetricsLog {
    /// Creation times of actuator copies, per template name.
    pub fn copies_created(&self) -> BTreeMap<&str, Vec<Millis>> {
        let mut out: BTreeMap<&str, Vec<Millis>> = BTreeMap::new();
        for e in self.actuations.iter().filter(|e| e.kind == ActuationEventKind::Created) {
            out.entry(self.template_names[e.template.0 as usize].as_str())
                .or_default()
                .push(e.at);
        }
        out
    }
}

/// Round to the precision the metrics file carries, so a written file
/// parses back to the same values.
pub fn quantize(r: f64) -> f64 {
    (r * 1e12).round() / 1e12
}

/// A wired world and engine advancing together in 1 ms ticks.
#[derive(Debug)]
pub struct Session {
    cfg: RunConfig,
    engine: Engine<f64>,
    world: SimWorld,
    log: MetricsLog,
    /// Bootstrap actuator links waiting for their parent's first output.
    pending_links: Vec<(ConceptId, TemplateId)>,
    now: Millis,
}

impl Session {
    pub fn new(cfg: &RunConfig) -> Result<Self, SessionError> {
        cfg.validate()?;
        let mut engine = Engine::new(cfg.engine_params()?)?;
        let world = SimWorld::new(cfg.world_params()?)?;
        let width = cfg.world.width;
        engine.add_sensor(VISUAL, width);
        engine.add_sensor(VISUAL_ON, width);
        let mut names = Vec::new();
        for a in &cfg.world.actuators {
            let cost = CostModel::new(a.cost_base, a.cost_per_unit)?;
            engine.add_template(&a.name, vec![a.min_size], cost);
            names.push(a.name.clone());
        }
        let mut pending_links = Vec::new();
        for b in &cfg.bootstrap {
            let sensor = engine.graph().sensor(&b.channel).expect("validated channel");
            for src in b.sources() {
                let codelet = parse_codelet(&src).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                let links = vec![sensor; codelet.arity()];
                let id = engine.integrate(NewConcept::Regular { codelet, pinned: true }, &links, 0)?;
                if let Some(a) = &b.actuator {
                    let t = engine.graph().template_by_name(a).expect("validated actuator").id;
                    pending_links.push((id, t));
                }
            }
        }
        Ok(Session {
            cfg: cfg.clone(),
            engine,
            world,
            log: MetricsLog {
                template_names: names,
                ..MetricsLog::default()
            },
            pending_links,
            now: 0,
        })
    }

    pub fn now(&self) -> Millis {
        self.now
    }

    pub fn engine(&self) -> &Engine<f64> {
        &self.engine
    }

    pub fn world(&self) -> &SimWorld {
        &self.world
    }

    pub fn log(&self) -> &MetricsLog {
        &self.log
    }

    pub fn inject(&mut self, overlay: Overlay) {
        self.world.inject(overlay);
    }

    /// Current average reward.
    pub fn reward(&self) -> f64 {
        self.engine.reward_at(self.now)
    }

    /// Advance one millisecond.
    pub fn step(&mut self) -> Result<(), SessionError> {
        let t = self.now + 1;
        for ev in self.world.step(1) {
            if let WorldEvent::Frame { channel, data, .. } = ev {
                self.engine.sense(channel, &data, t)?;
            }
        }
        self.engine.run_tick(t);
        for cmd in self.engine.drain_actuations() {
            self.world.apply_actuation(cmd.template.0 as usize, &cmd.inputs, t)?;
        }
        self.engine.settle(t);

        let s = self.cfg.session.clone();
        if s.grow_every_ms > 0 && t % s.grow_every_ms == 0 {
            self.engine.grow(t, s.grow_attempts);
        }
        if s.explore_every_ms > 0 && t % s.explore_every_ms == 0 {
            self.engine.explore_actuators(t);
        }
        if s.prune_every_ms > 0 && t % s.prune_every_ms == 0 {
            self.engine.prune(t);
        }
        if !self.pending_links.is_empty() {
            self.attach_ready(t)?;
        }
        self.log.actuations.extend(self.engine.drain_log());
        self.now = t;
        if t % s.sample_ms == 0 {
            let r = quantize(self.reward());
            self.log.samples.push(Sample { t_ms: t, r });
        }
        Ok(())
    }

    fn attach_ready(&mut self, t: Millis) -> Result<(), SessionError> {
        let mut waiting = Vec::new();
        for (parent, template) in std::mem::take(&mut self.pending_links) {
            let Some(c) = self.engine.graph().get(parent) else {
                continue;
            };
            let min = self.engine.graph().template(template).expect("known").min_sizes[0];
            if c.output_len.is_some_and(|n| n >= min) {
                self.engine
                    .integrate(NewConcept::ActuatorCopy(template), &[parent], t)?;
            } else {
                waiting.push((parent, template));
            }
        }
        self.pending_links = waiting;
        Ok(())
    }

    pub fn run_until(&mut self, end: Millis) -> Result<(), SessionError> {
        while self.now < end {
            self.step()?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> MetricsLog {
        self.log.counters = self.engine.counters().clone();
        self.log.echoes_scheduled = self.world.echoes_scheduled();
        self.log.echoes_delivered = self.world.echoes_delivered();
        self.log
    }

    pub fn into_parts(self) -> (Engine<f64>, MetricsLog) {
        let engine = self.engine.clone();
        (engine, self.finish())
    }
}

pub fn duration_ms(cfg: &RunConfig) -> Millis {
    (cfg.session.duration_s * 1000.0).round() as Millis
}

/// Run a whole session as configured.
pub fn run_session(cfg: &RunConfig) -> Result<MetricsLog, SessionError> {
    let mut s = Session::new(cfg)?;
    s.run_until(duration_ms(cfg))?;
    Ok(s.finish())
}

pub fn metrics_csv(log: &MetricsLog) -> String {
    let mut out = String::from("t,R\n");
    for s in &log.samples {
        let _ = writeln!(out, "{:.3},{:.12}", s.t_ms as f64 / 1000.0, s.r);
    }
    out
}

pub fn actuations_csv(log: &MetricsLog) -> String {
    let mut out = String::from("t,event,template,copy,cost,resources,activated,value,inputs\n");
    for e in &log.actuations {
        let kind = match e.kind {
            ActuationEventKind::Request => "request",
            ActuationEventKind::Update => "update",
            ActuationEventKind::Removed => "removed",
            ActuationEventKind::Created => "created",
        };
        let inputs: Vec<String> = e
            .inputs
            .iter()
            .map(|v| v.iter().map(i64::to_string).collect::<Vec<_>>().join(" "))
            .collect();
        let _ = writeln!(
            out,
            "{:.3},{},{},{},{:.6},{:.6},{},{:.12},{}",
            e.at as f64 / 1000.0,
            kind,
            log.template_names[e.template.0 as usize],
            e.copy,
            e.cost,
            e.resources,
            e.activated as u8,
            e.value,
            inputs.join("|")
        );
    }
    out
}

/// Write `metrics.csv` and `actuations.csv` into `dir`.
pub fn emit_metrics(log: &MetricsLog, dir: impl AsRef<Path>) -> io::Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("metrics.csv"), metrics_csv(log))?;
    fs::write(dir.join("actuations.csv"), actuations_csv(log))
}

/// Parse a `t,R` file back into samples.
pub fn parse_metrics(text: &str) -> Result<Vec<Sample>, String> {
    let mut lines = text.lines();
    if lines.next() != Some("t,R") {
        return Err("missing `t,R` header".into());
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let (t, r) = l.split_once(',').ok_or_else(|| format!("line {}: no comma", i + 2))?;
            let t: f64 = t.parse().map_err(|_| format!("line {}: bad time", i + 2))?;
            let r: f64 = r.parse().map_err(|_| format!("line {}: bad value", i + 2))?;
            Ok(Sample {
                t_ms: (t * 1000.0).round() as Millis,
                r,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(seconds: f64) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.session.duration_s = seconds;
        cfg
    }

    #[test]
    fn zero_duration_gives_empty_metrics() {
        let log = run_session(&short(0.0)).unwrap();
        assert!(log.samples.is_empty());
        assert_eq!(metrics_csv(&log), "t,R\n");
    }

    #[test]
    fn without_concepts_reward_stays_zero() {
        let mut cfg = short(3.0);
        cfg.session.grow_every_ms = 0;
        cfg.bootstrap.clear();
        let log = run_session(&cfg).unwrap();
        assert_eq!(log.samples.len(), 300);
        assert!(log.samples.iter().all(|s| s.r == 0.0));
    }

    #[test]
    fn metrics_file_round_trips() {
        let log = MetricsLog {
            samples: vec![
                Sample { t_ms: 10, r: quantize(0.1) },
                Sample { t_ms: 20, r: quantize(1.0 / 3.0) },
                Sample { t_ms: 30, r: quantize(2.718281828459045) },
            ],
            ..MetricsLog::default()
        };
        let text = metrics_csv(&log);
        assert_eq!(text.lines().count(), 4);
        assert_eq!(parse_metrics(&text).unwrap(), log.samples);
    }

    #[test]
    fn same_seed_same_files() {
        let cfg = short(4.0);
        let a = run_session(&cfg).unwrap();
        let b = run_session(&cfg).unwrap();
        assert_eq!(metrics_csv(&a), metrics_csv(&b));
        assert_eq!(actuations_csv(&a), actuations_csv(&b));
        assert!(a.samples.iter().any(|s| s.r > 0.0), "bootstrap detectors never matched");
    }

    #[test]
    fn emit_writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let log = run_session(&short(1.0)).unwrap();
        emit_metrics(&log, dir.path()).unwrap();
        let m = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(parse_metrics(&m).unwrap(), log.samples);
        assert!(dir.path().join("actuations.csv").exists());
    }
}
