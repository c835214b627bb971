use std::collections::BTreeMap;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ids::Millis;

/// Intensity channel.
pub const VISUAL: &str = "visual";
/// Positive frame-to-frame intensity changes of the visual channel.
pub const VISUAL_ON: &str = "visual_on";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorldError {
    #[error("unknown actuator {0}")]
    UnknownActuator(usize),
    #[error("world parameter `{0}` out of range")]
    BadParam(&'static str),
}

/// What an actuator does to the visual field, if anything.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedbackRule {
    /// Actuation-to-sensation delay.
    pub delay_ms: Millis,
    pub magnitude: i64,
    pub duration_ms: Millis,
    pub cells: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldActuator {
    pub name: String,
    /// `None` models movements that never cross the visual field.
    pub feedback: Option<FeedbackRule>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldParams {
    pub width: usize,
    pub frame_ms: Millis,
    pub seed: u64,
    /// Per-cell, per-frame probability of a background blob.
    pub blob_rate: f64,
    /// Largest background intensity.
    pub blob_max: i64,
    pub actuators: Vec<WorldActuator>,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            width: 8,
            frame_ms: 5,
            seed: 0,
            blob_rate: 0.05,
            blob_max: 50,
            actuators: Vec::new(),
        }
    }
}

impl WorldParams {
    pub fn check(&self) -> Result<(), WorldError> {
        if self.width == 0 {
            return Err(WorldError::BadParam("width"));
        }
        if self.frame_ms == 0 {
            return Err(WorldError::BadParam("frame_ms"));
        }
        if !(0.0..=1.0).contains(&self.blob_rate) {
            return Err(WorldError::BadParam("blob_rate"));
        }
        if self.blob_max < 0 {
            return Err(WorldError::BadParam("blob_max"));
        }
        for a in &self.actuators {
            if let Some(f) = &a.feedback {
                if f.duration_ms == 0 || f.cells.is_empty() || f.cells.end > self.width {
                    return Err(WorldError::BadParam("feedback"));
                }
            }
        }
        Ok(())
    }
}

/// Additive intensity on a band of cells over `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Overlay {
    pub start: Millis,
    pub end: Millis,
    pub cells: Range<usize>,
    pub magnitude: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorldEvent {
    Frame {
        at: Millis,
        channel: &'static str,
        data: Vec<i64>,
    },
    /// A scheduled echo became visible.
    Echo {
        at: Millis,
        actuator: usize,
        scheduled_for: Millis,
    },
}

/// Discrete-time stand-in for the robot and its surroundings.
#[derive(Debug, Clone)]
pub struct SimWorld {
    params: WorldParams,
    clock: Millis,
    rng: ChaCha8Rng,
    scheduled: BTreeMap<(Millis, u64), (usize, Overlay)>,
    seq: u64,
    active: Vec<Overlay>,
    previous: Vec<i64>,
    echoes_scheduled: u64,
    echoes_delivered: u64,
}

impl SimWorld {
    pub fn new(params: WorldParams) -> Result<Self, WorldError> {
        params.check()?;
        Ok(SimWorld {
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            previous: vec![0; params.width],
            clock: 0,
            scheduled: BTreeMap::new(),
            seq: 0,
            active: Vec::new(),
            echoes_scheduled: 0,
            echoes_delivered: 0,
            params,
        })
    }

    pub fn params(&self) -> &WorldParams {
        &self.params
    }

    pub fn clock(&self) -> Millis {
        self.clock
    }

    pub fn echoes_scheduled(&self) -> u64 {
        self.echoes_scheduled
    }

    pub fn echoes_delivered(&self) -> u64 {
        self.echoes_delivered
    }

    pub fn pending_echoes(&self) -> usize {
        self.scheduled.len()
    }

    pub fn actuator_index(&self, name: &str) -> Option<usize> {
        self.params.actuators.iter().position(|a| a.name == name)
    }

    /// Add an overlay directly (software stimulus).
    pub fn inject(&mut self, overlay: Overlay) {
        self.active.push(overlay);
    }

    pub fn apply_actuation(&mut self, actuator: usize, _inputs: &[Vec<i64>], now: Millis) -> Result<(), WorldError> {
        let a = self
            .params
            .actuators
            .get(actuator)
            .ok_or(WorldError::UnknownActuator(actuator))?;
        if let Some(f) = &a.feedback {
            let at = now + f.delay_ms;
            let overlay = Overlay {
                start: at,
                end: at + f.duration_ms,
                cells: f.cells.clone(),
                magnitude: f.magnitude,
            };
            self.scheduled.insert((at, self.seq), (actuator, overlay));
            self.seq += 1;
            self.echoes_scheduled += 1;
        }
        Ok(())
    }

    /// Advance the clock by `dt` ms, returning everything that happened in
    /// `(clock, clock + dt]`.
    pub fn step(&mut self, dt: Millis) -> Vec<WorldEvent> {
        assert!(dt > 0, "world step must advance time");
        let mut events = Vec::new();
        for t in self.clock + 1..=self.clock + dt {
            self.tick(t, &mut events);
        }
        self.clock += dt;
        events
    }

    fn tick(&mut self, t: Millis, events: &mut Vec<WorldEvent>) {
        while let Some(entry) = self.scheduled.first_entry() {
            if entry.key().0 > t {
                break;
            }
            let ((due, _), (actuator, overlay)) = entry.remove_entry();
            self.echoes_delivered += 1;
            events.push(WorldEvent::Echo {
                at: t,
                actuator,
                scheduled_for: due,
            });
            self.active.push(overlay);
        }
        self.active.retain(|o| o.end > t);
        if t % self.params.frame_ms != 0 {
            return;
        }
        let w = self.params.width;
        let mut frame = vec![0i64; w];
        if self.params.blob_rate > 0.0 {
            for cell in frame.iter_mut() {
                if self.rng.gen_bool(self.params.blob_rate) {
                    *cell = self.rng.gen_range(1..=self.params.blob_max.max(1));
                }
            }
        }
        for o in self.active.iter().filter(|o| o.start <= t) {
            for cell in o.cells.clone() {
                frame[cell] = frame[cell].saturating_add(o.magnitude);
            }
        }
        let on: Vec<i64> = frame
            .iter()
            .zip(&self.previous)
            .map(|(&now, &before)| (now - before).max(0))
            .collect();
        if frame.iter().any(|&v| v != 0) {
            events.push(WorldEvent::Frame {
                at: t,
                channel: VISUAL,
                data: frame.clone(),
            });
        }
        if on.iter().any(|&v| v != 0) {
            events.push(WorldEvent::Frame {
                at: t,
                channel: VISUAL_ON,
                data: on,
            });
        }
        self.previous = frame;
    }
}
