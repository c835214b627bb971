//! Run configuration, read from TOML.
//!
//! Every key is optional; missing keys take the defaults below. Unknown
//! keys are rejected.
//!
//! ```toml
//! [session]
//! duration_s = 60.0
//! seed = 7
//! sample_ms = 10          # metrics resolution
//! workers = 1
//! grow_every_ms = 100     # 0 disables random program generation
//! grow_attempts = 200
//! explore_every_ms = 1000 # 0 disables actuator exploration
//! prune_every_ms = 1000   # 0 disables pruning
//!
//! [vm]
//! min_len = 4
//! max_len = 10
//! min_arity = 1
//! max_arity = 2
//! max_index = 7
//! imm_range = 128
//!
//! [hierarchy]
//! queue_capacity = 10000
//! ttl_ms = 500
//! base_resources = 200
//! max_priority = 100
//! grace_ms = 10000
//! usage_threshold = 0.1
//! value_threshold = 0.01
//! coexist_ms = 50
//! steps_per_ms = 20000
//! stats_window = 0        # 0 = cumulative statistics
//! max_regular = 200
//!
//! [reward]
//! beta = 100.0
//! rho = 1.0
//!
//! [learning]
//! alpha = 0.1
//! gamma = 0.9
//! q0 = 0.1
//!
//! [actuator]
//! alpha = 0.1
//! theta = 0.05
//! a_const = 1.0
//! a0 = 1.0
//! settle_ms = 300
//! n_max = 50              # 0 = unlimited
//!
//! [world]
//! width = 8
//! frame_ms = 5
//! blob_rate = 0.05
//! blob_max = 50
//!
//! [[world.actuators]]
//! name = "arm"
//! cost_base = 10.0
//! cost_per_unit = 0.0
//! min_size = 1
//! feedback = { delay_ms = 300, magnitude = 200, duration_ms = 100, cells = [4, 8] }
//!
//! [[bootstrap]]
//! channel = "visual_on"
//! cells = [0, 1, 2, 3]    # `{k}` in `code` is replaced by each cell
//! code = "LOAD 0 {k}\nPUSH 100\nCMP\nJLT 3\nLOAD 0 {k}\nEMIT\nMATCH\nFAIL"
//! actuator = "arm"        # optional: link a copy under each detector
//!
//! [fig3]
//! warmup_s = 50.0
//! stimulus_ms = 100
//! break_ms = 2000
//! repetitions = 30
//! bin_ms = 10
//! magnitude = 200
//! cells = [0, 4]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::world::{FeedbackRule, WorldActuator, WorldParams, VISUAL, VISUAL_ON};
use crate::actuator::ActuatorParams;
use crate::hierarchy::EngineParams;
use crate::learning::LearnParams;
use crate::reward::RewardParams;
use crate::vm::GenParams;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSection {
    pub duration_s: f64,
    pub seed: u64,
    pub sample_ms: u64,
    pub workers: usize,
    pub grow_every_ms: u64,
    pub grow_attempts: usize,
    pub explore_every_ms: u64,
    pub prune_every_ms: u64,
}

impl Default for SessionSection {
    fn default() -> Self {
        SessionSection {
            duration_s: 60.0,
            seed: 7,
            sample_ms: 10,
            workers: 1,
            grow_every_ms: 100,
            grow_attempts: 200,
            explore_every_ms: 1000,
            prune_every_ms: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VmSection {
    pub min_len: usize,
    pub max_len: usize,
    pub min_arity: usize,
    pub max_arity: usize,
    pub max_index: u8,
    pub imm_range: i32,
}

impl Default for VmSection {
    fn default() -> Self {
        let g = GenParams::default();
        VmSection {
            min_len: g.min_len,
            max_len: g.max_len,
            min_arity: g.min_arity,
            max_arity: g.max_arity,
            max_index: g.max_index,
            imm_range: g.imm_range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierarchySection {
    pub queue_capacity: usize,
    pub ttl_ms: u64,
    pub base_resources: u32,
    pub max_priority: u32,
    pub grace_ms: u64,
    pub usage_threshold: f64,
    pub value_threshold: f64,
    pub coexist_ms: u64,
    pub steps_per_ms: u64,
    pub stats_window: usize,
    pub max_regular: usize,
}

impl Default for HierarchySection {
    fn default() -> Self {
        let e = EngineParams::<f64>::default();
        HierarchySection {
            queue_capacity: e.queue_capacity,
            ttl_ms: e.ttl_ms,
            base_resources: e.base_resources,
            max_priority: e.max_priority,
            grace_ms: e.grace_ms,
            usage_threshold: e.usage_threshold,
            value_threshold: e.value_threshold,
            coexist_ms: e.coexist_ms,
            steps_per_ms: e.steps_per_ms,
            stats_window: 0,
            max_regular: e.max_regular,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub beta: f64,
    pub rho: f64,
}

impl Default for RewardSection {
    fn default() -> Self {
        let r = RewardParams::<f64>::default();
        RewardSection {
            beta: r.beta,
            rho: r.rho,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningSection {
    pub alpha: f64,
    pub gamma: f64,
    pub q0: f64,
}

impl Default for LearningSection {
    fn default() -> Self {
        let l = LearnParams::<f64>::default();
        LearningSection {
            alpha: l.alpha,
            gamma: l.gamma,
            q0: l.q0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorSection {
    pub alpha: f64,
    pub theta: f64,
    pub a_const: f64,
    pub a0: f64,
    pub settle_ms: u64,
    pub n_max: usize,
}

impl Default for ActuatorSection {
    fn default() -> Self {
        let a = ActuatorParams::<f64>::default();
        ActuatorSection {
            alpha: a.alpha,
            theta: a.theta,
            a_const: a.a_const,
            a0: a.a0,
            settle_ms: a.settle_ms,
            n_max: a.n_max.unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSection {
    pub delay_ms: u64,
    pub magnitude: i64,
    pub duration_ms: u64,
    /// Half-open cell range `[from, to)`.
    pub cells: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorSpec {
    pub name: String,
    #[serde(default = "default_cost_base")]
    pub cost_base: f64,
    #[serde(default)]
    pub cost_per_unit: f64,
    #[serde(default = "default_min_size")]
    pub min_size: usize,
    #[serde(default)]
    pub feedback: Option<FeedbackSection>,
}

fn default_cost_base() -> f64 {
    10.0
}

fn default_min_size() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSection {
    pub width: usize,
    pub frame_ms: u64,
    pub blob_rate: f64,
    pub blob_max: i64,
    pub actuators: Vec<ActuatorSpec>,
}

impl Default for WorldSection {
    fn default() -> Self {
        let w = WorldParams::default();
        WorldSection {
            width: w.width,
            frame_ms: w.frame_ms,
            blob_rate: w.blob_rate,
            blob_max: w.blob_max,
            actuators: vec![
                ActuatorSpec {
                    name: "arm".into(),
                    cost_base: default_cost_base(),
                    cost_per_unit: 0.0,
                    min_size: 1,
                    feedback: Some(FeedbackSection {
                        delay_ms: 300,
                        magnitude: 200,
                        duration_ms: 100,
                        cells: [4, 8],
                    }),
                },
                ActuatorSpec {
                    name: "wave".into(),
                    cost_base: default_cost_base(),
                    cost_per_unit: 0.0,
                    min_size: 1,
                    feedback: None,
                },
            ],
        }
    }
}

/// Hand-written concepts installed before the session starts. They are
/// pinned: pruning never removes them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSpec {
    pub channel: String,
    pub code: String,
    /// One concept per listed cell, with `{k}` in `code` replaced by it.
    /// Empty: one concept with `code` as written.
    #[serde(default)]
    pub cells: Vec<usize>,
    #[serde(default)]
    pub actuator: Option<String>,
}

impl BootstrapSpec {
    /// Onset detectors: match when the cell's rise exceeds `threshold`.
    pub fn onset_detectors(cells: Vec<usize>, threshold: i64, actuator: Option<&str>) -> Self {
        BootstrapSpec {
            channel: VISUAL_ON.into(),
            code: format!("LOAD 0 {{k}}\nPUSH {threshold}\nCMP\nJLT 3\nLOAD 0 {{k}}\nEMIT\nMATCH\nFAIL"),
            cells,
            actuator: actuator.map(str::to_string),
        }
    }

    /// Assembly source for each concept this entry expands to.
    pub fn sources(&self) -> Vec<String> {
        if self.cells.is_empty() {
            return vec![self.code.clone()];
        }
        self.cells
            .iter()
            .map(|k| self.code.replace("{k}", &k.to_string()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig3Section {
    pub warmup_s: f64,
    pub stimulus_ms: u64,
    pub break_ms: u64,
    pub repetitions: u32,
    pub bin_ms: u64,
    pub magnitude: i64,
    /// Half-open cell range `[from, to)` the stimulus covers.
    pub cells: [usize; 2],
}

impl Default for Fig3Section {
    fn default() -> Self {
        Fig3Section {
            warmup_s: 50.0,
            stimulus_ms: 100,
            break_ms: 2000,
            repetitions: 30,
            bin_ms: 10,
            magnitude: 200,
            cells: [0, 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub session: SessionSection,
    pub vm: VmSection,
    pub hierarchy: HierarchySection,
    pub reward: RewardSection,
    pub learning: LearningSection,
    pub actuator: ActuatorSection,
    pub world: WorldSection,
    pub bootstrap: Vec<BootstrapSpec>,
    pub fig3: Fig3Section,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            session: SessionSection::default(),
            vm: VmSection::default(),
            hierarchy: HierarchySection::default(),
            reward: RewardSection::default(),
            learning: LearningSection::default(),
            actuator: ActuatorSection::default(),
            world: WorldSection::default(),
            bootstrap: vec![BootstrapSpec::onset_detectors((0..8).collect(), 30, None)],
            fig3: Fig3Section::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Setup used for the stimulus-response experiment: onset detectors on
    /// the stimulated cells carry copies of the feedback actuator, the cells
    /// its echo lands on carry copies of the no-feedback one, and random
    /// growth and exploration are off so the loop is the only path from
    /// actuation back to sensation.
    pub fn fig3_default(delay_ms: u64) -> Self {
        let mut cfg = RunConfig::default();
        cfg.session.grow_every_ms = 0;
        cfg.session.explore_every_ms = 0;
        if let Some(f) = cfg.world.actuators[0].feedback.as_mut() {
            f.delay_ms = delay_ms;
        }
        cfg.bootstrap = vec![
            BootstrapSpec::onset_detectors(vec![0, 1, 2, 3], 100, Some("arm")),
            BootstrapSpec::onset_detectors(vec![4, 5, 6, 7], 100, Some("wave")),
        ];
        cfg.session.duration_s = cfg.fig3.warmup_s
            + cfg.fig3.repetitions as f64 * (cfg.fig3.stimulus_ms + cfg.fig3.break_ms) as f64 / 1000.0;
        cfg
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.session;
        if !(s.duration_s >= 0.0 && s.duration_s.is_finite()) {
            return invalid("session.duration_s must be a non-negative number");
        }
        if s.sample_ms == 0 {
            return invalid("session.sample_ms must be positive");
        }
        self.engine_params()?.check().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.world_params()?.check().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let mut names: Vec<&str> = self.world.actuators.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return invalid("actuator names must be unique");
        }
        for a in &self.world.actuators {
            if a.name.is_empty() || a.name.contains(char::is_whitespace) {
                return invalid(format!("actuator name `{}` must be non-empty without whitespace", a.name));
            }
            if !(a.cost_base >= 0.0 && a.cost_per_unit >= 0.0) || a.cost_base + a.cost_per_unit <= 0.0 {
                return invalid(format!("actuator `{}` needs a positive cost", a.name));
            }
        }
        for b in &self.bootstrap {
            if b.channel != VISUAL && b.channel != VISUAL_ON {
                return invalid(format!("bootstrap channel `{}` does not exist", b.channel));
            }
            for src in b.sources() {
                crate::vm::parse_codelet(&src).map_err(|e| ConfigError::Invalid(format!("bootstrap code: {e}")))?;
            }
            if let Some(a) = &b.actuator {
                if !self.world.actuators.iter().any(|x| &x.name == a) {
                    return invalid(format!("bootstrap actuator `{a}` does not exist"));
                }
            }
        }
        self.schedule()?;
        Ok(())
    }

    pub fn engine_params(&self) -> Result<EngineParams<f64>, ConfigError> {
        let h = &self.hierarchy;
        let generation = (self.session.grow_every_ms > 0).then(|| GenParams {
            seed: self.session.seed.wrapping_add(1),
            min_len: self.vm.min_len,
            max_len: self.vm.max_len,
            min_arity: self.vm.min_arity,
            max_arity: self.vm.max_arity,
            max_index: self.vm.max_index,
            imm_range: self.vm.imm_range,
            ..GenParams::default()
        });
        let a = &self.actuator;
        Ok(EngineParams {
            queue_capacity: h.queue_capacity,
            ttl_ms: h.ttl_ms,
            base_resources: h.base_resources,
            max_priority: h.max_priority,
            grace_ms: h.grace_ms,
            usage_threshold: h.usage_threshold,
            value_threshold: h.value_threshold,
            coexist_ms: h.coexist_ms,
            steps_per_ms: h.steps_per_ms,
            stats_window: (h.stats_window > 0).then_some(h.stats_window),
            workers: self.session.workers,
            seed: self.session.seed,
            reward: RewardParams {
                beta: self.reward.beta,
                rho: self.reward.rho,
            },
            learn: LearnParams {
                alpha: self.learning.alpha,
                gamma: self.learning.gamma,
                q0: self.learning.q0,
            },
            actuator: ActuatorParams {
                alpha: a.alpha,
                theta: a.theta,
                a_const: a.a_const,
                a0: a.a0,
                settle_ms: a.settle_ms,
                n_max: (a.n_max > 0).then_some(a.n_max),
            },
            generation,
            max_regular: h.max_regular,
        })
    }

    pub fn world_params(&self) -> Result<WorldParams, ConfigError> {
        let w = &self.world;
        let actuators = w
            .actuators
            .iter()
            .map(|a| {
                let feedback = match &a.feedback {
                    None => None,
                    Some(f) if f.cells[0] < f.cells[1] => Some(FeedbackRule {
                        delay_ms: f.delay_ms,
                        magnitude: f.magnitude,
                        duration_ms: f.duration_ms,
                        cells: f.cells[0]..f.cells[1],
                    }),
                    Some(_) => return invalid(format!("actuator `{}` has an empty feedback cell range", a.name)),
                };
                Ok(WorldActuator {
                    name: a.name.clone(),
                    feedback,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(WorldParams {
            width: w.width,
            frame_ms: w.frame_ms,
            seed: self.session.seed.wrapping_add(2),
            blob_rate: w.blob_rate,
            blob_max: w.blob_max,
            actuators,
        })
    }

    pub fn schedule(&self) -> Result<StimulusSchedule, ConfigError> {
        let f = &self.fig3;
        if !(f.warmup_s > 0.0 && f.warmup_s.is_finite()) {
            return invalid("fig3.warmup_s must be positive");
        }
        if f.stimulus_ms == 0 || f.break_ms == 0 || f.bin_ms == 0 {
            return invalid("fig3 durations must be positive");
        }
        if f.repetitions == 0 {
            return invalid("fig3.repetitions must be at least 1");
        }
        if f.cells[0] >= f.cells[1] || f.cells[1] > self.world.width {
            return invalid("fig3.cells must be a non-empty range inside the visual field");
        }
        Ok(StimulusSchedule {
            warmup_ms: (f.warmup_s * 1000.0).round() as u64,
            stimulus_ms: f.stimulus_ms,
            break_ms: f.break_ms,
            repetitions: f.repetitions,
            bin_ms: f.bin_ms,
            magnitude: f.magnitude,
            cells: f.cells[0]..f.cells[1],
        })
    }
}

/// When and how the visual field is disturbed in the stimulus-response
/// experiment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StimulusSchedule {
    pub warmup_ms: u64,
    pub stimulus_ms: u64,
    pub break_ms: u64,
    pub repetitions: u32,
    pub bin_ms: u64,
    pub magnitude: i64,
    pub cells: std::ops::Range<usize>,
}

impl StimulusSchedule {
    pub fn period_ms(&self) -> u64 {
        self.stimulus_ms + self.break_ms
    }

    pub fn onsets(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.repetitions as u64).map(move |i| self.warmup_ms + i * self.period_ms())
    }

    pub fn total_ms(&self) -> u64 {
        self.warmup_ms + self.repetitions as u64 * self.period_ms()
    }

    pub fn bins(&self) -> usize {
        (self.period_ms() / self.bin_ms) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        RunConfig::fig3_default(300).validate().unwrap();
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = RunConfig::from_toml("[session]\nseed = 3\n[reward]\nrho = 2.0\n").unwrap();
        assert_eq!(cfg.session.seed, 3);
        assert_eq!(cfg.reward.rho, 2.0);
        assert_eq!(cfg.reward.beta, 100.0);
    }

    #[test]
    fn bad_values_are_rejected() {
        for text in [
            "[fig3]\nrepetitions = 0\n",
            "[learning]\ngamma = 1.5\n",
            "[reward]\nbeta = 0.0\n",
            "[session]\nsample_ms = 0\n",
            "[hierarchy]\nqueue_capacity = 0\n",
            "[[bootstrap]]\nchannel = \"smell\"\ncode = \"LOAD 0 0\\nEMIT\\nMATCH\"\n",
            "[[bootstrap]]\nchannel = \"visual\"\ncode = \"HOP\"\n",
        ] {
            assert!(
                matches!(RunConfig::from_toml(text), Err(ConfigError::Invalid(_))),
                "accepted: {text}"
            );
        }
        assert!(matches!(RunConfig::from_toml("[session]\nspeed = 1\n"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn schedule_geometry() {
        let s = RunConfig::default().schedule().unwrap();
        assert_eq!(s.bins(), 210);
        assert_eq!(s.onsets().take(2).collect::<Vec<_>>(), vec![50_000, 52_100]);
        assert_eq!(s.total_ms(), 50_000 + 30 * 2100);
    }

    #[test]
    fn onset_detector_expands_per_cell() {
        let b = BootstrapSpec::onset_detectors(vec![2, 5], 100, None);
        let src = b.sources();
        assert_eq!(src.len(), 2);
        assert!(src[1].starts_with("LOAD 0 5\nPUSH 100"));
    }
}
