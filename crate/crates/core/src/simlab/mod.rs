//! Simulated world, session runner and the stimulus-response experiment.

pub mod config;
pub mod fig3;
pub mod fuzz;
pub mod session;
pub mod trend;
pub mod world;

pub use config::{BootstrapSpec, ConfigError, RunConfig, StimulusSchedule};
pub use fig3::{fig3_experiment, Fig3Result, ResponseCurve};
pub use fuzz::{fuzz_vm, FuzzReport};
pub use session::{
    actuations_csv, emit_metrics, metrics_csv, parse_metrics, quantize, run_session, MetricsLog, Sample, Session,
    SessionError,
};
pub use trend::{mann_kendall, MannKendall};
pub use world::{FeedbackRule, Overlay, SimWorld, WorldActuator, WorldError, WorldEvent, WorldParams};
