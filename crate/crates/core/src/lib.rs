//! Codelet concept hierarchy with information-based reward.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`. Codelet programs themselves are
//! integer-only.

pub mod actuator;
pub mod hierarchy;
pub mod ids;
pub mod learning;
pub mod reward;
mod scalar;
pub mod simlab;
pub mod vm;

pub use ids::{ConceptId, Millis, TemplateId};
pub use scalar::Scalar;

pub type Engine = hierarchy::Engine<f64>;
pub type EngineParams = hierarchy::EngineParams<f64>;
pub type ConceptGraph = hierarchy::ConceptGraph<f64>;
pub type GlobalReward = reward::GlobalReward<f64>;
pub type ActuatorCopy = actuator::ActuatorCopy<f64>;
