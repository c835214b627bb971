//! Concept hierarchy: the DAG of codelet concepts, its scheduler and the
//! engine that runs threads through it.

pub mod engine;
pub mod graph;
pub mod queue;
pub mod snapshot;

pub use engine::{
    ActuationCommand, ActuationEvent, ActuationEventKind, Engine, EngineCounters, EngineError, EngineParams,
    ExecutionReport,
};
pub use graph::{
    Action, ActuatorTemplate, AuditError, Concept, ConceptGraph, ConceptKind, HierarchyError, NewConcept,
};
pub use queue::{EnqueueOutcome, SchedulerQueue, ThreadTicket};
pub use snapshot::{read_snapshot, write_snapshot, SnapshotError};
