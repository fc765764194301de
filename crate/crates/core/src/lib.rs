//! Discrete-event simulation of a distributed three-layer threshold network
//! with message-driven learning, stuck-at-0 fault injection and experiment
//! tooling.

pub mod engine;
pub mod error;
pub mod faults;
pub mod harness;
pub mod learning;
pub mod metrics;
pub mod model;
pub mod persist;

pub use error::{EngineError, FaultError, HarnessError, LearningError, MetricsError, ModelError};
