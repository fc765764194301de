use thiserror::Error;

use crate::engine::ProcessorId;
use crate::model::NeuronId;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("cannot map network onto {slaves} slaves: {reason}")]
    Mapping { slaves: usize, reason: String },
    #[error("input width {got} does not match {expected} input neurons")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("protocol error on processor {processor}: {reason}")]
    Protocol { processor: ProcessorId, reason: String },
    #[error("unknown neuron {neuron} on processor {processor}")]
    UnknownNeuron { processor: ProcessorId, neuron: NeuronId },
    #[error("cycle did not quiesce within the budget of {budget} deliveries")]
    TickBudgetExceeded { budget: u64 },
    #[error("invalid delivery policy: {0}")]
    InvalidPolicy(String),
}

#[derive(Debug, Error)]
pub enum LearningError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    NoPatterns,
    #[error("pattern {id} has shape {input}x{target}, network expects {n}x{m}")]
    PatternShape {
        id: usize,
        input: usize,
        target: usize,
        n: usize,
        m: usize,
    },
    #[error("success verdict with empty activation records")]
    EmptySuccess,
    #[error("learning-phase training given an operation-phase fault plan")]
    WrongPhase,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fault(#[from] FaultError),
}

#[derive(Debug, Error)]
pub enum FaultError {
    #[error("invalid fault plan: {0}")]
    InvalidPlan(String),
    #[error("{what}: {victims} victims requested from a population of {population}")]
    TooManyVictims {
        what: &'static str,
        victims: usize,
        population: usize,
    },
    #[error("unknown fault victim: {0}")]
    UnknownVictim(String),
    #[error("parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("global error needs at least one pattern")]
    Empty,
    #[error("histogram needs at least one bin")]
    NoBins,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error(transparent)]
    Fault(#[from] FaultError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}
