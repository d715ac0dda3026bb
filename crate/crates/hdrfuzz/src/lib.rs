//! A headroom-guided greybox fuzzer for buffer-overrun detection.
//!
//! The engine runs as two cooperating workers. The *fuzzer* worker generates
//! offspring inputs by mutation and retains the ones that reach new coverage.
//! The *driver* worker re-executes a sampled subset of those inputs under a
//! shadow-memory runtime that measures "headroom": how close each buffer
//! write came to overrunning its buffer. Inputs that set a new headroom
//! minimum are fed back to the fuzzer, steering the search toward writes
//! that creep up on buffer boundaries until one crosses.
//!
//! The workers exchange inputs only through two bounded queues; neither
//! shares mutable state with the other.

pub mod campaign;
pub mod corpus;
pub mod coverage;
pub mod driver;
pub mod fuzzer;
pub mod harness;
pub mod mutation;
pub mod rng;
pub mod shadow;
pub mod targets;

use serde::{Deserialize, Serialize};

/// Identifies a program location inside a target: a basic block for coverage
/// tracing, an allocation site, or a buffer-write site (`store_idx`).
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct LocationId(pub u32);

impl std::fmt::Display for LocationId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A fault in the engine or harness itself, as opposed to a vulnerability in
/// the target under test. Engine errors abort the current run but are never
/// counted as findings.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("shadow memory capacity exhausted (requested {requested} granules, {free} free)")]
    ShadowCapacity { requested: usize, free: usize },
    #[error("double free of buffer {id}")]
    DoubleFree { id: u32 },
    #[error("unknown buffer handle {id}")]
    UnknownHandle { id: u32 },
    #[error("step budget exceeded ({budget} harness events)")]
    StepBudgetExceeded { budget: u64 },
    #[error("input length {len} exceeds configured maximum {max}")]
    InputTooLong { len: usize, max: usize },
}
