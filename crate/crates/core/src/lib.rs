//! Mixed-criticality fixed-priority scheduling with progress-aware LO-mode
//! budget extension.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: task model, taskset file format and validation.
//! - [`rta`]: offline AMC-rtb response-time analysis and Audsley priority
//!   assignment.
//! - [`online`]: the runtime budget-extension test and its bookkeeping.
//! - [`prediction`]: execution-time prediction from checkpoint progress.
//! - [`sim`]: discrete-event simulation of AMC and the progress-aware policy.
//! - [`taskgen`]: UUnifast taskset generation.
//! - [`cfg`]: loop detection and checkpoint placement on control-flow graphs.
//! - [`experiment`]: paired sweeps and the iteration-bound study.

pub mod cfg;
pub mod experiment;
pub mod model;
pub mod online;
pub mod prediction;
pub mod rta;
pub mod seed;
pub mod sim;
pub mod taskgen;

pub use model::{Criticality, Task, TaskId, Taskset, Time};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("task {0} is not high-criticality")]
    NotHighCriticality(TaskId),
    #[error("invalid taskset: {0}")]
    InvalidTaskset(String),
    #[error("no feasible priority assignment: no task fits priority level {level}")]
    Infeasible { level: u32 },
    #[error("taskset is not schedulable (first failing task {0})")]
    Unschedulable(TaskId),
    #[error("task {0} has no checkpoint profile")]
    MissingCheckpointProfile(TaskId),
    #[error("memory-based prediction needs a memory profile and a positive access count")]
    MissingMemoryData,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("task {0} could not be generated without rounding a budget to zero")]
    DegenerateTask(usize),
    #[error("gave up after {attempts} attempts ({accepted} accepted)")]
    ExhaustedRetries { attempts: usize, accepted: usize },
    #[error("graph parse error: {0}")]
    Parse(String),
    #[error("block {0} is unreachable from the entry block")]
    UnreachableBlock(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}
