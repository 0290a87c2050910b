//! Task lifecycle, the status-conditioned dispatch map and the layered
//! execution loop.

mod events;
mod run;
mod task;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workspace::FileUnit;

pub use events::{Event, EventSink, MemorySink, NullSink, StderrSink};
pub use run::{run, run_layer, status_sync_action, RunConfig, RunError, RunResult, DEFAULT_ATTEMPT_CAP, DEFAULT_T_MAX};
pub use task::*;

/// What a task gets this layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "dispatch", rename_all = "snake_case")]
pub enum Dispatch {
    Worker { task: TaskId, owner: String },
    Verifier { task: TaskId },
}

impl Dispatch {
    pub fn task(&self) -> &TaskId {
        match self {
            Dispatch::Worker { task, .. } | Dispatch::Verifier { task } => task,
        }
    }

    /// Transcript role key.
    pub fn kind(&self) -> &'static str {
        match self {
            Dispatch::Worker { .. } => "worker",
            Dispatch::Verifier { .. } => "critic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("task {task} is DONE but has no implementation in the workspace")]
pub struct InternalInconsistency {
    pub task: TaskId,
}

/// The dispatch map: TODO and ERROR go to a worker, DONE to a verifier with
/// the implementation, VERIFIED to nobody.
pub fn phi(task: &Task, implementation: Option<&FileUnit>) -> Result<Option<Dispatch>, InternalInconsistency> {
    Ok(match task.status {
        TaskStatus::Todo | TaskStatus::Error => {
            Some(Dispatch::Worker { task: task.id.clone(), owner: task.owner.clone() })
        }
        TaskStatus::Done => {
            if implementation.is_none() {
                return Err(InternalInconsistency { task: task.id.clone() });
            }
            Some(Dispatch::Verifier { task: task.id.clone() })
        }
        TaskStatus::Verified => None,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub dispatches: Vec<Dispatch>,
    /// Tasks held back because their worker attempts are used up.
    pub capped: Vec<TaskId>,
}

impl LayerPlan {
    pub fn is_empty(&self) -> bool {
        self.dispatches.is_empty()
    }
}

/// `phi` over every task, in task-id order. Workers whose task already used
/// `attempt_cap` attempts are left out.
pub fn plan_layer(
    tasks: &[Task],
    implementation: impl Fn(&str) -> Option<FileUnit>,
    attempt_cap: u32,
) -> Result<LayerPlan, InternalInconsistency> {
    let mut sorted: Vec<&Task> = tasks.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut plan = LayerPlan::default();
    for t in sorted {
        let unit = implementation(&t.file_path);
        match phi(t, unit.as_ref())? {
            Some(Dispatch::Worker { .. }) if t.attempts >= attempt_cap => plan.capped.push(t.id.clone()),
            Some(d) => plan.dispatches.push(d),
            None => {}
        }
    }
    Ok(plan)
}

/// Layer execution strategy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    /// All dispatches of a layer run concurrently.
    #[default]
    Parallel,
    /// One dispatch at a time, in plan order.
    Sequential,
    /// Parallel, but agents see the intent and file list instead of the contract.
    NoContract,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Parallel => "PARALLEL",
            Mode::Sequential => "SEQUENTIAL",
            Mode::NoContract => "NO_CONTRACT",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown mode `{0}` (expected PARALLEL, SEQUENTIAL or NO_CONTRACT)")]
pub struct UnknownMode(pub String);

impl FromStr for Mode {
    type Err = UnknownMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "PARALLEL" => Ok(Mode::Parallel),
            "SEQUENTIAL" => Ok(Mode::Sequential),
            "NO_CONTRACT" => Ok(Mode::NoContract),
            _ => Err(UnknownMode(s.to_string())),
        }
    }
}
