use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lifecycle status of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TaskStatus {
    Todo,
    Done,
    Error,
    Verified,
}

impl TaskStatus {
    pub const ALL: [TaskStatus; 4] = [TaskStatus::Todo, TaskStatus::Done, TaskStatus::Error, TaskStatus::Verified];

    /// TODO→DONE, DONE→VERIFIED, DONE→ERROR, ERROR→DONE. VERIFIED is terminal.
    pub fn can_become(self, next: TaskStatus) -> bool {
        use TaskStatus::*;
        matches!((self, next), (Todo, Done) | (Done, Verified) | (Done, Error) | (Error, Done))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskStatus::Todo => "TODO",
            TaskStatus::Done => "DONE",
            TaskStatus::Error => "ERROR",
            TaskStatus::Verified => "VERIFIED",
        }
    }
}

impl fmt::Display for TaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown task status `{0}`")]
pub struct UnknownStatus(pub String);

impl FromStr for TaskStatus {
    type Err = UnknownStatus;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let word: String = s.trim().chars().take_while(|c| c.is_alphabetic()).collect();
        match word.to_ascii_uppercase().as_str() {
            "TODO" => Ok(TaskStatus::Todo),
            "DONE" => Ok(TaskStatus::Done),
            "ERROR" => Ok(TaskStatus::Error),
            "VERIFIED" => Ok(TaskStatus::Verified),
            _ => Err(UnknownStatus(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("illegal transition {from} -> {to} for task {task}")]
pub struct IllegalTransition {
    pub task: String,
    pub from: TaskStatus,
    pub to: TaskStatus,
}

/// Task ids are the normalized file paths of the contract entries.
pub type TaskId = String;

/// An atomic unit of work: one contracted file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub file_path: String,
    pub owner: String,
    pub status: TaskStatus,
    pub attempts: u32,
    pub feedback: Vec<String>,
}

impl Task {
    pub fn new(file_path: impl Into<String>, owner: impl Into<String>, status: TaskStatus) -> Self {
        let file_path = file_path.into();
        Self { id: file_path.clone(), file_path, owner: owner.into(), status, attempts: 0, feedback: Vec::new() }
    }

    pub fn transition(&mut self, to: TaskStatus) -> Result<(), IllegalTransition> {
        if !self.status.can_become(to) {
            return Err(IllegalTransition { task: self.id.clone(), from: self.status, to });
        }
        self.status = to;
        Ok(())
    }

    pub fn note(&mut self, text: impl Into<String>) {
        let text = text.into();
        if self.feedback.last() != Some(&text) {
            self.feedback.push(text);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legal_relation() {
        use TaskStatus::*;
        let legal: Vec<_> = TaskStatus::ALL
            .iter()
            .flat_map(|a| TaskStatus::ALL.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| a.can_become(*b))
            .collect();
        assert_eq!(legal, vec![(Todo, Done), (Done, Error), (Done, Verified), (Error, Done)]);
    }

    #[test]
    fn verified_is_absorbing() {
        let mut t = Task::new("a.py", "Dev", TaskStatus::Verified);
        for s in TaskStatus::ALL {
            assert!(t.transition(s).is_err());
        }
    }

    #[test]
    fn parse_status() {
        assert_eq!("done".parse::<TaskStatus>().unwrap(), TaskStatus::Done);
        assert_eq!("Todo(T)".parse::<TaskStatus>().unwrap(), TaskStatus::Todo);
        assert!("finished".parse::<TaskStatus>().is_err());
    }
}
