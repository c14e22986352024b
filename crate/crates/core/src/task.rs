use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// What a task's target side contains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Target-language subwords.
    Translation,
    /// One part-of-speech tag per word.
    Pos,
    /// One head-distance token per word.
    Parse,
    /// One dependency label per word.
    Labels,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::Translation,
        TaskKind::Pos,
        TaskKind::Parse,
        TaskKind::Labels,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Translation => "translation",
            TaskKind::Pos => "pos",
            TaskKind::Parse => "parse",
            TaskKind::Labels => "labels",
        }
    }

    /// Whether the target vocabulary of this task is closed: a target token
    /// that is missing from the vocabulary is an error instead of UNK.
    pub fn closed_vocabulary(self) -> bool {
        matches!(self, TaskKind::Parse)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownTask(s.to_string()))
    }
}

/// Index of a task in the configured task list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskId(pub usize);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub name: String,
    pub kind: TaskKind,
}

impl Task {
    pub fn new(kind: TaskKind) -> Self {
        Task {
            name: kind.name().to_string(),
            kind,
        }
    }

    pub fn named(name: impl Into<String>, kind: TaskKind) -> Self {
        Task {
            name: name.into(),
            kind,
        }
    }

    /// The reserved vocabulary symbol that primes the decoder for this task.
    pub fn token(&self) -> String {
        format!("<task:{}>", self.name)
    }
}

/// One training pair, already mapped to vocabulary ids. The end-of-sequence
/// marker is not part of `target`; the model appends it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub task: TaskId,
    pub source: Vec<u32>,
    pub target: Vec<u32>,
}

impl TrainingExample {
    /// Size used by the word-limited batcher.
    pub fn words(&self) -> usize {
        self.source.len() + self.target.len()
    }
}

pub fn find_task(tasks: &[Task], name: &str) -> Result<TaskId, Error> {
    tasks
        .iter()
        .position(|t| t.name == name)
        .map(TaskId)
        .ok_or_else(|| Error::UnknownTask(name.to_string()))
}
