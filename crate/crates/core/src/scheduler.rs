//! Time-varying task sampling.
//!
//! Each task owns a queue of training examples. Before every draw the
//! schedule turns the epoch clock `t` into a probability for the focus
//! queue; the remaining mass is split evenly across the other queues, and a
//! multinomial draw picks the queue that supplies the next example.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::{TaskId, TrainingExample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Constant,
    Exponential,
    Sigmoid,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::Exponential => "exponential",
            ScheduleKind::Sigmoid => "sigmoid",
        }
    }

    /// Focus-queue probability at epoch fraction `t`.
    pub fn probability(self, slope: f64, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Config(format!("epoch clock must be >= 0, got {t}")));
        }
        let invalid = || Error::InvalidSlope {
            kind: self.name(),
            slope,
        };
        match self {
            ScheduleKind::Constant => {
                if (0.0..=1.0).contains(&slope) {
                    Ok(slope)
                } else {
                    Err(invalid())
                }
            }
            ScheduleKind::Exponential | ScheduleKind::Sigmoid if !(slope >= 0.0 && slope.is_finite()) => {
                Err(invalid())
            }
            ScheduleKind::Exponential => Ok(1.0 - (-slope * t).exp()),
            ScheduleKind::Sigmoid => Ok(1.0 / (1.0 + (-slope * t).exp())),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(ScheduleKind::Constant),
            "exponential" | "exp" => Ok(ScheduleKind::Exponential),
            "sigmoid" | "sig" => Ok(ScheduleKind::Sigmoid),
            other => Err(Error::Config(format!("unknown schedule `{other}`"))),
        }
    }
}

/// Schedule parameters plus the epoch clock, measured in draws over the
/// size of the focus task's corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleState {
    pub kind: ScheduleKind,
    pub slope: f64,
    pub focus: usize,
    pub queues: usize,
    focus_corpus: usize,
    draws: u64,
    t: f64,
}

impl ScheduleState {
    pub fn new(
        kind: ScheduleKind,
        slope: f64,
        focus: usize,
        queues: usize,
        focus_corpus: usize,
    ) -> Result<Self> {
        if queues == 0 {
            return Err(Error::EmptyInput("task queues"));
        }
        if focus >= queues {
            return Err(Error::OutOfRange {
                what: "focus queue",
                id: focus,
                limit: queues,
            });
        }
        if focus_corpus == 0 {
            return Err(Error::EmptyInput("focus corpus"));
        }
        kind.probability(slope, 0.0)?;
        Ok(ScheduleState {
            kind,
            slope,
            focus,
            queues,
            focus_corpus,
            draws: 0,
            t: 0.0,
        })
    }

    /// A state frozen at epoch fraction `t`, for inspecting the schedule.
    pub fn at(kind: ScheduleKind, slope: f64, focus: usize, queues: usize, t: f64) -> Result<Self> {
        let mut s = Self::new(kind, slope, focus, queues, 1)?;
        s.t = t;
        Ok(s)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn advance(&mut self) {
        self.draws += 1;
        self.t = self.draws as f64 / self.focus_corpus as f64;
    }

    pub fn focus_probability(&self) -> Result<f64> {
        self.kind.probability(self.slope, self.t)
    }

    pub fn distribution(&self) -> Result<Vec<f64>> {
        Ok(queue_distribution(self.focus_probability()?, self.focus, self.queues))
    }
}

pub fn focus_probability(state: &ScheduleState) -> Result<f64> {
    state.focus_probability()
}

/// Focus queue gets `p`, every other queue `(1 - p) / (K - 1)`.
pub fn queue_distribution(p: f64, focus: usize, queues: usize) -> Vec<f64> {
    if queues == 1 {
        return vec![1.0];
    }
    let rest = (1.0 - p) / (queues - 1) as f64;
    (0..queues)
        .map(|q| if q == focus { p } else { rest })
        .collect()
}

pub fn sample_queue<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> Result<usize> {
    if dist.is_empty() {
        return Err(Error::MalformedDistribution("empty".into()));
    }
    if dist.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::MalformedDistribution(format!("{dist:?}")));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::MalformedDistribution(format!("sums to {total}")));
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(dist.iter().rposition(|&p| p > 0.0).unwrap())
}

/// Examples of one task, served in a shuffled order that is renewed each
/// time the queue runs out.
#[derive(Clone, Debug)]
pub struct TaskQueue {
    pub task: TaskId,
    examples: Vec<TrainingExample>,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl TaskQueue {
    pub fn new(task: TaskId, examples: Vec<TrainingExample>, seed: u64, shuffle_first: bool) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyInput("task queue"));
        }
        let mut q = TaskQueue {
            task,
            order: (0..examples.len()).collect(),
            examples,
            cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        if shuffle_first {
            q.order.shuffle(&mut q.rng);
        }
        Ok(q)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn next_example(&mut self) -> &TrainingExample {
        let idx = self.order[self.cursor];
        self.cursor += 1;
        if self.cursor == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        &self.examples[idx]
    }
}

/// A scheduled draw: the queue it came from and the clock right after it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub queue: usize,
    pub t: f64,
    pub example: TrainingExample,
}

pub fn next_example<R: Rng + ?Sized>(
    queues: &mut [TaskQueue],
    state: &mut ScheduleState,
    rng: &mut R,
) -> Result<Draw> {
    if queues.is_empty() {
        return Err(Error::EmptyInput("task queues"));
    }
    if queues.len() != state.queues {
        return Err(Error::OutOfRange {
            what: "queue count",
            id: queues.len(),
            limit: state.queues,
        });
    }
    let q = sample_queue(&state.distribution()?, rng)?;
    let example = queues[q].next_example().clone();
    state.advance();
    Ok(Draw {
        queue: q,
        t: state.t(),
        example,
    })
}
