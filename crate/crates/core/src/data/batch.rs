use rand::Rng;

use crate::error::Result;
use crate::scheduler::{next_example, Draw, ScheduleState, TaskQueue};

/// Examples drawn in scheduler order; tasks may be mixed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MiniBatch {
    pub draws: Vec<Draw>,
    pub words: usize,
}

impl MiniBatch {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

/// Assembles word-limited batches from the scheduler stream. The draw that
/// overflows a batch is held back and opens the next one, so batches
/// partition the stream without reordering it.
#[derive(Clone, Debug)]
pub struct MiniBatcher {
    pub limit: usize,
    pending: Option<Draw>,
}

impl MiniBatcher {
    pub fn new(limit: usize) -> Self {
        MiniBatcher {
            limit,
            pending: None,
        }
    }

    pub fn next_batch<R: Rng + ?Sized>(
        &mut self,
        queues: &mut [TaskQueue],
        state: &mut ScheduleState,
        rng: &mut R,
    ) -> Result<MiniBatch> {
        let mut batch = MiniBatch::default();
        loop {
            let draw = match self.pending.take() {
                Some(d) => d,
                None => next_example(queues, state, rng)?,
            };
            let size = draw.example.words();
            if !batch.is_empty() && batch.words + size > self.limit {
                self.pending = Some(draw);
                return Ok(batch);
            }
            batch.words += size;
            batch.draws.push(draw);
            if batch.words >= self.limit {
                return Ok(batch);
            }
        }
    }
}

pub fn build_minibatch<R: Rng + ?Sized>(
    batcher: &mut MiniBatcher,
    queues: &mut [TaskQueue],
    state: &mut ScheduleState,
    rng: &mut R,
) -> Result<MiniBatch> {
    batcher.next_batch(queues, state, rng)
}
