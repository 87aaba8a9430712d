use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Stall;
use crate::traffic::MemoryRequest;

/// A buffer between the request sources and the memory controller.
pub trait ReorderStage {
    fn try_insert(&mut self, req: &MemoryRequest) -> Result<(), Stall>;
    fn peek(&self) -> Option<&MemoryRequest>;
    fn forward(&mut self) -> Option<MemoryRequest>;
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Whatever sits after the stage. `offer` returning true means the request
/// was taken; false is backpressure and the stage keeps it.
pub trait Downstream {
    fn offer(&mut self, req: &MemoryRequest) -> bool;
}

impl<F: FnMut(&MemoryRequest) -> bool> Downstream for F {
    fn offer(&mut self, req: &MemoryRequest) -> bool {
        self(req)
    }
}

/// Accepts everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct Unlimited;

impl Downstream for Unlimited {
    fn offer(&mut self, _: &MemoryRequest) -> bool {
        true
    }
}

/// Accepts nothing.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoCredit;

impl Downstream for NoCredit {
    fn offer(&mut self, _: &MemoryRequest) -> bool {
        false
    }
}

/// Accepts each offer independently with probability `accept`.
#[derive(Debug, Clone)]
pub struct RandomCredits {
    rng: ChaCha8Rng,
    accept: f64,
}

impl RandomCredits {
    pub fn new(seed: u64, accept: f64) -> Self {
        RandomCredits { rng: ChaCha8Rng::seed_from_u64(seed), accept }
    }
}

impl Downstream for RandomCredits {
    fn offer(&mut self, _: &MemoryRequest) -> bool {
        self.rng.gen_bool(self.accept)
    }
}

/// Per-tick insert and forward budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rates {
    pub insert: u32,
    pub forward: u32,
}

impl Default for Rates {
    fn default() -> Self {
        Rates { insert: 1, forward: 1 }
    }
}

/// The no-reordering baseline: a plain FIFO.
#[derive(Debug, Clone)]
pub struct Passthrough {
    fifo: VecDeque<MemoryRequest>,
    capacity: usize,
}

impl Passthrough {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "passthrough needs at least one entry");
        Passthrough { fifo: VecDeque::with_capacity(capacity), capacity }
    }
}

impl Default for Passthrough {
    fn default() -> Self {
        Passthrough::new(1)
    }
}

impl ReorderStage for Passthrough {
    fn try_insert(&mut self, req: &MemoryRequest) -> Result<(), Stall> {
        if self.fifo.len() >= self.capacity {
            return Err(Stall::QueueFull);
        }
        self.fifo.push_back(*req);
        Ok(())
    }

    fn peek(&self) -> Option<&MemoryRequest> {
        self.fifo.front()
    }

    fn forward(&mut self) -> Option<MemoryRequest> {
        self.fifo.pop_front()
    }

    fn len(&self) -> usize {
        self.fifo.len()
    }
}

/// Drives a pre-generated input stream into a stage one tick at a time.
#[derive(Debug, Clone)]
pub struct Feeder<'a> {
    input: &'a [MemoryRequest],
    next: usize,
}

impl<'a> Feeder<'a> {
    pub fn new(input: &'a [MemoryRequest]) -> Self {
        Feeder { input, next: 0 }
    }

    /// Requests the stage has accepted so far.
    pub fn accepted(&self) -> usize {
        self.next
    }

    pub fn exhausted(&self) -> bool {
        self.next == self.input.len()
    }

    /// One tick: up to `rates.insert` inserts (a stall blocks the input
    /// head for the rest of the tick), then up to `rates.forward` forwards,
    /// each gated by `downstream`. Returns the number forwarded.
    pub fn tick<S, D>(&mut self, stage: &mut S, downstream: &mut D, rates: Rates) -> u32
    where
        S: ReorderStage + ?Sized,
        D: Downstream + ?Sized,
    {
        for _ in 0..rates.insert {
            let Some(req) = self.input.get(self.next) else { break };
            if stage.try_insert(req).is_err() {
                break;
            }
            self.next += 1;
        }
        let mut sent = 0;
        while sent < rates.forward {
            let Some(req) = stage.peek() else { break };
            if !downstream.offer(req) {
                break;
            }
            stage.forward();
            sent += 1;
        }
        sent
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReorderRun {
    pub output: Vec<MemoryRequest>,
    pub accepted: usize,
    pub ticks: u64,
}

/// Run a stage standalone until the input is consumed and the stage is
/// empty, or `max_ticks` elapse.
pub fn run_reorder<S, D>(
    stage: &mut S,
    input: &[MemoryRequest],
    downstream: &mut D,
    rates: Rates,
    max_ticks: u64,
) -> ReorderRun
where
    S: ReorderStage + ?Sized,
    D: Downstream + ?Sized,
{
    let mut feeder = Feeder::new(input);
    let mut output = Vec::with_capacity(input.len());
    let mut ticks = 0;
    while ticks < max_ticks && !(feeder.exhausted() && stage.is_empty()) {
        let mut record = |r: &MemoryRequest| {
            let ok = downstream.offer(r);
            if ok {
                output.push(*r);
            }
            ok
        };
        feeder.tick(stage, &mut record, rates);
        ticks += 1;
    }
    ReorderRun { output, accepted: feeder.accepted(), ticks }
}

/// The baseline path with the same tick structure and credit gating as the
/// reorder stage: a one-entry FIFO, so output order equals input order.
pub fn baseline_passthrough<D: Downstream + ?Sized>(
    input: &[MemoryRequest],
    downstream: &mut D,
    rates: Rates,
    max_ticks: u64,
) -> ReorderRun {
    run_reorder(&mut Passthrough::default(), input, downstream, rates, max_ticks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addressing::PhysicalAddress;
    use crate::mars::{MarsConfig, MarsState};
    use crate::traffic::StreamKind;

    fn stream(pages: &[u64]) -> Vec<MemoryRequest> {
        pages
            .iter()
            .enumerate()
            .map(|(i, &p)| MemoryRequest {
                seq: i as u64,
                addr: PhysicalAddress(p << 12 | (i as u64 % 64) << 6),
                is_write: i % 3 == 0,
                stream_kind: StreamKind::Texture,
                source_id: (p % 8) as u32,
            })
            .collect()
    }

    fn mars(capacity: usize) -> MarsState {
        MarsState::new(MarsConfig { capacity, ..MarsConfig::default() }).unwrap()
    }

    #[test]
    fn single_page_passes_in_order() {
        let input = stream(&[7; 40]);
        let run = run_reorder(&mut mars(512), &input, &mut Unlimited, Rates::default(), u64::MAX);
        assert_eq!(run.output, input);
    }

    #[test]
    fn zero_credit_fills_then_stalls() {
        let input = stream(&(0..100).collect::<Vec<_>>());
        let mut s = mars(32);
        let run = run_reorder(&mut s, &input, &mut NoCredit, Rates::default(), 1000);
        assert!(run.output.is_empty());
        assert_eq!(run.accepted, 32);
        assert_eq!(s.len(), 32);
        assert_eq!(run.ticks, 1000);
    }

    #[test]
    fn baseline_is_identity() {
        let input = stream(&[3, 1, 4, 1, 5, 9, 2, 6]);
        let run = baseline_passthrough(&input, &mut RandomCredits::new(4, 0.3), Rates::default(), u64::MAX);
        assert_eq!(run.output, input);
        assert!(run.output.windows(2).all(|w| w[0].seq < w[1].seq));
    }

    fn mean_run_length(reqs: &[MemoryRequest]) -> f64 {
        if reqs.is_empty() {
            return 0.0;
        }
        let runs = 1 + reqs.windows(2).filter(|w| w[0].page(12) != w[1].page(12)).count();
        reqs.len() as f64 / runs as f64
    }

    // Eight single-page streams merged round-robin give page runs of one;
    // with a 512-entry lookahead and a slow consumer the stage should emit
    // runs of at least eight.
    #[test]
    fn interleaved_streams_regain_runs() {
        let pages: Vec<u64> = (0..4096).map(|i| 100 + (i % 8) * 3 + (i / 512) * 64).collect();
        let input = stream(&pages);
        let mut tick = 0u64;
        let mut slow = |_: &MemoryRequest| {
            tick += 1;
            tick % 4 == 0
        };
        let run = run_reorder(&mut mars(512), &input, &mut slow, Rates::default(), u64::MAX);
        assert_eq!(run.output.len(), input.len());
        let before = mean_run_length(&input);
        let after = mean_run_length(&run.output);
        assert_eq!(before, 1.0);
        assert!(after >= 8.0 * before, "run length {after}");
    }

    #[test]
    fn forward_rate_limits_output() {
        let input = stream(&[1, 2, 3, 4, 5, 6, 7, 8, 9, 10]);
        let rates = Rates { insert: 4, forward: 2 };
        let run = run_reorder(&mut mars(16), &input, &mut Unlimited, rates, 2);
        assert_eq!(run.output.len(), 4);
        assert_eq!(run.accepted, 8);
    }

    // Once page 1 starts draining, the next request to it blocks the input
    // head until the entry retires.
    #[test]
    fn draining_page_blocks_input_head() {
        let input = stream(&[1; 10]);
        let rates = Rates { insert: 4, forward: 2 };
        let run = run_reorder(&mut mars(16), &input, &mut Unlimited, rates, 2);
        assert_eq!(run.accepted, 4);
        assert_eq!(run.output.len(), 4);
        let run = run_reorder(&mut mars(16), &input, &mut Unlimited, rates, 100);
        assert_eq!(run.output, input);
    }
}
