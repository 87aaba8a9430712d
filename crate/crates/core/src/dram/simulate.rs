use super::{DramCommand, DramConfig, DramError, MemorySystem};
use crate::addressing::MemoryMap;
use crate::mars::{Downstream, Feeder, Rates, ReorderStage};
use crate::metrics::{ChannelMetrics, RunMetrics};
use crate::traffic::MemoryRequest;

/// Give up if nothing moves for this many cycles.
const STUCK_LIMIT: u64 = 1 << 20;

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trace: Vec<DramCommand>,
    pub metrics: RunMetrics,
}

/// Co-simulate `stage` feeding the memory system, one memory-clock tick at
/// a time: the stage inserts and forwards (forwarding gated by pending-queue
/// room), then every channel may issue one command. Runs until every
/// request has been issued; `total_cycles` is when the last burst finishes.
pub fn simulate<S: ReorderStage + ?Sized>(
    cfg: &DramConfig,
    map: &MemoryMap,
    stage: &mut S,
    rates: Rates,
    input: &[MemoryRequest],
    record_trace: bool,
) -> Result<SimOutput, DramError> {
    simulate_observed(cfg, map, stage, rates, input, record_trace, |_| {})
}

struct Observed<'a, F> {
    sys: &'a mut MemorySystem,
    observe: F,
}

impl<F: FnMut(&MemoryRequest)> Downstream for Observed<'_, F> {
    fn offer(&mut self, req: &MemoryRequest) -> bool {
        let ok = self.sys.offer(req);
        if ok {
            (self.observe)(req);
        }
        ok
    }
}

/// [`simulate`], calling `observe` on each request as the memory system
/// accepts it (the stage's output order).
pub fn simulate_observed<S: ReorderStage + ?Sized>(
    cfg: &DramConfig,
    map: &MemoryMap,
    stage: &mut S,
    rates: Rates,
    input: &[MemoryRequest],
    record_trace: bool,
    observe: impl FnMut(&MemoryRequest),
) -> Result<SimOutput, DramError> {
    let mut sys = MemorySystem::new(cfg, map)?.with_trace(record_trace);
    let mut feeder = Feeder::new(input);
    let mut idle = 0u64;
    let mut observe = observe;
    while !(feeder.exhausted() && stage.is_empty() && sys.is_idle()) {
        let before = feeder.accepted();
        let sent = feeder.tick(stage, &mut Observed { sys: &mut sys, observe: &mut observe }, rates);
        let issued = sys.step();
        if sent == 0 && issued == 0 && feeder.accepted() == before {
            idle += 1;
            if idle > STUCK_LIMIT {
                return Err(DramError::Stuck(idle));
            }
        } else {
            idle = 0;
        }
    }

    let channels: Vec<ChannelMetrics> = sys
        .channels()
        .iter()
        .map(|c| ChannelMetrics {
            act_count: c.act_count,
            cas_count: c.cas_count,
            pre_count: c.pre_count,
            data_busy_cycles: c.data_busy_cycles,
        })
        .collect();
    let total_cycles = sys.channels().iter().map(|c| c.last_data_end).max().unwrap_or(0);
    let metrics = RunMetrics::from_channels(channels, total_cycles, cfg.bytes_per_cas());
    Ok(SimOutput { trace: sys.take_trace(), metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addressing::{encode, DramCoordinate};
    use crate::mars::Passthrough;
    use crate::traffic::StreamKind;

    fn bank0_rows(rows: &[u32]) -> Vec<MemoryRequest> {
        let map = MemoryMap::default();
        rows.iter()
            .enumerate()
            .map(|(i, &row)| MemoryRequest {
                seq: i as u64,
                addr: encode(&DramCoordinate { row, column: (i % 64) as u32, ..Default::default() }, 0, &map),
                is_write: false,
                stream_kind: StreamKind::Texture,
                source_id: 0,
            })
            .collect()
    }

    fn run(input: &[MemoryRequest], depth: usize) -> SimOutput {
        let cfg = DramConfig { pending_queue_depth: depth, ..DramConfig::default() };
        simulate(&cfg, &MemoryMap::default(), &mut Passthrough::default(), Rates::default(), input, true).unwrap()
    }

    #[test]
    fn zero_requests() {
        let out = run(&[], 16);
        assert!(out.trace.is_empty());
        assert_eq!(out.metrics.total_cycles, 0);
        assert_eq!(out.metrics.act_count, 0);
        assert_eq!(out.metrics.cas_per_act, None);
    }

    #[test]
    fn one_row_is_one_act() {
        let n = 200;
        let out = run(&bank0_rows(&vec![7; n]), 2);
        assert_eq!(out.metrics.act_count, 1);
        assert_eq!(out.metrics.cas_count, n as u64);
        assert_eq!(out.metrics.cas_per_act, Some(n as f64));
    }

    #[test]
    fn row_thrash_is_slower() {
        let n = 200;
        let one = run(&bank0_rows(&vec![7; n]), 2);
        let rows: Vec<u32> = (0..n as u32).map(|i| i % 8).collect();
        let thrash = run(&bank0_rows(&rows), 2);
        assert!(thrash.metrics.act_count > 100, "{}", thrash.metrics.act_count);
        assert!(thrash.metrics.bandwidth_bytes_per_cycle() < one.metrics.bandwidth_bytes_per_cycle());
        assert_eq!(thrash.metrics.cas_count, n as u64);
    }

    #[test]
    fn efficiency_identity() {
        let rows: Vec<u32> = (0..300u32).map(|i| (i / 5) % 3).collect();
        let m = run(&bank0_rows(&rows), 16).metrics;
        let cfg = DramConfig::default();
        let bw = (m.cas_count * cfg.burst_length / 2 * cfg.bus_bytes_per_beat * 2) as f64 / m.total_cycles as f64;
        assert!((m.bandwidth_bytes_per_cycle() - bw).abs() < 1e-12);
        assert!(m.bandwidth_efficiency <= 1.0);
    }
}
