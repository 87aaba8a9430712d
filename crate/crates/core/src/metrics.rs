//! Measurement: window locality of a request stream, CAS/ACT and bandwidth
//! of a DRAM run, and improvement against a baseline run.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addressing::PageId;
use crate::dram::{CommandKind, DramCommand};
use crate::traffic::MemoryRequest;

/// Locality over consecutive, non-overlapping windows.
///
/// Each window's value is its length over the number of distinct pages it
/// touches. The trailing window may be shorter than `window_size`; `mean`
/// weights every window by its length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalitySeries {
    pub window_size: usize,
    pub values: Vec<f64>,
    pub lengths: Vec<usize>,
    pub mean: Option<f64>,
}

impl LocalitySeries {
    pub fn requests(&self) -> usize {
        self.lengths.iter().sum()
    }

    /// Request-weighted mean across several series (e.g. all sources).
    pub fn pooled_mean(series: &[LocalitySeries]) -> Option<f64> {
        let (num, den) = series.iter().fold((0.0, 0usize), |(num, den), s| {
            let n: f64 = s.values.iter().zip(&s.lengths).map(|(v, &l)| v * l as f64).sum();
            (num + n, den + s.requests())
        });
        (den > 0).then(|| num / den as f64)
    }
}

pub fn locality_of_pages(pages: &[PageId], window_size: usize) -> LocalitySeries {
    assert!(window_size >= 1, "window_size must be >= 1");
    let mut seen = HashSet::with_capacity(window_size.min(1 << 16));
    let mut values = Vec::with_capacity(pages.len().div_ceil(window_size));
    let mut lengths = Vec::with_capacity(values.capacity());
    let mut weighted = 0.0;
    for window in pages.chunks(window_size) {
        seen.clear();
        seen.extend(window.iter().copied());
        let v = window.len() as f64 / seen.len() as f64;
        weighted += v * window.len() as f64;
        values.push(v);
        lengths.push(window.len());
    }
    let mean = (!pages.is_empty()).then(|| weighted / pages.len() as f64);
    LocalitySeries { window_size, values, lengths, mean }
}

pub fn locality(stream: &[MemoryRequest], window_size: usize, page_offset_bits: u32) -> LocalitySeries {
    let pages: Vec<PageId> = stream.iter().map(|r| r.page(page_offset_bits)).collect();
    locality_of_pages(&pages, window_size)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub act_count: u64,
    pub cas_count: u64,
    pub pre_count: u64,
    pub data_busy_cycles: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub act_count: u64,
    pub cas_count: u64,
    pub pre_count: u64,
    pub total_cycles: u64,
    pub achieved_bytes: u64,
    pub cas_per_act: Option<f64>,
    /// Data-busy cycles over elapsed cycles, averaged over channels.
    pub bandwidth_efficiency: f64,
    pub channels: Vec<ChannelMetrics>,
    /// Identifies workload, seed and memory configuration. Two runs are
    /// comparable only when their keys match.
    #[serde(default)]
    pub comparison_key: String,
}

impl RunMetrics {
    pub fn from_channels(channels: Vec<ChannelMetrics>, total_cycles: u64, bytes_per_cas: u64) -> Self {
        let act_count = channels.iter().map(|c| c.act_count).sum();
        let cas_count: u64 = channels.iter().map(|c| c.cas_count).sum();
        let pre_count = channels.iter().map(|c| c.pre_count).sum();
        let busy: u64 = channels.iter().map(|c| c.data_busy_cycles).sum();
        let bandwidth_efficiency = if total_cycles == 0 || channels.is_empty() {
            0.0
        } else {
            busy as f64 / (total_cycles as f64 * channels.len() as f64)
        };
        RunMetrics {
            act_count,
            cas_count,
            pre_count,
            total_cycles,
            achieved_bytes: cas_count * bytes_per_cas,
            cas_per_act: cas_per_act(cas_count, act_count),
            bandwidth_efficiency,
            channels,
            comparison_key: String::new(),
        }
    }

    /// Rebuild counts from a command trace alone. `total_cycles` and
    /// efficiency need timing the trace does not carry, so they stay zero.
    pub fn from_trace(trace: &[DramCommand], channels: u32, bytes_per_cas: u64, burst_cycles: u64) -> Self {
        let mut per = vec![ChannelMetrics::default(); channels as usize];
        for c in trace {
            let ch = &mut per[c.channel as usize];
            match c.kind {
                CommandKind::Act => ch.act_count += 1,
                CommandKind::Pre => ch.pre_count += 1,
                CommandKind::Rd | CommandKind::Wr => {
                    ch.cas_count += 1;
                    ch.data_busy_cycles += burst_cycles;
                }
            }
        }
        RunMetrics::from_channels(per, 0, bytes_per_cas)
    }

    pub fn bandwidth_bytes_per_cycle(&self) -> f64 {
        if self.total_cycles == 0 {
            0.0
        } else {
            self.achieved_bytes as f64 / self.total_cycles as f64
        }
    }

    /// Achieved bandwidth in GB/s at the given controller clock.
    pub fn bandwidth_gbps(&self, clock_mhz: f64) -> f64 {
        self.bandwidth_bytes_per_cycle() * clock_mhz * 1e6 / 1e9
    }
}

pub fn cas_per_act(cas: u64, act: u64) -> Option<f64> {
    (act > 0).then(|| cas as f64 / act as f64)
}

/// Published reference points for the MARS design (64 cores, 512-entry
/// RequestQ, 128-entry two-way PhyPageList). Attached to reports for
/// context; not expected to be reproduced exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoints {
    pub bandwidth_gain_pct: f64,
    pub cas_per_act_gain_pct: f64,
    /// WL1 and WL5 CAS/ACT ratios exceed this.
    pub wl1_wl5_cas_per_act_ratio: f64,
}

pub const REFERENCE: ReferencePoints =
    ReferencePoints { bandwidth_gain_pct: 11.0, cas_per_act_gain_pct: 69.0, wl1_wl5_cas_per_act_ratio: 2.0 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelImprovement {
    pub channel: usize,
    pub baseline_cas_per_act: Option<f64>,
    pub mars_cas_per_act: Option<f64>,
    pub baseline_busy_cycles: u64,
    pub mars_busy_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub bandwidth_delta_pct: f64,
    pub cas_per_act_delta_pct: Option<f64>,
    pub cas_per_act_ratio: Option<f64>,
    pub efficiency_delta_pct: f64,
    pub channels: Vec<ChannelImprovement>,
    pub reference: ReferencePoints,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("runs are not comparable: baseline key {baseline:?} != mars key {mars:?}")]
pub struct ConfigMismatch {
    pub baseline: String,
    pub mars: String,
}

fn delta_pct(base: f64, new: f64) -> f64 {
    if base == new {
        0.0
    } else if base == 0.0 {
        f64::INFINITY
    } else {
        (new / base - 1.0) * 100.0
    }
}

pub fn compare(baseline: &RunMetrics, mars: &RunMetrics) -> Result<ImprovementReport, ConfigMismatch> {
    if baseline.comparison_key != mars.comparison_key || baseline.channels.len() != mars.channels.len() {
        return Err(ConfigMismatch { baseline: baseline.comparison_key.clone(), mars: mars.comparison_key.clone() });
    }
    let ratio = match (baseline.cas_per_act, mars.cas_per_act) {
        (Some(b), Some(m)) => Some(m / b),
        _ => None,
    };
    let channels = baseline
        .channels
        .iter()
        .zip(&mars.channels)
        .enumerate()
        .map(|(channel, (b, m))| ChannelImprovement {
            channel,
            baseline_cas_per_act: cas_per_act(b.cas_count, b.act_count),
            mars_cas_per_act: cas_per_act(m.cas_count, m.act_count),
            baseline_busy_cycles: b.data_busy_cycles,
            mars_busy_cycles: m.data_busy_cycles,
        })
        .collect();
    Ok(ImprovementReport {
        bandwidth_delta_pct: delta_pct(baseline.bandwidth_bytes_per_cycle(), mars.bandwidth_bytes_per_cycle()),
        cas_per_act_delta_pct: ratio.map(|r| if r == 1.0 { 0.0 } else { (r - 1.0) * 100.0 }),
        cas_per_act_ratio: ratio,
        efficiency_delta_pct: delta_pct(baseline.bandwidth_efficiency, mars.bandwidth_efficiency),
        channels,
        reference: REFERENCE,
    })
}
