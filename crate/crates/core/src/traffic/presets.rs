use serde::{Deserialize, Serialize};

use super::{IntraPageOrder, MergeTreeSpec, Placement, StreamKind, StreamSpec, TrafficError};
use crate::addressing::PageId;

pub const PRESET_NAMES: [&str; 5] = ["WL1", "WL2", "WL3", "WL4", "WL5"];

/// Default pages per source for the WL presets.
pub const DEFAULT_SCALE: u64 = 16;

/// Streams plus the tree that merges them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub name: String,
    pub streams: Vec<StreamSpec>,
    pub tree: MergeTreeSpec,
}

impl Workload {
    pub fn total_requests(&self) -> u64 {
        (0..self.tree.leaves).map(|leaf| self.streams[leaf as usize % self.streams.len()].total_requests()).sum()
    }
}

// Streams of one workload live 2^18 pages (1 GiB) apart.
fn region(index: u64) -> PageId {
    PageId((index + 1) << 18)
}

struct Shape {
    kind: StreamKind,
    read_fraction: f64,
    requests_per_page: u32,
    pages_in_flight: u32,
    requests_per_visit: u32,
    order: IntraPageOrder,
}

/// Sources of a preset tile one surface: source `i` owns every
/// `PRESET_LEAVES`-th page starting at its slot.
pub const PRESET_LEAVES: u64 = 64;

fn stream(index: u64, scale: u64, s: Shape) -> StreamSpec {
    StreamSpec {
        stream_kind: s.kind,
        read_fraction: s.read_fraction,
        base_page: region(index),
        pages_per_source: scale,
        requests_per_page: s.requests_per_page,
        page_stride: PRESET_LEAVES,
        intra_page_order: s.order,
        pages_in_flight: s.pages_in_flight,
        requests_per_visit: s.requests_per_visit,
        source_spacing: Some(1),
        allow_overlap: false,
        placement: Placement::Shuffled,
    }
}

/// The five synthetic workloads on the 64-core `[8, 8]` tree.
///
/// | name | streams                       | access        |
/// |------|-------------------------------|---------------|
/// | WL1  | texture                       | read only     |
/// | WL2  | stencil + color               | read + write  |
/// | WL3  | color                         | write only    |
/// | WL4  | hiz + depth                   | read only     |
/// | WL5  | hiz                           | read + write  |
///
/// `scale` is the number of pages each source walks.
pub fn workload_preset(name: &str, scale: u64) -> Result<Workload, TrafficError> {
    use StreamKind::*;
    let seq = IntraPageOrder::Sequential;
    let streams = match name {
        "WL1" => vec![stream(
            0,
            scale,
            Shape {
                kind: Texture,
                read_fraction: 1.0,
                requests_per_page: 64,
                pages_in_flight: 4,
                requests_per_visit: 4,
                order: seq,
            },
        )],
        "WL2" => vec![
            stream(
                0,
                scale,
                Shape {
                    kind: Stencil,
                    read_fraction: 0.5,
                    requests_per_page: 64,
                    pages_in_flight: 2,
                    requests_per_visit: 8,
                    order: seq,
                },
            ),
            stream(
                1,
                scale,
                Shape {
                    kind: Color,
                    read_fraction: 0.0,
                    requests_per_page: 64,
                    pages_in_flight: 1,
                    requests_per_visit: 16,
                    order: seq,
                },
            ),
        ],
        "WL3" => vec![stream(
            0,
            scale,
            Shape {
                kind: Color,
                read_fraction: 0.0,
                requests_per_page: 64,
                pages_in_flight: 2,
                requests_per_visit: 8,
                order: seq,
            },
        )],
        "WL4" => vec![
            stream(
                0,
                scale,
                Shape {
                    kind: Hiz,
                    read_fraction: 1.0,
                    requests_per_page: 32,
                    pages_in_flight: 4,
                    requests_per_visit: 4,
                    order: IntraPageOrder::Strided(2),
                },
            ),
            stream(
                1,
                scale,
                Shape {
                    kind: Depth,
                    read_fraction: 1.0,
                    requests_per_page: 64,
                    pages_in_flight: 2,
                    requests_per_visit: 8,
                    order: seq,
                },
            ),
        ],
        "WL5" => vec![stream(
            0,
            scale,
            Shape {
                kind: Hiz,
                read_fraction: 0.5,
                requests_per_page: 64,
                pages_in_flight: 4,
                requests_per_visit: 2,
                order: IntraPageOrder::Strided(8),
            },
        )],
        other => return Err(TrafficError::UnknownPreset(other.to_string())),
    };
    Ok(Workload { name: name.to_string(), streams, tree: MergeTreeSpec::new(vec![8, 8]) })
}
