//! Synthetic request streams.
//!
//! Each leaf of a merge tree is one request source (a shader core's miss
//! stream). Sources have locality of their own; [`merge`] interleaves them
//! the way on-chip arbitration does and scatters that locality.

mod generate;
mod merge;
mod presets;
pub mod trace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addressing::{page_id, PageId, PhysicalAddress, LINE_BYTES};

pub use generate::{generate_source, generate_workload, IntraPageOrder, Placement, StreamSpec};
pub use merge::{merge, Arbitration, MergeTreeSpec};
pub use presets::{workload_preset, Workload, DEFAULT_SCALE, PRESET_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamKind {
    Texture,
    Color,
    Stencil,
    Depth,
    Hiz,
}

impl StreamKind {
    pub const ALL: [StreamKind; 5] =
        [StreamKind::Texture, StreamKind::Color, StreamKind::Stencil, StreamKind::Depth, StreamKind::Hiz];

    pub fn as_str(self) -> &'static str {
        match self {
            StreamKind::Texture => "texture",
            StreamKind::Color => "color",
            StreamKind::Stencil => "stencil",
            StreamKind::Depth => "depth",
            StreamKind::Hiz => "hiz",
        }
    }
}

impl fmt::Display for StreamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StreamKind {
    type Err = TrafficError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StreamKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| TrafficError::UnknownStreamKind(s.to_string()))
    }
}

/// One 64-byte read or write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MemoryRequest {
    /// Arrival ordinal; dense from 0 after [`merge`].
    pub seq: u64,
    pub addr: PhysicalAddress,
    pub is_write: bool,
    pub stream_kind: StreamKind,
    pub source_id: u32,
}

impl MemoryRequest {
    pub const SIZE_BYTES: u64 = LINE_BYTES;

    #[inline]
    pub fn page(&self, page_offset_bits: u32) -> PageId {
        page_id(self.addr, page_offset_bits)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrafficError {
    #[error("stream spec: {0}")]
    InvalidStream(String),
    #[error("merge tree: {0}")]
    InvalidTree(String),
    #[error(
        "stream spec: sources overlap (source_spacing {spacing} pages < footprint {span} pages); \
         set allow_overlap = true to permit shared pages"
    )]
    OverlappingSources { spacing: u64, span: u64 },
    #[error(
        "stream spec: {sources} interleaved sources with source_spacing {spacing} need page_stride > {}, got {stride}",
        (*sources as u64).saturating_sub(1) * spacing
    )]
    InterleaveOverlap { sources: u32, spacing: u64, stride: u64 },
    #[error("unknown workload preset {0:?} (expected one of WL1..WL5)")]
    UnknownPreset(String),
    #[error("unknown stream kind {0:?}")]
    UnknownStreamKind(String),
    #[error("merge: expected {expected} source lists, got {actual}")]
    LeafCount { expected: usize, actual: usize },
}
