//! Simulation of GPU-style memory request streams through a page-grouping
//! reorder buffer (MARS) and an open-page DRAM controller.
//!
//! The pipeline is: per-source generators, an arbitration tree that merges
//! them, an optional [`mars::MarsState`] reorder stage, and a
//! [`dram::MemorySystem`] running FR-FCFS per channel. [`harness`] wires
//! these together from a TOML config and writes results to disk.

pub mod addressing;
pub mod dram;
pub mod harness;
pub mod mars;
pub mod metrics;
pub mod traffic;

pub use addressing::{decode, encode, DramCoordinate, MemoryMap, PageId, PhysicalAddress};
pub use dram::{simulate, DramCommand, DramConfig};
pub use mars::{MarsConfig, MarsState};
pub use metrics::{compare, locality, ImprovementReport, LocalitySeries, RunMetrics};
pub use traffic::{MemoryRequest, StreamKind};
