//! Open-page DRAM behind a per-channel FR-FCFS controller.
//!
//! Only tCAS, tRCD, tRP and the burst length are modelled. Cycles are
//! memory-controller cycles (1600 MHz for LPDDR4-3200).

mod controller;
pub mod protocol;
mod simulate;
pub mod trace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addressing::{Geometry, MapError, LINE_BYTES};

pub use controller::{BankState, BankStatus, ChannelState, MemorySystem, Pending};
pub use simulate::{simulate, simulate_observed, SimOutput};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DramConfig {
    #[serde(default = "d_channels")]
    pub channels: u32,
    #[serde(default = "d_ranks")]
    pub ranks_per_channel: u32,
    #[serde(default = "d_banks")]
    pub banks: u32,
    #[serde(default = "d_rows")]
    pub rows: u64,
    #[serde(default = "d_columns")]
    pub columns: u64,
    #[serde(default = "d_t15")]
    pub t_cas: u64,
    #[serde(default = "d_t15")]
    pub t_rcd: u64,
    #[serde(default = "d_t15")]
    pub t_rp: u64,
    #[serde(default = "d_burst")]
    pub burst_length: u64,
    #[serde(default = "d_beat")]
    pub bus_bytes_per_beat: u64,
    #[serde(default = "d_depth")]
    pub pending_queue_depth: usize,
}

fn d_channels() -> u32 {
    2
}
fn d_ranks() -> u32 {
    1
}
fn d_banks() -> u32 {
    8
}
fn d_rows() -> u64 {
    1 << 20
}
fn d_columns() -> u64 {
    64
}
fn d_t15() -> u64 {
    15
}
fn d_burst() -> u64 {
    8
}
fn d_beat() -> u64 {
    8
}
fn d_depth() -> usize {
    16
}

impl Default for DramConfig {
    /// Dual-channel LPDDR4-3200 class part: 8 banks, BL8, 15-15-15.
    fn default() -> Self {
        DramConfig {
            channels: d_channels(),
            ranks_per_channel: d_ranks(),
            banks: d_banks(),
            rows: d_rows(),
            columns: d_columns(),
            t_cas: 15,
            t_rcd: 15,
            t_rp: 15,
            burst_length: d_burst(),
            bus_bytes_per_beat: d_beat(),
            pending_queue_depth: d_depth(),
        }
    }
}

impl DramConfig {
    /// Data-bus cycles per CAS (double data rate).
    pub fn burst_cycles(&self) -> u64 {
        self.burst_length / 2
    }

    pub fn bytes_per_cas(&self) -> u64 {
        self.burst_length * self.bus_bytes_per_beat
    }

    pub fn banks_per_channel(&self) -> u32 {
        self.banks * self.ranks_per_channel
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            channels: self.channels as u64,
            ranks: self.ranks_per_channel as u64,
            banks: self.banks as u64,
            rows: self.rows,
            columns: self.columns,
        }
    }

    pub fn validate(&self) -> Result<(), DramError> {
        let bad = |m: String| Err(DramError::InvalidConfig(m));
        for (name, v) in [("t_cas", self.t_cas), ("t_rcd", self.t_rcd), ("t_rp", self.t_rp)] {
            if v < 1 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if self.burst_length < 2 || self.burst_length % 2 != 0 {
            return bad(format!("burst_length must be even and >= 2, got {}", self.burst_length));
        }
        if self.channels == 0 || self.ranks_per_channel == 0 || self.banks == 0 || self.rows == 0 || self.columns == 0 {
            return bad("channels, ranks_per_channel, banks, rows and columns must be >= 1".into());
        }
        if self.pending_queue_depth == 0 {
            return bad("pending_queue_depth must be >= 1".into());
        }
        if self.bytes_per_cas() != LINE_BYTES {
            return bad(format!(
                "burst_length * bus_bytes_per_beat = {} bytes, but each request is one {LINE_BYTES}-byte burst",
                self.bytes_per_cas()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DramError {
    #[error("dram config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("simulation made no progress for {0} cycles")]
    Stuck(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CommandKind {
    #[serde(rename = "ACT")]
    Act,
    #[serde(rename = "RD")]
    Rd,
    #[serde(rename = "WR")]
    Wr,
    #[serde(rename = "PRE")]
    Pre,
}

impl CommandKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandKind::Act => "ACT",
            CommandKind::Rd => "RD",
            CommandKind::Wr => "WR",
            CommandKind::Pre => "PRE",
        }
    }

    pub fn is_cas(self) -> bool {
        matches!(self, CommandKind::Rd | CommandKind::Wr)
    }
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CommandKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ACT" => Ok(CommandKind::Act),
            "RD" => Ok(CommandKind::Rd),
            "WR" => Ok(CommandKind::Wr),
            "PRE" => Ok(CommandKind::Pre),
            other => Err(format!("unknown command kind {other:?}")),
        }
    }
}

/// One issued command. `bank` is the flat bank index within the channel
/// (`rank * banks + bank`). `column` and `seq` are set for RD/WR only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DramCommand {
    pub cycle: u64,
    pub channel: u32,
    pub bank: u32,
    pub kind: CommandKind,
    pub row: u32,
    pub column: Option<u32>,
    pub seq: Option<u64>,
}
