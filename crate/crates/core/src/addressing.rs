//! Physical address handling.
//!
//! Two views of an address are kept apart on purpose. The reorder stage only
//! ever sees a [`PageId`]; the memory controller decodes the full
//! [`DramCoordinate`] through a [`MemoryMap`]. Nothing upstream of the
//! controller needs to know the map.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default physical address width in bits.
pub const DEFAULT_ADDR_BITS: u32 = 36;
/// Default page offset width (4 KiB pages).
pub const DEFAULT_PAGE_OFFSET_BITS: u32 = 12;
/// Bytes moved by one request.
pub const LINE_BYTES: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhysicalAddress(pub u64);

impl PhysicalAddress {
    pub fn page(self, page_offset_bits: u32) -> PageId {
        page_id(self, page_offset_bits)
    }
}

impl fmt::LowerHex for PhysicalAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::LowerHex::fmt(&self.0, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PageId(pub u64);

impl PageId {
    /// Byte address of the first line in the page.
    pub fn base_address(self, page_offset_bits: u32) -> PhysicalAddress {
        PhysicalAddress(self.0 << page_offset_bits)
    }
}

impl fmt::Display for PageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

/// Page number of `addr`: the address with the page offset discarded.
#[inline]
pub fn page_id(addr: PhysicalAddress, page_offset_bits: u32) -> PageId {
    PageId(addr.0 >> page_offset_bits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct DramCoordinate {
    pub channel: u32,
    pub rank: u32,
    pub bank: u32,
    pub row: u32,
    pub column: u32,
}

/// True when both coordinates name the same row of the same bank.
#[inline]
pub fn same_row(a: &DramCoordinate, b: &DramCoordinate) -> bool {
    a.channel == b.channel && a.rank == b.rank && a.bank == b.bank && a.row == b.row
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("memory map: addr_bits must be in 1..=64, got {0}")]
    AddrBits(u32),
    #[error("memory map: bit {bit} in {field} is outside the {addr_bits}-bit address")]
    OutOfRange { field: &'static str, bit: u32, addr_bits: u32 },
    #[error("memory map: bit {bit} is used by both {first} and {second} (bit lists must be disjoint)")]
    Overlap { bit: u32, first: &'static str, second: &'static str },
    #[error("memory map: bit {0} is not covered by any field (fields plus burst offset must cover every address bit)")]
    Uncovered(u32),
    #[error("memory map: {field} has {bits} bits, giving {actual} values, but the DRAM is configured for {expected}")]
    Dimension { field: &'static str, bits: usize, actual: u64, expected: u64 },
    #[error("memory map: {field} has {bits} bits, more than a 32-bit index holds")]
    TooWide { field: &'static str, bits: usize },
}

/// Bit-field layout from physical address to DRAM coordinate.
///
/// Each field lists the address bit positions that form it, least
/// significant coordinate bit first. The lowest `burst_offset_bits` address
/// bits select the byte within a burst and are dropped by [`decode`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryMap {
    #[serde(default = "default_addr_bits")]
    pub addr_bits: u32,
    pub burst_offset_bits: u32,
    pub channel_bits: Vec<u32>,
    #[serde(default)]
    pub rank_bits: Vec<u32>,
    pub bank_bits: Vec<u32>,
    pub row_bits: Vec<u32>,
    pub column_bits: Vec<u32>,
}

fn default_addr_bits() -> u32 {
    DEFAULT_ADDR_BITS
}

/// Coordinate dimensions a map is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub channels: u64,
    pub ranks: u64,
    pub banks: u64,
    pub rows: u64,
    pub columns: u64,
}

impl Default for MemoryMap {
    fn default() -> Self {
        Self::page_per_channel()
    }
}

impl MemoryMap {
    /// Default layout, LSB upward: 6 burst-offset bits, 6 column bits, the
    /// channel bit at 12, 3 bank bits, 20 row bits. A 4 KiB page lands on a
    /// single channel, bank and row.
    pub fn page_per_channel() -> Self {
        MemoryMap {
            addr_bits: 36,
            burst_offset_bits: 6,
            column_bits: (6..12).collect(),
            channel_bits: vec![12],
            rank_bits: vec![],
            bank_bits: (13..16).collect(),
            row_bits: (16..36).collect(),
        }
    }

    /// Channel bit inside the page offset (bit 11): each page is split
    /// across both channels, with the two halves on the same row.
    pub fn channel_in_page() -> Self {
        MemoryMap {
            addr_bits: 36,
            burst_offset_bits: 6,
            column_bits: vec![6, 7, 8, 9, 10, 12],
            channel_bits: vec![11],
            rank_bits: vec![],
            bank_bits: (13..16).collect(),
            row_bits: (16..36).collect(),
        }
    }

    /// Look up a shipped layout by name.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "page-per-channel" | "default" => Some(Self::page_per_channel()),
            "channel-in-page" => Some(Self::channel_in_page()),
            _ => None,
        }
    }

    fn fields(&self) -> [(&'static str, &[u32]); 5] {
        [
            ("channel_bits", &self.channel_bits),
            ("rank_bits", &self.rank_bits),
            ("bank_bits", &self.bank_bits),
            ("row_bits", &self.row_bits),
            ("column_bits", &self.column_bits),
        ]
    }

    /// Check disjointness and exact coverage of the address width.
    pub fn validate(&self) -> Result<(), MapError> {
        if self.addr_bits == 0 || self.addr_bits > 64 {
            return Err(MapError::AddrBits(self.addr_bits));
        }
        if self.burst_offset_bits > self.addr_bits {
            return Err(MapError::OutOfRange {
                field: "burst_offset_bits",
                bit: self.burst_offset_bits - 1,
                addr_bits: self.addr_bits,
            });
        }
        let mut owner: Vec<Option<&'static str>> = vec![None; self.addr_bits as usize];
        for slot in owner.iter_mut().take(self.burst_offset_bits as usize) {
            *slot = Some("burst_offset_bits");
        }
        for (name, bits) in self.fields() {
            if bits.len() > 32 {
                return Err(MapError::TooWide { field: name, bits: bits.len() });
            }
            for &bit in bits {
                let slot = owner.get_mut(bit as usize).ok_or(MapError::OutOfRange {
                    field: name,
                    bit,
                    addr_bits: self.addr_bits,
                })?;
                if let Some(first) = *slot {
                    return Err(MapError::Overlap { bit, first, second: name });
                }
                *slot = Some(name);
            }
        }
        if let Some(bit) = owner.iter().position(Option::is_none) {
            return Err(MapError::Uncovered(bit as u32));
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus a check that each field spans
    /// exactly the configured dimension.
    pub fn validate_against(&self, geometry: &Geometry) -> Result<(), MapError> {
        self.validate()?;
        let dims = [geometry.channels, geometry.ranks, geometry.banks, geometry.rows, geometry.columns];
        for ((field, bits), expected) in self.fields().into_iter().zip(dims) {
            let actual = 1u64 << bits.len();
            if actual != expected {
                return Err(MapError::Dimension { field, bits: bits.len(), actual, expected });
            }
        }
        Ok(())
    }

    pub fn channels(&self) -> u32 {
        1 << self.channel_bits.len()
    }

    pub fn ranks(&self) -> u32 {
        1 << self.rank_bits.len()
    }

    pub fn banks(&self) -> u32 {
        1 << self.bank_bits.len()
    }
}

#[inline]
fn gather(addr: u64, bits: &[u32]) -> u32 {
    bits.iter().enumerate().fold(0, |acc, (i, &b)| acc | ((((addr >> b) & 1) as u32) << i))
}

#[inline]
fn scatter(value: u32, bits: &[u32]) -> u64 {
    bits.iter().enumerate().fold(0, |acc, (i, &b)| acc | ((((value >> i) & 1) as u64) << b))
}

/// Decode an address into its DRAM coordinate. `map` must already be valid.
pub fn decode(addr: PhysicalAddress, map: &MemoryMap) -> DramCoordinate {
    let a = addr.0;
    DramCoordinate {
        channel: gather(a, &map.channel_bits),
        rank: gather(a, &map.rank_bits),
        bank: gather(a, &map.bank_bits),
        row: gather(a, &map.row_bits),
        column: gather(a, &map.column_bits),
    }
}

/// Inverse of [`decode`]: rebuild the address from a coordinate and the
/// in-burst byte offset.
pub fn encode(coord: &DramCoordinate, burst_offset: u64, map: &MemoryMap) -> PhysicalAddress {
    let offset_mask = (1u64 << map.burst_offset_bits) - 1;
    PhysicalAddress(
        (burst_offset & offset_mask)
            | scatter(coord.channel, &map.channel_bits)
            | scatter(coord.rank, &map.rank_bits)
            | scatter(coord.bank, &map.bank_bits)
            | scatter(coord.row, &map.row_bits)
            | scatter(coord.column, &map.column_bits),
    )
}
