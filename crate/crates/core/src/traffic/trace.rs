//! Request trace files.
//!
//! One request per line after a fixed header:
//!
//! ```text
//! seq,addr_hex,rw,stream_kind,source_id
//! 0,0x000401000,R,texture,3
//! ```
//!
//! `rw` is `R` or `W`. Addresses are written as nine hex digits (36 bits)
//! and parsed with any width. Blank lines and lines starting with `#` are
//! ignored on input.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use super::MemoryRequest;
use crate::addressing::PhysicalAddress;

pub const HEADER: &str = "seq,addr_hex,rw,stream_kind,source_id";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub fn write_requests<W: Write>(mut w: W, reqs: &[MemoryRequest]) -> io::Result<()> {
    writeln!(w, "{HEADER}")?;
    for r in reqs {
        writeln!(
            w,
            "{},0x{:09x},{},{},{}",
            r.seq,
            r.addr.0,
            if r.is_write { 'W' } else { 'R' },
            r.stream_kind,
            r.source_id
        )?;
    }
    Ok(())
}

pub fn read_requests<R: BufRead>(r: R) -> Result<Vec<MemoryRequest>, TraceError> {
    let mut out = Vec::new();
    let mut saw_header = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        if !saw_header {
            saw_header = true;
            if text == HEADER {
                continue;
            }
        }
        out.push(parse_line(text).map_err(|msg| TraceError::Parse { line: line_no, msg })?);
    }
    Ok(out)
}

fn parse_line(text: &str) -> Result<MemoryRequest, String> {
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    let [seq, addr, rw, kind, source] = fields[..] else {
        return Err(format!("expected 5 fields, found {}", fields.len()));
    };
    let seq = seq.parse().map_err(|e| format!("seq {seq:?}: {e}"))?;
    let hex = addr.strip_prefix("0x").or_else(|| addr.strip_prefix("0X")).unwrap_or(addr);
    let addr = u64::from_str_radix(hex, 16).map_err(|e| format!("addr_hex {addr:?}: {e}"))?;
    let is_write = match rw {
        "R" | "r" => false,
        "W" | "w" => true,
        other => return Err(format!("rw must be R or W, got {other:?}")),
    };
    let stream_kind = kind.parse().map_err(|e| format!("{e}"))?;
    let source_id = source.parse().map_err(|e| format!("source_id {source:?}: {e}"))?;
    Ok(MemoryRequest { seq, addr: PhysicalAddress(addr), is_write, stream_kind, source_id })
}
