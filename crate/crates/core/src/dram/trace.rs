//! Command trace files.
//!
//! ```text
//! cycle,channel,bank,kind,row,column,seq
//! 0,0,2,ACT,5,,
//! 15,0,2,RD,5,1,0
//! ```
//!
//! `kind` is one of `ACT`, `RD`, `WR`, `PRE`. `column` and `seq` are empty
//! for ACT and PRE. For PRE, `row` is the row being closed.

use std::io::{self, BufRead, Write};

use super::DramCommand;
use crate::traffic::trace::TraceError;

pub const HEADER: &str = "cycle,channel,bank,kind,row,column,seq";

pub fn write_commands<W: Write>(mut w: W, trace: &[DramCommand]) -> io::Result<()> {
    writeln!(w, "{HEADER}")?;
    for c in trace {
        write!(w, "{},{},{},{},{},", c.cycle, c.channel, c.bank, c.kind, c.row)?;
        if let Some(col) = c.column {
            write!(w, "{col}")?;
        }
        w.write_all(b",")?;
        if let Some(seq) = c.seq {
            write!(w, "{seq}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_commands<R: BufRead>(r: R) -> Result<Vec<DramCommand>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() || (i == 0 && line == HEADER) {
            continue;
        }
        let parse_err = |msg: String| TraceError::Parse { line: i + 1, msg };
        let f: Vec<&str> = line.split(',').collect();
        let [cycle, channel, bank, kind, row, column, seq] = f[..] else {
            return Err(parse_err(format!("expected 7 fields, found {}", f.len())));
        };
        fn num<T: std::str::FromStr>(name: &str, s: &str) -> Result<T, String> {
            s.parse().map_err(|_| format!("bad {name} {s:?}"))
        }
        fn opt<T: std::str::FromStr>(name: &str, s: &str) -> Result<Option<T>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(name, s).map(Some)
            }
        }
        let cmd = (|| {
            Ok::<_, String>(DramCommand {
                cycle: num("cycle", cycle)?,
                channel: num("channel", channel)?,
                bank: num("bank", bank)?,
                kind: kind.parse()?,
                row: num("row", row)?,
                column: opt("column", column)?,
                seq: opt("seq", seq)?,
            })
        })()
        .map_err(parse_err)?;
        out.push(cmd);
    }
    Ok(out)
}
