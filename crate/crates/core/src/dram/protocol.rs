//! Independent legality check for command traces.
//!
//! Per bank the command sequence must match
//! `(ACT (RD|WR)+ PRE)* ACT (RD|WR)+` (or be empty), CAS must target the
//! open row, and issue-cycle gaps must respect the timing rules the
//! controller documents. Per channel: at most one command per cycle and no
//! overlapping data bursts.

use std::collections::HashMap;
use std::fmt;

use super::{CommandKind, DramCommand, DramConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub cycle: u64,
    pub channel: u32,
    pub bank: u32,
    pub rule: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "command #{} at cycle {} (channel {}, bank {}): {}",
            self.index, self.cycle, self.channel, self.bank, self.rule
        )
    }
}

#[derive(Default, Clone, Copy)]
struct Bank {
    open: Option<u32>,
    last_act: Option<u64>,
    last_pre: Option<u64>,
    last_cas: Option<u64>,
    cas_since_act: u32,
}

#[derive(Default, Clone, Copy)]
struct Channel {
    last_cycle: Option<u64>,
    last_cas: Option<u64>,
}

pub fn check_trace(trace: &[DramCommand], cfg: &DramConfig) -> Vec<Violation> {
    let burst = cfg.burst_cycles();
    let mut banks: HashMap<(u32, u32), Bank> = HashMap::new();
    let mut channels: HashMap<u32, Channel> = HashMap::new();
    let mut out = Vec::new();
    let mut prev_cycle = 0;

    for (index, cmd) in trace.iter().enumerate() {
        let mut flag = |rule| {
            out.push(Violation { index, cycle: cmd.cycle, channel: cmd.channel, bank: cmd.bank, rule });
        };
        if cmd.cycle < prev_cycle {
            flag("trace not in cycle order");
        }
        prev_cycle = cmd.cycle;

        let ch = channels.entry(cmd.channel).or_default();
        if ch.last_cycle == Some(cmd.cycle) {
            flag("two commands on one channel in one cycle");
        }
        ch.last_cycle = Some(cmd.cycle);

        let b = banks.entry((cmd.channel, cmd.bank)).or_default();
        match cmd.kind {
            CommandKind::Act => {
                if b.open.is_some() {
                    flag("ACT to a bank with an open row");
                }
                if b.last_pre.is_some_and(|p| cmd.cycle < p + cfg.t_rp) {
                    flag("ACT earlier than t_rp after PRE");
                }
                b.open = Some(cmd.row);
                b.last_act = Some(cmd.cycle);
                b.cas_since_act = 0;
            }
            CommandKind::Pre => {
                match b.open {
                    None => flag("PRE to an idle bank"),
                    Some(r) if r != cmd.row => flag("PRE names a row that is not open"),
                    _ => {}
                }
                if b.open.is_some() && b.cas_since_act == 0 {
                    flag("PRE with no CAS since ACT");
                }
                if b.last_cas.is_some_and(|c| cmd.cycle < c + cfg.t_cas + burst) {
                    flag("PRE before the last burst completed");
                }
                b.open = None;
                b.last_pre = Some(cmd.cycle);
            }
            CommandKind::Rd | CommandKind::Wr => {
                match b.open {
                    None => flag("CAS to an idle bank"),
                    Some(r) if r != cmd.row => flag("CAS to a row that is not open"),
                    _ => {}
                }
                if b.last_act.is_some_and(|a| cmd.cycle < a + cfg.t_rcd) {
                    flag("CAS earlier than t_rcd after ACT");
                }
                if cmd.seq.is_none() || cmd.column.is_none() {
                    flag("CAS without column or seq");
                }
                if ch.last_cas.is_some_and(|c| cmd.cycle < c + burst) {
                    flag("data bus double-booked");
                }
                ch.last_cas = Some(cmd.cycle);
                b.last_cas = Some(cmd.cycle);
                b.cas_since_act += 1;
            }
        }
    }

    for (&(channel, bank), b) in &banks {
        if b.open.is_some() && b.cas_since_act == 0 {
            out.push(Violation {
                index: trace.len(),
                cycle: prev_cycle,
                channel,
                bank,
                rule: "trace ends with an ACT that served no CAS",
            });
        }
    }
    out
}
