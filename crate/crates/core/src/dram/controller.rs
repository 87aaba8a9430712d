use super::{CommandKind, DramCommand, DramConfig, DramError};
use crate::addressing::{decode, DramCoordinate, MemoryMap};
use crate::mars::Downstream;
use crate::traffic::MemoryRequest;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BankStatus {
    Idle,
    Active(u32),
}

/// Row-buffer state and the earliest cycle each command kind may issue.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BankState {
    pub open_row: Option<u32>,
    pub act_ready: u64,
    pub cas_ready: u64,
    pub pre_ready: u64,
}

impl BankState {
    pub fn status(&self) -> BankStatus {
        match self.open_row {
            Some(r) => BankStatus::Active(r),
            None => BankStatus::Idle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pending {
    pub req: MemoryRequest,
    pub coord: DramCoordinate,
    pub bank: usize,
    pub arrival: u64,
}

/// One channel: its banks, the bounded pending queue and the data bus.
#[derive(Debug, Clone)]
pub struct ChannelState {
    pub id: u32,
    banks: Vec<BankState>,
    pending: Vec<Pending>,
    depth: usize,
    bus_ready: u64,
    hit_scratch: Vec<bool>,
    pub act_count: u64,
    pub cas_count: u64,
    pub pre_count: u64,
    pub data_busy_cycles: u64,
    /// Cycle at which the last data burst finished.
    pub last_data_end: u64,
}

impl ChannelState {
    pub fn new(id: u32, cfg: &DramConfig) -> Self {
        let banks = cfg.banks_per_channel() as usize;
        ChannelState {
            id,
            banks: vec![BankState::default(); banks],
            pending: Vec::with_capacity(cfg.pending_queue_depth),
            depth: cfg.pending_queue_depth,
            bus_ready: 0,
            hit_scratch: vec![false; banks],
            act_count: 0,
            cas_count: 0,
            pre_count: 0,
            data_busy_cycles: 0,
            last_data_end: 0,
        }
    }

    pub fn banks(&self) -> &[BankState] {
        &self.banks
    }

    pub fn pending(&self) -> &[Pending] {
        &self.pending
    }

    /// Append to the pending queue if there is room. A refusal is the
    /// backpressure signal to the stage upstream.
    pub fn mc_admit(&mut self, req: &MemoryRequest, coord: DramCoordinate, banks_per_rank: u32, cycle: u64) -> bool {
        if self.pending.len() >= self.depth {
            return false;
        }
        let bank = (coord.rank * banks_per_rank + coord.bank) as usize;
        self.pending.push(Pending { req: *req, coord, bank, arrival: cycle });
        true
    }

    /// Pick at most one command for this cycle.
    ///
    /// 1. The oldest pending request that hits its bank's open row and whose
    ///    CAS is timing-ready.
    /// 2. Otherwise, in age order, the first request whose bank can take the
    ///    command it needs next: ACT on an idle bank, or PRE on a bank whose
    ///    open row has no pending hits left.
    ///
    /// Timing: CAS at `c` needs `c >= ACT + t_rcd` and a free data bus
    /// (`burst_length / 2` cycles per CAS); its data occupies
    /// `[c + t_cas, c + t_cas + burst_length / 2)`, after which the bank may
    /// precharge. ACT needs `c >= PRE + t_rp`.
    pub fn mc_schedule(&mut self, cycle: u64, cfg: &DramConfig) -> Option<DramCommand> {
        if self.pending.is_empty() {
            return None;
        }
        let burst = cfg.burst_cycles();

        if cycle >= self.bus_ready {
            let hit = self.pending.iter().position(|p| {
                let b = &self.banks[p.bank];
                b.open_row == Some(p.coord.row) && b.cas_ready <= cycle
            });
            if let Some(i) = hit {
                let p = self.pending.remove(i);
                let bank = &mut self.banks[p.bank];
                bank.cas_ready = cycle + burst;
                bank.pre_ready = bank.pre_ready.max(cycle + cfg.t_cas + burst);
                self.bus_ready = cycle + burst;
                self.cas_count += 1;
                self.data_busy_cycles += burst;
                self.last_data_end = self.last_data_end.max(cycle + cfg.t_cas + burst);
                return Some(DramCommand {
                    cycle,
                    channel: self.id,
                    bank: p.bank as u32,
                    kind: if p.req.is_write { CommandKind::Wr } else { CommandKind::Rd },
                    row: p.coord.row,
                    column: Some(p.coord.column),
                    seq: Some(p.req.seq),
                });
            }
        }

        self.hit_scratch.iter_mut().for_each(|h| *h = false);
        for p in &self.pending {
            if self.banks[p.bank].open_row == Some(p.coord.row) {
                self.hit_scratch[p.bank] = true;
            }
        }
        for p in &self.pending {
            let bank = &mut self.banks[p.bank];
            match bank.open_row {
                Some(r) if r == p.coord.row => continue,
                Some(open) => {
                    if self.hit_scratch[p.bank] || bank.pre_ready > cycle {
                        continue;
                    }
                    bank.open_row = None;
                    bank.act_ready = cycle + cfg.t_rp;
                    self.pre_count += 1;
                    return Some(DramCommand {
                        cycle,
                        channel: self.id,
                        bank: p.bank as u32,
                        kind: CommandKind::Pre,
                        row: open,
                        column: None,
                        seq: None,
                    });
                }
                None => {
                    if bank.act_ready > cycle {
                        continue;
                    }
                    bank.open_row = Some(p.coord.row);
                    bank.cas_ready = cycle + cfg.t_rcd;
                    self.act_count += 1;
                    return Some(DramCommand {
                        cycle,
                        channel: self.id,
                        bank: p.bank as u32,
                        kind: CommandKind::Act,
                        row: p.coord.row,
                        column: None,
                        seq: None,
                    });
                }
            }
        }
        None
    }
}

/// All channels plus the memory map used to route requests to them.
#[derive(Debug, Clone)]
pub struct MemorySystem {
    cfg: DramConfig,
    map: MemoryMap,
    channels: Vec<ChannelState>,
    cycle: u64,
    trace: Option<Vec<DramCommand>>,
    issued: u64,
}

impl MemorySystem {
    pub fn new(cfg: &DramConfig, map: &MemoryMap) -> Result<Self, DramError> {
        cfg.validate()?;
        map.validate_against(&cfg.geometry())?;
        Ok(MemorySystem {
            cfg: cfg.clone(),
            map: map.clone(),
            channels: (0..cfg.channels).map(|id| ChannelState::new(id, cfg)).collect(),
            cycle: 0,
            trace: None,
            issued: 0,
        })
    }

    pub fn with_trace(mut self, record: bool) -> Self {
        self.trace = record.then(Vec::new);
        self
    }

    pub fn config(&self) -> &DramConfig {
        &self.cfg
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn channels(&self) -> &[ChannelState] {
        &self.channels
    }

    /// Commands issued so far.
    pub fn issued(&self) -> u64 {
        self.issued
    }

    pub fn is_idle(&self) -> bool {
        self.channels.iter().all(|c| c.pending.is_empty())
    }

    pub fn admit(&mut self, req: &MemoryRequest) -> bool {
        let coord = decode(req.addr, &self.map);
        let banks = self.cfg.banks;
        self.channels[coord.channel as usize].mc_admit(req, coord, banks, self.cycle)
    }

    /// Let every channel (in index order) issue at most one command, then
    /// advance the clock. Returns the number of commands issued.
    pub fn step(&mut self) -> u32 {
        let mut n = 0;
        for ch in &mut self.channels {
            if let Some(cmd) = ch.mc_schedule(self.cycle, &self.cfg) {
                n += 1;
                if let Some(t) = self.trace.as_mut() {
                    t.push(cmd);
                }
            }
        }
        self.issued += n as u64;
        self.cycle += 1;
        n
    }

    pub fn take_trace(&mut self) -> Vec<DramCommand> {
        self.trace.take().unwrap_or_default()
    }
}

impl Downstream for MemorySystem {
    fn offer(&mut self, req: &MemoryRequest) -> bool {
        self.admit(req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addressing::{encode, PhysicalAddress};
    use crate::traffic::StreamKind;

    fn req_at(seq: u64, coord: DramCoordinate, map: &MemoryMap) -> MemoryRequest {
        MemoryRequest {
            seq,
            addr: encode(&coord, 0, map),
            is_write: false,
            stream_kind: StreamKind::Texture,
            source_id: 0,
        }
    }

    fn coord(bank: u32, row: u32, column: u32) -> DramCoordinate {
        DramCoordinate { channel: 0, rank: 0, bank, row, column }
    }

    fn run(reqs: &[MemoryRequest], cfg: &DramConfig) -> Vec<DramCommand> {
        let map = MemoryMap::default();
        let mut sys = MemorySystem::new(cfg, &map).unwrap().with_trace(true);
        for r in reqs {
            assert!(sys.admit(r));
        }
        while !sys.is_idle() {
            sys.step();
        }
        sys.take_trace()
    }

    fn kinds(trace: &[DramCommand]) -> Vec<(u64, CommandKind)> {
        trace.iter().map(|c| (c.cycle, c.kind)).collect()
    }

    #[test]
    fn admission_is_bounded_and_fifo() {
        let cfg = DramConfig::default();
        let map = MemoryMap::default();
        let mut sys = MemorySystem::new(&cfg, &map).unwrap();
        for i in 0..16 {
            assert!(sys.admit(&req_at(i, coord(0, i as u32, 0), &map)));
        }
        assert!(!sys.admit(&req_at(16, coord(0, 99, 0), &map)));
        let seqs: Vec<u64> = sys.channels()[0].pending().iter().map(|p| p.req.seq).collect();
        assert_eq!(seqs, (0..16).collect::<Vec<_>>());
        // The other channel still has room.
        assert!(sys.admit(&MemoryRequest { addr: PhysicalAddress(0x1000), ..req_at(17, coord(0, 0, 0), &map) }));
    }

    #[test]
    fn act_then_rd_after_t_rcd() {
        let map = MemoryMap::default();
        let trace = run(&[req_at(0, coord(2, 5, 1), &map)], &DramConfig::default());
        assert_eq!(kinds(&trace), vec![(0, CommandKind::Act), (15, CommandKind::Rd)]);
        assert_eq!(trace[1].seq, Some(0));
        assert_eq!((trace[1].bank, trace[1].row, trace[1].column), (2, 5, Some(1)));
    }

    #[test]
    fn same_row_pair_shares_one_act() {
        let map = MemoryMap::default();
        let trace = run(&[req_at(0, coord(0, 3, 0), &map), req_at(1, coord(0, 3, 1), &map)], &DramConfig::default());
        assert_eq!(kinds(&trace), vec![(0, CommandKind::Act), (15, CommandKind::Rd), (19, CommandKind::Rd)]);
    }

    // Hand trace for r1, r2, r1, r2 in bank 0 (tRCD = tRP = tCAS = 15, four
    // data cycles per burst):
    //   0 ACT r1
    //  15 RD  seq0 (row hit, oldest)
    //  19 RD  seq2 (row hit, bypasses seq1)
    //  38 PRE r1   (19 + tCAS 15 + burst 4)
    //  53 ACT r2   (38 + tRP)
    //  68 RD  seq1
    //  72 RD  seq3
    #[test]
    fn fr_fcfs_serves_both_hits_under_one_act() {
        let map = MemoryMap::default();
        let reqs = [
            req_at(0, coord(0, 1, 0), &map),
            req_at(1, coord(0, 2, 0), &map),
            req_at(2, coord(0, 1, 1), &map),
            req_at(3, coord(0, 2, 1), &map),
        ];
        let trace = run(&reqs, &DramConfig::default());
        let got: Vec<(u64, CommandKind, u32, Option<u64>)> =
            trace.iter().map(|c| (c.cycle, c.kind, c.row, c.seq)).collect();
        use CommandKind::*;
        assert_eq!(
            got,
            vec![
                (0, Act, 1, None),
                (15, Rd, 1, Some(0)),
                (19, Rd, 1, Some(2)),
                (38, Pre, 1, None),
                (53, Act, 2, None),
                (68, Rd, 2, Some(1)),
                (72, Rd, 2, Some(3)),
            ]
        );
    }

    // Bank-level parallelism: a younger request to an idle bank is activated
    // while the older one waits on its own bank.
    #[test]
    fn activates_other_banks_while_waiting() {
        let map = MemoryMap::default();
        let trace = run(&[req_at(0, coord(0, 1, 0), &map), req_at(1, coord(1, 1, 0), &map)], &DramConfig::default());
        use CommandKind::*;
        assert_eq!(kinds(&trace), vec![(0, Act), (1, Act), (15, Rd), (19, Rd)]);
    }

    #[test]
    fn writes_issue_wr() {
        let map = MemoryMap::default();
        let mut r = req_at(0, coord(0, 0, 0), &map);
        r.is_write = true;
        let trace = run(&[r], &DramConfig::default());
        assert_eq!(trace[1].kind, CommandKind::Wr);
    }
}
