//! The page-grouping reorder stage.
//!
//! Requests land in any free slot of a fixed RequestQ. Slots holding
//! requests to the same 4 KiB page are threaded into a chronological linked
//! list whose head and tail live in a set-associative PhyPageList entry. A
//! FIFO of entries (PhyPageOrderQ) records the order in which pages first
//! arrived. Forwarding drains the oldest page completely before moving on.
//!
//! The stage looks only at page numbers; channel, bank and row layout stay
//! inside the memory controller.

mod occupancy;
mod stage;

use std::collections::VecDeque;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addressing::{PageId, DEFAULT_PAGE_OFFSET_BITS};
use crate::traffic::MemoryRequest;

pub use occupancy::Occupancy;
pub use stage::{
    baseline_passthrough, run_reorder, Downstream, Feeder, NoCredit, Passthrough, RandomCredits, Rates, ReorderRun,
    ReorderStage, Unlimited,
};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarsConfig {
    /// RequestQ slots (Q).
    #[serde(default = "default_capacity")]
    pub capacity: usize,
    #[serde(default = "default_sets")]
    pub sets: usize,
    #[serde(default = "default_ways")]
    pub ways: usize,
    #[serde(default = "one")]
    pub insert_rate: u32,
    #[serde(default = "one")]
    pub forward_rate: u32,
    /// Maximum consecutive forwards from one page before it is moved to
    /// the back of the page order. `None` drains pages to completion.
    #[serde(default)]
    pub drain_cap: Option<u32>,
    #[serde(default = "default_page_bits")]
    pub page_offset_bits: u32,
}

fn default_capacity() -> usize {
    512
}
fn default_sets() -> usize {
    64
}
fn default_ways() -> usize {
    2
}
fn one() -> u32 {
    1
}
fn default_page_bits() -> u32 {
    DEFAULT_PAGE_OFFSET_BITS
}

impl Default for MarsConfig {
    fn default() -> Self {
        MarsConfig {
            capacity: default_capacity(),
            sets: default_sets(),
            ways: default_ways(),
            insert_rate: 1,
            forward_rate: 1,
            drain_cap: None,
            page_offset_bits: DEFAULT_PAGE_OFFSET_BITS,
        }
    }
}

impl MarsConfig {
    pub fn entries(&self) -> usize {
        self.sets * self.ways
    }

    pub fn rates(&self) -> Rates {
        Rates { insert: self.insert_rate, forward: self.forward_rate }
    }

    pub fn validate(&self) -> Result<(), MarsError> {
        let bad = |m: &str| Err(MarsError::InvalidConfig(m.to_string()));
        if self.capacity == 0 || self.capacity > u32::MAX as usize {
            return bad("capacity must be in 1..=2^32-1");
        }
        if self.sets == 0 || self.ways == 0 {
            return bad("sets and ways must be >= 1");
        }
        if self.insert_rate == 0 || self.forward_rate == 0 {
            return bad("insert_rate and forward_rate must be >= 1");
        }
        if self.drain_cap == Some(0) {
            return bad("drain_cap must be >= 1 when set");
        }
        if self.page_offset_bits >= 64 {
            return bad("page_offset_bits must be < 64");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarsError {
    #[error("mars config: {0}")]
    InvalidConfig(String),
}

/// Why an insert was refused. The request stays with the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stall {
    QueueFull,
    SetConflict,
    OrderQueueFull,
    /// The request's page is being forwarded; it waits for that entry to
    /// retire and then opens a fresh one.
    PageDraining,
}

impl Stall {
    pub const ALL: [Stall; 4] = [Stall::QueueFull, Stall::SetConflict, Stall::OrderQueueFull, Stall::PageDraining];

    fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stall::QueueFull => "queue_full",
            Stall::SetConflict => "set_conflict",
            Stall::OrderQueueFull => "order_q_full",
            Stall::PageDraining => "page_draining",
        }
    }
}

impl fmt::Display for Stall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    req: MemoryRequest,
    next: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhyPageEntry {
    pub page: PageId,
    pub head: u32,
    pub tail: u32,
    pub count: u32,
    pub draining: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarsStats {
    pub accepted: u64,
    pub forwarded: u64,
    pub pages_opened: u64,
    /// Refused insert attempts, indexed like [`Stall::ALL`].
    pub stalls: [u64; 4],
    pub peak_live: usize,
    pub peak_pages: usize,
}

/// RequestQ, PhyPageList and PhyPageOrderQ together.
#[derive(Debug, Clone)]
pub struct MarsState {
    cfg: MarsConfig,
    slots: Vec<Option<Slot>>,
    occupancy: Occupancy,
    entries: Vec<Option<PhyPageEntry>>,
    order: VecDeque<u32>,
    valid_entries: usize,
    run_len: u32,
    stats: MarsStats,
}

impl MarsState {
    pub fn new(cfg: MarsConfig) -> Result<Self, MarsError> {
        cfg.validate()?;
        Ok(MarsState {
            slots: vec![None; cfg.capacity],
            occupancy: Occupancy::new(cfg.capacity),
            entries: vec![None; cfg.entries()],
            order: VecDeque::with_capacity(cfg.entries()),
            valid_entries: 0,
            run_len: 0,
            stats: MarsStats::default(),
            cfg,
        })
    }

    pub fn config(&self) -> &MarsConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &MarsStats {
        &self.stats
    }

    /// Live requests.
    pub fn len(&self) -> usize {
        self.occupancy.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pages(&self) -> usize {
        self.valid_entries
    }

    fn set_of(&self, page: PageId) -> usize {
        (page.0 % self.cfg.sets as u64) as usize
    }

    fn ways(&self, set: usize) -> std::ops::Range<usize> {
        set * self.cfg.ways..(set + 1) * self.cfg.ways
    }

    fn find(&self, page: PageId) -> Option<usize> {
        self.ways(self.set_of(page)).find(|&i| matches!(self.entries[i], Some(e) if e.page == page))
    }

    /// Place `req` in the lowest free slot and link it onto its page, or
    /// report why it cannot be taken. A stall leaves the state untouched.
    pub fn try_insert(&mut self, req: &MemoryRequest) -> Result<(), Stall> {
        let result = self.insert_inner(req);
        match result {
            Ok(()) => {
                self.stats.accepted += 1;
                self.stats.peak_live = self.stats.peak_live.max(self.len());
                self.stats.peak_pages = self.stats.peak_pages.max(self.valid_entries);
            }
            Err(stall) => self.stats.stalls[stall.index()] += 1,
        }
        result
    }

    fn insert_inner(&mut self, req: &MemoryRequest) -> Result<(), Stall> {
        let page = req.page(self.cfg.page_offset_bits);
        let existing = self.find(page);
        if let Some(idx) = existing {
            if self.entries[idx].is_some_and(|e| e.draining) {
                return Err(Stall::PageDraining);
            }
        }
        let slot = self.occupancy.first_free().ok_or(Stall::QueueFull)?;
        let slot_u32 = slot as u32;

        match existing {
            Some(idx) => {
                let entry = self.entries[idx].as_mut().unwrap();
                let old_tail = entry.tail as usize;
                entry.tail = slot_u32;
                entry.count += 1;
                self.slots[old_tail].as_mut().unwrap().next = Some(slot_u32);
            }
            None => {
                let set = self.set_of(page);
                let way = self.ways(set).find(|&i| self.entries[i].is_none()).ok_or(Stall::SetConflict)?;
                if self.order.len() >= self.cfg.entries() {
                    return Err(Stall::OrderQueueFull);
                }
                self.entries[way] =
                    Some(PhyPageEntry { page, head: slot_u32, tail: slot_u32, count: 1, draining: false });
                self.order.push_back(way as u32);
                self.valid_entries += 1;
                self.stats.pages_opened += 1;
            }
        }
        self.slots[slot] = Some(Slot { req: *req, next: None });
        self.occupancy.set(slot);
        Ok(())
    }

    /// The request [`forward`](Self::forward) would return next.
    pub fn peek(&self) -> Option<&MemoryRequest> {
        let &idx = self.order.front()?;
        let entry = self.entries[idx as usize].as_ref()?;
        self.slots[entry.head as usize].as_ref().map(|s| &s.req)
    }

    /// Remove and return the oldest request of the oldest page.
    pub fn forward(&mut self) -> Option<MemoryRequest> {
        let idx = *self.order.front()? as usize;
        let entry = self.entries[idx].as_mut().expect("order queue points at a valid entry");
        let head = entry.head as usize;
        let slot = self.slots[head].take().expect("entry head is occupied");
        self.occupancy.clear(head);
        entry.count -= 1;
        entry.draining = true;
        self.run_len += 1;
        self.stats.forwarded += 1;

        if entry.count == 0 {
            self.entries[idx] = None;
            self.order.pop_front();
            self.valid_entries -= 1;
            self.run_len = 0;
        } else {
            entry.head = slot.next.expect("non-empty chain continues");
            if self.cfg.drain_cap.is_some_and(|cap| self.run_len >= cap) {
                entry.draining = false;
                self.order.pop_front();
                self.order.push_back(idx as u32);
                self.run_len = 0;
            }
        }
        Some(slot.req)
    }

    /// Valid entries in page order.
    pub fn page_order(&self) -> impl Iterator<Item = &PhyPageEntry> + '_ {
        self.order.iter().filter_map(|&i| self.entries[i as usize].as_ref())
    }

    fn chain(&self, entry: &PhyPageEntry) -> Vec<u32> {
        let mut out = Vec::with_capacity(entry.count as usize);
        let mut cur = Some(entry.head);
        while let Some(s) = cur {
            out.push(s);
            if out.len() > self.cfg.capacity {
                break;
            }
            cur = self.slots[s as usize].as_ref().and_then(|slot| slot.next);
        }
        out
    }

    /// Textual dump of the reorder state.
    ///
    /// ```text
    /// mars live=<n> capacity=<Q> pages=<valid>/<sets*ways>
    /// order <pos> set=<set> way=<way> page=<0x..> count=<n> draining=<0|1> chain=<slot>,<slot>,...
    /// ```
    ///
    /// One `order` line per PhyPageOrderQ position, head first. The chain
    /// lists slot indices from the entry's head to its tail.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "mars live={} capacity={} pages={}/{}",
            self.len(),
            self.cfg.capacity,
            self.valid_entries,
            self.cfg.entries()
        );
        for (pos, &idx) in self.order.iter().enumerate() {
            let Some(e) = self.entries[idx as usize].as_ref() else { continue };
            let chain: Vec<String> = self.chain(e).iter().map(u32::to_string).collect();
            let _ = writeln!(
                s,
                "order {pos} set={} way={} page={:#x} count={} draining={} chain={}",
                idx as usize / self.cfg.ways,
                idx as usize % self.cfg.ways,
                e.page.0,
                e.count,
                e.draining as u8,
                chain.join(",")
            );
        }
        s
    }

    /// Walk every structure and check that they agree with each other.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen_slot = vec![false; self.cfg.capacity];
        let mut total = 0usize;
        let mut in_order = vec![0u32; self.entries.len()];
        for &i in &self.order {
            in_order[i as usize] += 1;
        }
        let mut pages = std::collections::HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            let Some(e) = e else {
                if in_order[i] != 0 {
                    return Err(format!("order queue references empty entry {i}"));
                }
                continue;
            };
            if in_order[i] != 1 {
                return Err(format!("entry {i} appears {} times in the order queue", in_order[i]));
            }
            if self.set_of(e.page) != i / self.cfg.ways {
                return Err(format!("page {} stored in wrong set", e.page));
            }
            if !pages.insert(e.page) {
                return Err(format!("page {} has two entries", e.page));
            }
            if e.count == 0 {
                return Err(format!("entry {i} has zero count"));
            }
            let chain = self.chain(e);
            if chain.len() != e.count as usize || chain.last() != Some(&e.tail) {
                return Err(format!("entry {i} chain {chain:?} disagrees with count {} tail {}", e.count, e.tail));
            }
            let mut last_seq = None;
            for &s in &chain {
                let s = s as usize;
                if seen_slot[s] || !self.occupancy.get(s) {
                    return Err(format!("slot {s} reached twice or not occupied"));
                }
                seen_slot[s] = true;
                let req = &self.slots[s].as_ref().unwrap().req;
                if req.page(self.cfg.page_offset_bits) != e.page {
                    return Err(format!("slot {s} on the wrong page chain"));
                }
                if last_seq.is_some_and(|l| l >= req.seq) {
                    return Err(format!("chain of page {} is not chronological", e.page));
                }
                last_seq = Some(req.seq);
            }
            total += e.count as usize;
        }
        if total != self.occupancy.count_ones() {
            return Err(format!("entry counts {total} != occupancy {}", self.occupancy.count_ones()));
        }
        for (s, slot) in self.slots.iter().enumerate() {
            if slot.is_some() != self.occupancy.get(s) || (slot.is_some() && !seen_slot[s]) {
                return Err(format!("slot {s} occupancy mismatch or unreachable"));
            }
        }
        if self.valid_entries != pages.len() || pages.len() > self.cfg.entries() || total > self.cfg.capacity {
            return Err("capacity bound violated".into());
        }
        Ok(())
    }
}

impl ReorderStage for MarsState {
    fn try_insert(&mut self, req: &MemoryRequest) -> Result<(), Stall> {
        MarsState::try_insert(self, req)
    }

    fn peek(&self) -> Option<&MemoryRequest> {
        MarsState::peek(self)
    }

    fn forward(&mut self) -> Option<MemoryRequest> {
        MarsState::forward(self)
    }

    fn len(&self) -> usize {
        MarsState::len(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addressing::PhysicalAddress;
    use crate::traffic::StreamKind;

    fn req(seq: u64, page: u64, line: u64) -> MemoryRequest {
        MemoryRequest {
            seq,
            addr: PhysicalAddress(page << 12 | line << 6),
            is_write: false,
            stream_kind: StreamKind::Texture,
            source_id: 0,
        }
    }

    fn state(capacity: usize, sets: usize, ways: usize) -> MarsState {
        MarsState::new(MarsConfig { capacity, sets, ways, ..MarsConfig::default() }).unwrap()
    }

    fn drain(s: &mut MarsState) -> Vec<u64> {
        std::iter::from_fn(|| s.forward()).map(|r| r.seq).collect()
    }

    #[test]
    fn first_insert() {
        let mut s = state(8, 4, 2);
        s.try_insert(&req(0, 5, 0)).unwrap();
        assert_eq!(s.page_order().count(), 1);
        assert_eq!(s.page_order().next().unwrap().count, 1);
        s.check_invariants().unwrap();
    }

    #[test]
    fn capacity_bound() {
        let q = 16;
        let mut s = state(q, 8, 2);
        for i in 0..q as u64 {
            s.try_insert(&req(i, i, 0)).unwrap();
        }
        assert_eq!(s.try_insert(&req(99, 99, 0)), Err(Stall::QueueFull));
        assert_eq!(s.try_insert(&req(99, 3, 1)), Err(Stall::QueueFull));
        s.check_invariants().unwrap();
    }

    #[test]
    fn set_conflict_leaves_state_intact() {
        let sets = 4;
        let mut s = state(16, sets, 2);
        let p = 3u64;
        s.try_insert(&req(0, p, 0)).unwrap();
        s.try_insert(&req(1, p + sets as u64, 0)).unwrap();
        let before = s.snapshot();
        assert_eq!(s.try_insert(&req(2, p + 2 * sets as u64, 0)), Err(Stall::SetConflict));
        assert_eq!(s.snapshot(), before);
        assert_eq!(s.stats().stalls[Stall::SetConflict as usize], 1);
        // Same set, existing page: still fine.
        s.try_insert(&req(3, p, 1)).unwrap();
        s.check_invariants().unwrap();
    }

    #[test]
    fn pages_drain_whole_in_first_arrival_order() {
        let (a, b) = (1, 2);
        let mut s = state(8, 4, 2);
        for r in [req(0, a, 0), req(1, a, 1), req(2, b, 0)] {
            s.try_insert(&r).unwrap();
        }
        assert_eq!(drain(&mut s), vec![0, 1, 2]);

        // a1, b1, a2: a2 joins page A, which is older than B.
        let mut s = state(8, 4, 2);
        for r in [req(0, a, 0), req(1, b, 0), req(2, a, 1)] {
            s.try_insert(&r).unwrap();
        }
        assert_eq!(drain(&mut s), vec![0, 2, 1]);
        assert!(s.forward().is_none());
        assert!(s.peek().is_none());
    }

    #[test]
    fn draining_page_refuses_appends_until_it_retires() {
        let mut s = state(8, 4, 2);
        s.try_insert(&req(0, 1, 0)).unwrap();
        s.try_insert(&req(1, 1, 1)).unwrap();
        assert_eq!(s.forward().unwrap().seq, 0);
        let before = s.snapshot();
        assert_eq!(s.try_insert(&req(2, 1, 2)), Err(Stall::PageDraining));
        assert_eq!(s.snapshot(), before);
        assert_eq!(s.forward().unwrap().seq, 1);
        // Retired: the page opens a fresh entry.
        s.try_insert(&req(2, 1, 2)).unwrap();
        assert_eq!(s.pages(), 1);
        assert!(!s.page_order().next().unwrap().draining);
        s.check_invariants().unwrap();
    }

    #[test]
    fn slots_are_reused_lowest_first() {
        let mut s = state(4, 4, 2);
        for i in 0..4 {
            s.try_insert(&req(i, i, 0)).unwrap();
        }
        s.forward();
        s.forward();
        s.try_insert(&req(10, 9, 0)).unwrap();
        let snap = s.snapshot();
        assert!(snap.contains("page=0x9 count=1 draining=0 chain=0\n"), "{snap}");
    }

    #[test]
    fn snapshot_format() {
        let mut s = state(8, 4, 2);
        for r in [req(0, 5, 0), req(1, 6, 0), req(2, 5, 1), req(3, 9, 0)] {
            s.try_insert(&r).unwrap();
        }
        s.forward();
        assert_eq!(
            s.snapshot(),
            "mars live=3 capacity=8 pages=3/8\n\
             order 0 set=1 way=0 page=0x5 count=1 draining=1 chain=2\n\
             order 1 set=2 way=0 page=0x6 count=1 draining=0 chain=1\n\
             order 2 set=1 way=1 page=0x9 count=1 draining=0 chain=3\n"
        );
    }

    #[test]
    fn drain_cap_requeues_page() {
        let mut s =
            MarsState::new(MarsConfig { capacity: 16, sets: 4, ways: 2, drain_cap: Some(2), ..MarsConfig::default() })
                .unwrap();
        for r in [req(0, 1, 0), req(1, 1, 1), req(2, 1, 2), req(3, 2, 0)] {
            s.try_insert(&r).unwrap();
        }
        assert_eq!(drain(&mut s), vec![0, 1, 3, 2]);
    }

    #[test]
    fn config_validation() {
        for cfg in [
            MarsConfig { capacity: 0, ..MarsConfig::default() },
            MarsConfig { ways: 0, ..MarsConfig::default() },
            MarsConfig { forward_rate: 0, ..MarsConfig::default() },
            MarsConfig { drain_cap: Some(0), ..MarsConfig::default() },
        ] {
            assert!(MarsState::new(cfg).is_err());
        }
        let d = MarsConfig::default();
        assert_eq!((d.capacity, d.sets, d.ways, d.entries()), (512, 64, 2, 128));
    }
}
